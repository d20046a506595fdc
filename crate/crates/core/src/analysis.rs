//! Human-facing views of an allocation: voting receipts, the score table,
//! portfolio statistics and impact-field alignment.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::POOLED_AGENT;
use crate::model::{AgentKind, Project, ValidatedInstance};
use crate::money::{int, rational_str, Money, Rational};
use crate::result::AllocationResult;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiptKind {
    Individual,
    Field,
    /// The single budget holder of greedy runs.
    Pool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiptLine {
    pub project: String,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentReceipt {
    pub agent: String,
    pub kind: ReceiptKind,
    /// Spend lines in funding order.
    pub lines: Vec<ReceiptLine>,
    pub spent: Money,
    /// Starting bucket, rounded half-even to cents.
    pub initial: Money,
    /// Remaining bucket, rounded half-even to cents.
    pub leftover: Money,
    #[serde(with = "rational_str")]
    pub leftover_exact: Rational,
}

pub fn receipts_for_agent(
    instance: &ValidatedInstance,
    result: &AllocationResult,
    agent: &str,
) -> Result<AgentReceipt, AnalysisError> {
    let balance = result.balance(agent).ok_or_else(|| AnalysisError::UnknownAgent(agent.to_string()))?;
    let kind = match instance.agent(agent).map(|a| a.kind) {
        Some(AgentKind::Individual) => ReceiptKind::Individual,
        Some(AgentKind::Field) => ReceiptKind::Field,
        None if agent == POOLED_AGENT => ReceiptKind::Pool,
        None => return Err(AnalysisError::UnknownAgent(agent.to_string())),
    };
    let lines: Vec<ReceiptLine> = result
        .receipts_of(agent)
        .map(|r| ReceiptLine { project: r.project.clone(), amount: r.amount })
        .collect();
    Ok(AgentReceipt {
        agent: agent.to_string(),
        kind,
        spent: lines.iter().map(|l| l.amount).sum(),
        lines,
        initial: Money::round_half_even(&balance.initial),
        leftover: Money::round_half_even(&balance.leftover),
        leftover_exact: balance.leftover.clone(),
    })
}

/// One row of the outcome table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub project: String,
    pub name: String,
    pub cost: Money,
    #[serde(with = "rational_str")]
    pub individual_points: Rational,
    /// Group points as entered (pre-weighted).
    #[serde(with = "rational_str")]
    pub group_points: Rational,
    #[serde(with = "rational_str")]
    pub score: Rational,
    pub funded: bool,
    /// Rounded receipts paid by individuals.
    pub individual_funding: Money,
    /// Rounded receipts paid by impact fields (or the greedy pool).
    pub group_funding: Money,
}

/// Score is the plain sum of individual and group points; rows are sorted by
/// score, highest first, ties by project id.
pub fn score_table(instance: &ValidatedInstance, result: &AllocationResult) -> Vec<ScoreRow> {
    let funded: HashSet<&str> = result.funded.iter().map(String::as_str).collect();
    let mut individual = vec![Rational::zero(); instance.projects().len()];
    let mut group = vec![Rational::zero(); instance.projects().len()];
    for (agent, project, points) in instance.ballots().iter() {
        let (Some(a), Some(p)) = (instance.agent(agent), instance.project_idx(project)) else { continue };
        match a.kind {
            AgentKind::Individual => individual[p] += points,
            AgentKind::Field => group[p] += points,
        }
    }
    let mut ind_funding = vec![Money::ZERO; instance.projects().len()];
    let mut grp_funding = vec![Money::ZERO; instance.projects().len()];
    for r in &result.receipts {
        let Some(p) = instance.project_idx(&r.project) else { continue };
        match instance.agent(&r.agent).map(|a| a.kind) {
            Some(AgentKind::Individual) => ind_funding[p] += r.amount,
            _ => grp_funding[p] += r.amount,
        }
    }
    let mut rows: Vec<ScoreRow> = instance
        .projects()
        .iter()
        .enumerate()
        .map(|(i, p)| ScoreRow {
            project: p.id.clone(),
            name: p.name.clone(),
            cost: p.cost,
            score: &individual[i] + &group[i],
            individual_points: individual[i].clone(),
            group_points: group[i].clone(),
            funded: funded.contains(p.id.as_str()),
            individual_funding: ind_funding[i],
            group_funding: grp_funding[i],
        })
        .collect();
    rows.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.project.cmp(&b.project)));
    rows
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortfolioStats {
    pub project_count: usize,
    pub total_cost: Money,
    /// `total / count` rounded half-even to cents; zero for an empty set.
    pub mean_cost: Money,
    pub mean_defined: bool,
}

pub fn portfolio_stats(result: &AllocationResult, instance: &ValidatedInstance) -> PortfolioStats {
    let costs: Vec<Money> = result.funded.iter().filter_map(|id| instance.project(id)).map(|p| p.cost).collect();
    stats_from_costs(&costs)
}

pub fn stats_from_costs(costs: &[Money]) -> PortfolioStats {
    let total: Money = costs.iter().copied().sum();
    let count = costs.len();
    let mean_cost = if count == 0 {
        Money::ZERO
    } else {
        Money::round_half_even(&(total.to_rational() / int(count as i64)))
    };
    PortfolioStats { project_count: count, total_cost: total, mean_cost, mean_defined: count > 0 }
}

/// Share of annotation mass per impact field across a funded portfolio.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentProfile {
    pub distribution: BTreeMap<String, Share>,
    /// Sum over funded projects of the number of distinct fields tagged on
    /// each. A coverage count of our own, not a published fulfilment score.
    #[serde(with = "rational_str")]
    pub aggregate_score: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Share(#[serde(with = "rational_str")] pub Rational);

pub fn alignment_profile<'a>(funded: impl IntoIterator<Item = &'a Project>) -> AlignmentProfile {
    let mut mass: BTreeMap<String, Rational> = BTreeMap::new();
    let mut aggregate = Rational::zero();
    for project in funded {
        let tagged = project.annotations.values().filter(|c| **c > 0).count();
        aggregate += int(tagged as i64);
        for (field, count) in &project.annotations {
            *mass.entry(field.clone()).or_insert_with(Rational::zero) += int(*count as i64);
        }
    }
    let total = mass.values().fold(Rational::zero(), |a, b| a + b);
    let distribution = mass
        .into_iter()
        .filter(|(_, m)| m.is_positive())
        .map(|(f, m)| (f, Share(m / &total)))
        .collect();
    AlignmentProfile { distribution, aggregate_score: aggregate }
}

pub fn portfolio_alignment(instance: &ValidatedInstance, result: &AllocationResult) -> AlignmentProfile {
    alignment_profile(result.funded.iter().filter_map(|id| instance.project(id)))
}

/// `agent,project,amount` lines in funding order.
pub fn receipts_csv(result: &AllocationResult) -> String {
    let mut out = String::from("agent,project,amount\n");
    for r in &result.receipts {
        let _ = writeln!(out, "{},{},{}", csv_cell(&r.agent), csv_cell(&r.project), r.amount);
    }
    out
}

/// Receipts nested per agent, every agent of the result included.
pub fn receipts_json(instance: &ValidatedInstance, result: &AllocationResult) -> Vec<AgentReceipt> {
    result
        .balances
        .iter()
        .filter_map(|b| receipts_for_agent(instance, result, &b.agent).ok())
        .collect()
}

pub fn scores_csv(rows: &[ScoreRow]) -> String {
    let mut out = String::from(
        "project,name,cost,individual_points,group_points,score,funded,individual_funding,group_funding\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_cell(&r.project),
            csv_cell(&r.name),
            r.cost,
            crate::money::format_rational(&r.individual_points),
            crate::money::format_rational(&r.group_points),
            crate::money::format_rational(&r.score),
            r.funded,
            r.individual_funding,
            r.group_funding
        );
    }
    out
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
