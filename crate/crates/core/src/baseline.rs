//! Reference rules: classic Method of Equal Shares and greedy point ranking.

use std::cmp::Ordering;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::model::{AgentKind, ValidatedInstance};
use crate::money::{int, Money, Rational};
use crate::result::{AllocationResult, ResultBuilder};

/// Agent id that greedy receipts are attributed to.
pub const POOLED_AGENT: &str = "pool";

/// Smallest `q ≥ 0` with `Σ min(q·u_i, b_i) = cost`, or `None` when the
/// supporters' buckets cannot cover the cost.
///
/// `supporters` holds `(u_i, b_i)` pairs; entries with `u_i = 0` are ignored.
/// The capped sum is piecewise linear with breakpoints at `b_i / u_i`, so the
/// root is found exactly by walking the breakpoints in order.
pub fn min_q_affordable(cost: &Rational, supporters: &[(Rational, Rational)]) -> Option<Rational> {
    let mut active: Vec<(Rational, &Rational, &Rational)> = supporters
        .iter()
        .filter(|(u, _)| u.is_positive())
        .map(|(u, b)| (b / u, u, b))
        .collect();
    let available = active.iter().fold(Rational::zero(), |acc, (_, _, b)| acc + *b);
    if available < *cost {
        return None;
    }
    if !cost.is_positive() {
        return Some(Rational::zero());
    }
    active.sort_by(|a, b| a.0.cmp(&b.0));
    let mut capped = Rational::zero();
    let mut slope = active.iter().fold(Rational::zero(), |acc, (_, u, _)| acc + *u);
    for (breakpoint, u, b) in &active {
        if &capped + breakpoint * &slope >= *cost {
            return Some((cost - &capped) / &slope);
        }
        capped += *b;
        slope -= *u;
    }
    unreachable!("available money covers the cost, so the last breakpoint reaches it")
}

/// Classic MES over the individuals: every voter starts with `B / n`, the
/// project affordable at the lowest price is bought and each supporter pays
/// `min(q·û_i(p), b_i)`. Impact-field agents are ignored.
pub fn run_mes(instance: &ValidatedInstance) -> AllocationResult {
    let individuals: Vec<usize> = instance
        .agents()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.kind == AgentKind::Individual)
        .map(|(i, _)| i)
        .collect();
    let budget = instance.config().total_budget;
    let mut buckets = vec![Rational::zero(); instance.agents().len()];
    if !individuals.is_empty() {
        let share = budget.to_rational() / int(individuals.len() as i64);
        for &i in &individuals {
            buckets[i] = share.clone();
        }
    }
    let is_individual: Vec<bool> = instance.agents().iter().map(|a| a.kind == AgentKind::Individual).collect();
    let mut builder = ResultBuilder::new(
        instance.agents().iter().map(|a| a.id.as_str()).collect(),
        buckets.clone(),
        budget,
    );
    let mut funded = vec![false; instance.projects().len()];

    loop {
        let mut best: Option<(usize, Rational)> = None;
        for (p, project) in instance.projects().iter().enumerate() {
            if funded[p] {
                continue;
            }
            let supporters: Vec<(Rational, Rational)> = instance
                .supporters(p)
                .iter()
                .filter(|(a, _)| is_individual[*a])
                .map(|(a, u)| (u.clone(), buckets[*a].clone()))
                .collect();
            let Some(q) = min_q_affordable(&project.cost.to_rational(), &supporters) else { continue };
            let better = match &best {
                None => true,
                Some((bp, bq)) => {
                    let other = &instance.projects()[*bp];
                    q.cmp(bq)
                        .then(project.cost.cmp(&other.cost))
                        .then_with(|| project.id.cmp(&other.id))
                        == Ordering::Less
                }
            };
            if better {
                best = Some((p, q));
            }
        }
        let Some((p, q)) = best else { break };
        let project = &instance.projects()[p];
        let mut support = Rational::zero();
        let mut payments = Vec::new();
        for (a, u) in instance.supporters(p) {
            if !is_individual[*a] {
                continue;
            }
            support += &buckets[*a];
            let pay = (&q * u).min(buckets[*a].clone());
            if pay.is_zero() {
                continue;
            }
            buckets[*a] -= &pay;
            payments.push((*a, pay));
        }
        funded[p] = true;
        builder.record(&project.id, project.cost, support, Some(q), payments);
    }
    builder.finish(buckets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    IndividualOnly,
    GroupOnly,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyWalk {
    /// Skip projects that do not fit and keep walking the ranking.
    #[default]
    SkipAndContinue,
    /// Stop at the first project that does not fit.
    StopAtFirstFailure,
}

/// Total raw points per project from one channel's agents.
pub fn channel_points(instance: &ValidatedInstance, channel: Channel) -> Vec<Rational> {
    let wanted = match channel {
        Channel::IndividualOnly => AgentKind::Individual,
        Channel::GroupOnly => AgentKind::Field,
    };
    let mut totals = vec![Rational::zero(); instance.projects().len()];
    for (agent, project, points) in instance.ballots().iter() {
        let kind = instance.agent(agent).map(|a| a.kind);
        if kind == Some(wanted) {
            if let Some(p) = instance.project_idx(project) {
                totals[p] += points;
            }
        }
    }
    totals
}

/// Funds projects in descending channel-point order while they fit the
/// remaining budget. Projects without points are never funded. The whole
/// budget is held by a single pooled agent.
pub fn run_greedy(instance: &ValidatedInstance, channel: Channel, walk: GreedyWalk) -> AllocationResult {
    let points = channel_points(instance, channel);
    let projects = instance.projects();
    let mut ranking: Vec<usize> = (0..projects.len()).filter(|&p| points[p].is_positive()).collect();
    ranking.sort_by(|&a, &b| {
        points[b]
            .cmp(&points[a])
            .then(projects[a].cost.cmp(&projects[b].cost))
            .then_with(|| projects[a].id.cmp(&projects[b].id))
    });

    let budget = instance.config().total_budget;
    let mut builder = ResultBuilder::new(vec![POOLED_AGENT], vec![budget.to_rational()], budget);
    let mut remaining = budget;
    for p in ranking {
        let cost = projects[p].cost;
        match remaining.checked_sub(cost) {
            Some(rest) => {
                builder.record(&projects[p].id, cost, remaining.to_rational(), None, vec![(0, cost.to_rational())]);
                remaining = rest;
            }
            None if walk == GreedyWalk::StopAtFirstFailure => break,
            None => {}
        }
    }
    builder.finish(vec![remaining.to_rational()])
}

/// Convenience: total cost of a list of funded ids.
pub fn funded_cost(instance: &ValidatedInstance, funded: &[String]) -> Money {
    funded.iter().filter_map(|id| instance.project(id)).map(|p| p.cost).sum()
}
