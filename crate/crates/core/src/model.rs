//! Domain model: projects, agents, ballots, scenario configuration and the
//! validated instance every engine runs on.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::{int, rational_str, Money, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("unknown reference `{0}`")]
    UnknownReference(String),
    #[error("project `{0}` has a non-positive cost")]
    NonPositiveCost(String),
    #[error("impact-field weights sum to zero while split_r > 0")]
    WeightSumZero,
    #[error("split_r must lie in [0, 1], got {0}")]
    InvalidSplit(String),
    #[error("negative value `{value}` for {what}")]
    Negative { what: String, value: String },
    #[error("split_r > 0 but the instance has no impact-field agents")]
    NoFieldAgents,
    #[error("split_r < 1 but the instance has no individuals")]
    NoIndividuals,
    #[error("instance needs at least one project and one agent")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub name: String,
    pub cost: Money,
    /// Impact-field tags, field id to tag count.
    #[serde(default)]
    pub annotations: BTreeMap<String, u32>,
}

impl Project {
    pub fn new(id: impl Into<String>, cost: Money) -> Self {
        let id = id.into();
        Project { name: id.clone(), id, cost, annotations: BTreeMap::new() }
    }

    pub fn with_annotations<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = (S, u32)>,
        S: Into<String>,
    {
        for (field, count) in tags {
            *self.annotations.entry(field.into()).or_default() += count;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Individual,
    Field,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agent {
    pub id: String,
    pub kind: AgentKind,
    /// Always one for individuals.
    #[serde(with = "rational_str")]
    pub weight: Rational,
}

impl Agent {
    pub fn individual(id: impl Into<String>) -> Self {
        Agent { id: id.into(), kind: AgentKind::Individual, weight: Rational::one() }
    }

    pub fn field(id: impl Into<String>, weight: Rational) -> Self {
        Agent { id: id.into(), kind: AgentKind::Field, weight }
    }

    pub fn is_field(&self) -> bool {
        self.kind == AgentKind::Field
    }
}

/// Raw point assignments. Absent entries mean zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BallotSet {
    points: BTreeMap<String, BTreeMap<String, Rational>>,
}

impl BallotSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds points to an (agent, project) entry.
    pub fn add(&mut self, agent: &str, project: &str, points: Rational) -> Result<(), ModelError> {
        if points.is_negative() {
            return Err(ModelError::Negative {
                what: format!("points of `{agent}` for `{project}`"),
                value: points.to_string(),
            });
        }
        let slot = self
            .points
            .entry(agent.to_string())
            .or_default()
            .entry(project.to_string())
            .or_insert_with(Rational::zero);
        *slot += points;
        Ok(())
    }

    pub fn with(mut self, agent: &str, project: &str, points: i64) -> Self {
        self.add(agent, project, int(points)).expect("non-negative points");
        self
    }

    pub fn get(&self, agent: &str, project: &str) -> Rational {
        self.points
            .get(agent)
            .and_then(|row| row.get(project))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn agent_row(&self, agent: &str) -> Option<&BTreeMap<String, Rational>> {
        self.points.get(agent)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &Rational)> {
        self.points
            .iter()
            .flat_map(|(a, row)| row.iter().map(move |(p, v)| (a.as_str(), p.as_str(), v)))
    }

    pub fn agents(&self) -> impl Iterator<Item = &str> {
        self.points.keys().map(String::as_str)
    }

    pub fn remove_agent(&mut self, agent: &str) {
        self.points.remove(agent);
    }

    /// Multiplies one agent's whole row by `factor`.
    pub fn scale_agent(&mut self, agent: &str, factor: &Rational) {
        if let Some(row) = self.points.get_mut(agent) {
            for v in row.values_mut() {
                *v *= factor;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Points divided by the agent's point total.
    #[default]
    SumShare,
    /// Points divided by the agent's largest single allocation.
    MaxScale,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Strongest support first, then lower cost, then smaller project id.
    #[default]
    LowestCostThenId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub total_budget: Money,
    /// Fraction of the budget endowed to impact fields.
    #[serde(with = "rational_str")]
    pub split_r: Rational,
    /// Field weights; entries override the weight carried by the agent.
    #[serde(default)]
    pub field_weights: BTreeMap<String, WeightValue>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub tie_break: TieBreak,
    /// Group points were entered already scaled by field weight.
    #[serde(default = "default_true")]
    pub points_preweighted: bool,
}

fn default_true() -> bool {
    true
}

/// Serializable wrapper so weight maps can carry exact rationals.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightValue(#[serde(with = "rational_str")] pub Rational);

impl ScenarioConfig {
    pub fn new(total_budget: Money, split_r: Rational) -> Self {
        ScenarioConfig {
            total_budget,
            split_r,
            field_weights: BTreeMap::new(),
            normalization: Normalization::default(),
            tie_break: TieBreak::default(),
            points_preweighted: true,
        }
    }

    pub fn with_weights<I, S>(mut self, weights: I) -> Self
    where
        I: IntoIterator<Item = (S, Rational)>,
        S: Into<String>,
    {
        self.field_weights = weights.into_iter().map(|(k, v)| (k.into(), WeightValue(v))).collect();
        self
    }

    pub fn with_normalization(mut self, mode: Normalization) -> Self {
        self.normalization = mode;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.split_r.is_negative() || self.split_r > Rational::one() {
            return Err(ModelError::InvalidSplit(crate::money::format_rational(&self.split_r)));
        }
        if self.total_budget.cents() < 0 {
            return Err(ModelError::Negative { what: "total budget".into(), value: self.total_budget.to_string() });
        }
        for (field, w) in &self.field_weights {
            if w.0.is_negative() {
                return Err(ModelError::Negative { what: format!("weight of `{field}`"), value: w.0.to_string() });
            }
        }
        Ok(())
    }
}

/// Utilities scaled into [0, 1], keyed by agent then project. Zero entries
/// are omitted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormalizedBallots {
    rows: BTreeMap<String, BTreeMap<String, Rational>>,
}

impl NormalizedBallots {
    pub fn get(&self, agent: &str, project: &str) -> Rational {
        self.rows
            .get(agent)
            .and_then(|r| r.get(project))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn row(&self, agent: &str) -> Option<&BTreeMap<String, Rational>> {
        self.rows.get(agent)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &Rational)> {
        self.rows
            .iter()
            .flat_map(|(a, row)| row.iter().map(move |(p, v)| (a.as_str(), p.as_str(), v)))
    }
}

pub fn normalize_utilities(ballots: &BallotSet, mode: Normalization) -> NormalizedBallots {
    let mut rows = BTreeMap::new();
    for (agent, row) in &ballots.points {
        let scale = match mode {
            Normalization::SumShare => row.values().fold(Rational::zero(), |acc, v| acc + v),
            Normalization::MaxScale => row.values().max().cloned().unwrap_or_else(Rational::zero),
        };
        if scale.is_zero() {
            continue;
        }
        let normalized: BTreeMap<String, Rational> = row
            .iter()
            .filter(|(_, v)| !v.is_zero())
            .map(|(p, v)| (p.clone(), v / &scale))
            .collect();
        rows.insert(agent.clone(), normalized);
    }
    NormalizedBallots { rows }
}

/// Payments are kept on a grid of `10^-LEDGER_DIGITS` cents (refined by the
/// bucket denominators).
pub const LEDGER_DIGITS: usize = 12;

/// A cross-checked instance with resolved indices and initial buckets.
///
/// Agents and projects are addressed by their position; all per-agent and
/// per-project vectors share that indexing.
#[derive(Debug, Clone)]
pub struct ValidatedInstance {
    projects: Vec<Project>,
    agents: Vec<Agent>,
    ballots: BallotSet,
    normalized: NormalizedBallots,
    config: ScenarioConfig,
    buckets: Vec<Rational>,
    /// Per project: (agent index, normalized utility) for every û > 0.
    supporters: Vec<Vec<(usize, Rational)>>,
    /// Per agent: (project index, normalized utility) for every û > 0.
    rows: Vec<Vec<(usize, Rational)>>,
    ledger_denominator: BigInt,
    project_index: HashMap<String, usize>,
    agent_index: HashMap<String, usize>,
}

impl ValidatedInstance {
    pub fn projects(&self) -> &[Project] {
        &self.projects
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn ballots(&self) -> &BallotSet {
        &self.ballots
    }

    pub fn normalized(&self) -> &NormalizedBallots {
        &self.normalized
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn initial_buckets(&self) -> &[Rational] {
        &self.buckets
    }

    pub fn supporters(&self, project: usize) -> &[(usize, Rational)] {
        &self.supporters[project]
    }

    pub fn supported_by(&self, agent: usize) -> &[(usize, Rational)] {
        &self.rows[agent]
    }

    /// Denominator of the payment grid: every bucket and every payment is an
    /// integer multiple of `1 / ledger_denominator` cents.
    pub fn ledger_denominator(&self) -> &BigInt {
        &self.ledger_denominator
    }

    pub fn project_idx(&self, id: &str) -> Option<usize> {
        self.project_index.get(id).copied()
    }

    pub fn agent_idx(&self, id: &str) -> Option<usize> {
        self.agent_index.get(id).copied()
    }

    pub fn project(&self, id: &str) -> Option<&Project> {
        self.project_idx(id).map(|i| &self.projects[i])
    }

    pub fn agent(&self, id: &str) -> Option<&Agent> {
        self.agent_idx(id).map(|i| &self.agents[i])
    }

    pub fn bucket_of(&self, agent_id: &str) -> Option<&Rational> {
        self.agent_idx(agent_id).map(|i| &self.buckets[i])
    }

    pub fn has_fields(&self) -> bool {
        self.agents.iter().any(Agent::is_field)
    }

    /// Rebuilds the instance under a different configuration.
    pub fn reconfigure(&self, config: ScenarioConfig) -> Result<ValidatedInstance, ModelError> {
        build_instance(self.projects.clone(), self.agents.clone(), self.ballots.clone(), config)
    }
}

/// Validates cross references and computes the initial buckets
/// `b_i = (1 - r)·B / |I|` and `b_f = r·B·w_f / Σw`.
pub fn build_instance(
    projects: Vec<Project>,
    agents: Vec<Agent>,
    ballots: BallotSet,
    config: ScenarioConfig,
) -> Result<ValidatedInstance, ModelError> {
    if projects.is_empty() || agents.is_empty() {
        return Err(ModelError::Empty);
    }
    config.validate()?;

    let mut project_index = HashMap::with_capacity(projects.len());
    for (i, p) in projects.iter().enumerate() {
        if p.cost.cents() <= 0 {
            return Err(ModelError::NonPositiveCost(p.id.clone()));
        }
        if project_index.insert(p.id.clone(), i).is_some() {
            return Err(ModelError::DuplicateId(p.id.clone()));
        }
    }

    let mut agents = agents;
    let mut agent_index = HashMap::with_capacity(agents.len());
    for (i, a) in agents.iter().enumerate() {
        if agent_index.insert(a.id.clone(), i).is_some() {
            return Err(ModelError::DuplicateId(a.id.clone()));
        }
    }
    for field in config.field_weights.keys() {
        match agent_index.get(field) {
            Some(&i) if agents[i].is_field() => {}
            _ => return Err(ModelError::UnknownReference(field.clone())),
        }
    }
    for agent in agents.iter_mut() {
        match agent.kind {
            AgentKind::Individual => agent.weight = Rational::one(),
            AgentKind::Field => {
                if let Some(w) = config.field_weights.get(&agent.id) {
                    agent.weight = w.0.clone();
                }
                if agent.weight.is_negative() {
                    return Err(ModelError::Negative {
                        what: format!("weight of `{}`", agent.id),
                        value: agent.weight.to_string(),
                    });
                }
            }
        }
    }

    for (agent, project, _) in ballots.iter() {
        if !agent_index.contains_key(agent) {
            return Err(ModelError::UnknownReference(agent.to_string()));
        }
        if !project_index.contains_key(project) {
            return Err(ModelError::UnknownReference(project.to_string()));
        }
    }

    let individuals = agents.iter().filter(|a| !a.is_field()).count();
    let field_count = agents.len() - individuals;
    let weight_sum = agents
        .iter()
        .filter(|a| a.is_field())
        .fold(Rational::zero(), |acc, a| acc + &a.weight);
    let r = &config.split_r;
    let budget = config.total_budget.to_rational();
    if r.is_positive() {
        if field_count == 0 {
            return Err(ModelError::NoFieldAgents);
        }
        if weight_sum.is_zero() {
            return Err(ModelError::WeightSumZero);
        }
    }
    let individual_pool = (Rational::one() - r) * &budget;
    if individual_pool.is_positive() && individuals == 0 {
        return Err(ModelError::NoIndividuals);
    }
    let field_pool = r * &budget;

    let buckets: Vec<Rational> = agents
        .iter()
        .map(|a| match a.kind {
            AgentKind::Individual => &individual_pool / int(individuals as i64),
            AgentKind::Field if weight_sum.is_zero() => Rational::zero(),
            AgentKind::Field => &field_pool * &a.weight / &weight_sum,
        })
        .collect();

    let normalized = normalize_utilities(&ballots, config.normalization);
    let mut supporters = vec![Vec::new(); projects.len()];
    for (agent, project, u) in normalized.iter() {
        supporters[project_index[project]].push((agent_index[agent], u.clone()));
    }
    for list in supporters.iter_mut() {
        list.sort_by_key(|(a, _)| *a);
    }
    let mut rows = vec![Vec::new(); agents.len()];
    for (p, list) in supporters.iter().enumerate() {
        for (a, u) in list {
            rows[*a].push((p, u.clone()));
        }
    }
    let ledger_denominator = buckets
        .iter()
        .fold(num_traits::pow(BigInt::from(10), LEDGER_DIGITS), |acc, b| acc.lcm(b.denom()));

    Ok(ValidatedInstance {
        projects,
        agents,
        ballots,
        normalized,
        config,
        buckets,
        supporters,
        rows,
        ledger_denominator,
        project_index,
        agent_index,
    })
}
