//! Seeded instance generators and independent reference implementations
//! shared by the integration tests and the acceptance run.
//!
//! The oracles below only read raw inputs (projects, agents, raw points and
//! the scenario config). They never call the engines or the instance's
//! precomputed buckets and utilities.

#![allow(dead_code)]

use std::collections::BTreeMap;

use kes_core::money::{int, rational};
use kes_core::{build_instance, Agent, AgentKind, BallotSet, Money, Normalization, Project, Rational, ScenarioConfig};
use kes_core::ValidatedInstance;
use num_traits::{One, Signed, Zero};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shape limits for random instances.
#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub max_agents: usize,
    pub max_projects: usize,
    pub allow_fields: bool,
}

pub const SMALL: Limits = Limits { max_agents: 10, max_projects: 15, allow_fields: true };
pub const TINY_MES: Limits = Limits { max_agents: 5, max_projects: 6, allow_fields: false };

/// Random instance with costs in 1.00..=100.00, a random split and random
/// point ballots. Some agents cast nothing.
pub fn random_instance(seed: u64, limits: Limits, mode: Normalization) -> ValidatedInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_projects = rng.random_range(1..=limits.max_projects);
    let n_fields = if limits.allow_fields { rng.random_range(0..=3.min(limits.max_agents - 1)) } else { 0 };
    let n_individuals = rng.random_range(1..=limits.max_agents - n_fields);

    let projects: Vec<Project> = (0..n_projects)
        .map(|p| Project::new(format!("p{p:02}"), Money::from_cents(rng.random_range(100..=10_000))))
        .collect();
    let mut agents: Vec<Agent> = (0..n_individuals).map(|i| Agent::individual(format!("i{i}"))).collect();
    agents.extend((0..n_fields).map(|f| Agent::field(format!("f{f}"), int(rng.random_range(1..=20)))));

    let mut ballots = BallotSet::new();
    for agent in &agents {
        if rng.random_bool(0.1) {
            continue;
        }
        let k = rng.random_range(1..=n_projects.min(5));
        for project in projects.choose_multiple(&mut rng, k) {
            ballots.add(&agent.id, &project.id, int(rng.random_range(1..=10))).unwrap();
        }
    }

    let splits = [rational(0, 1), rational(1, 4), rational(1, 3), rational(1, 2), rational(2, 3), rational(1, 1)];
    let split = if n_fields == 0 { Rational::zero() } else { splits[..splits.len() - 1].choose(&mut rng).unwrap().clone() };
    let budget = Money::from_cents(rng.random_range(1_000..=50_000));
    let config = ScenarioConfig::new(budget, split).with_normalization(mode);
    build_instance(projects, agents, ballots, config).expect("generated instance is valid")
}

/// Utilities scaled into [0, 1] straight from the raw points.
pub fn oracle_utilities(inst: &ValidatedInstance) -> Vec<Vec<Rational>> {
    inst.agents()
        .iter()
        .map(|a| {
            let raw: Vec<Rational> = inst.projects().iter().map(|p| inst.ballots().get(&a.id, &p.id)).collect();
            let scale = match inst.config().normalization {
                Normalization::SumShare => raw.iter().fold(Rational::zero(), |s, v| s + v),
                Normalization::MaxScale => raw.iter().max().cloned().unwrap_or_else(Rational::zero),
            };
            if scale.is_zero() {
                vec![Rational::zero(); raw.len()]
            } else {
                raw.iter().map(|v| v / &scale).collect()
            }
        })
        .collect()
}

/// `b_i = (1 - r)B / |I|`, `b_f = rB·w_f / Σw`, weights taken from the config
/// when it names the field.
pub fn oracle_buckets(inst: &ValidatedInstance) -> Vec<Rational> {
    let config = inst.config();
    let budget = config.total_budget.to_rational();
    let r = &config.split_r;
    let weight = |a: &Agent| config.field_weights.get(&a.id).map(|w| w.0.clone()).unwrap_or_else(|| a.weight.clone());
    let individuals = inst.agents().iter().filter(|a| a.kind == AgentKind::Individual).count();
    let weight_sum = inst.agents().iter().filter(|a| a.is_field()).fold(Rational::zero(), |s, a| s + weight(a));
    inst.agents()
        .iter()
        .map(|a| match a.kind {
            AgentKind::Individual => (Rational::one() - r) * &budget / int(individuals as i64),
            AgentKind::Field if weight_sum.is_zero() => Rational::zero(),
            AgentKind::Field => r * &budget * weight(a) / &weight_sum,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleRound {
    pub project: String,
    pub support: Rational,
    /// (agent id, exact payment) for every agent paying a positive amount.
    pub payments: Vec<(String, Rational)>,
}

/// Naive replay of the Equal Shares loop with impact fields: recompute every
/// support from scratch each round, fund the strongest affordable project
/// (ties: lower cost, then smaller id), split its cost in proportion to each
/// agent's term of the support.
pub fn naive_kes(inst: &ValidatedInstance) -> Vec<OracleRound> {
    let u = oracle_utilities(inst);
    let mut b = oracle_buckets(inst);
    let projects = inst.projects();
    let mut funded = vec![false; projects.len()];
    let mut rounds = Vec::new();
    loop {
        let mut best: Option<(usize, Rational)> = None;
        for p in 0..projects.len() {
            if funded[p] {
                continue;
            }
            let mut s = Rational::zero();
            for a in 0..b.len() {
                s += &b[a] * &u[a][p];
            }
            let cost = projects[p].cost.to_rational();
            if !s.is_positive() || cost > s {
                continue;
            }
            let wins = match &best {
                None => true,
                Some((q, sq)) => {
                    s > *sq
                        || (s == *sq
                            && (projects[p].cost < projects[*q].cost
                                || (projects[p].cost == projects[*q].cost && projects[p].id < projects[*q].id)))
                }
            };
            if wins {
                best = Some((p, s));
            }
        }
        let Some((p, s)) = best else { break };
        let cost = projects[p].cost.to_rational();
        let mut payments = Vec::new();
        for a in 0..b.len() {
            let delta = &cost * &b[a] * &u[a][p] / &s;
            if delta.is_positive() {
                b[a] -= &delta;
                payments.push((inst.agents()[a].id.clone(), delta));
            }
        }
        funded[p] = true;
        rounds.push(OracleRound { project: projects[p].id.clone(), support: s, payments });
    }
    rounds
}

/// Minimal `q` with `Σ min(q·u_i, b_i) = cost` by trying every split of the
/// supporters into capped and uncapped sets.
pub fn brute_min_q(cost: &Rational, supporters: &[(Rational, Rational)]) -> Option<Rational> {
    let live: Vec<&(Rational, Rational)> = supporters.iter().filter(|(u, _)| u.is_positive()).collect();
    let available = live.iter().fold(Rational::zero(), |s, (_, b)| s + b);
    if available < *cost {
        return None;
    }
    if !cost.is_positive() {
        return Some(Rational::zero());
    }
    let mut best: Option<Rational> = None;
    for mask in 0u32..(1 << live.len()) {
        let capped = |i: usize| mask & (1 << i) != 0;
        let paid: Rational = (0..live.len()).filter(|&i| capped(i)).fold(Rational::zero(), |s, i| s + &live[i].1);
        let slope: Rational = (0..live.len()).filter(|&i| !capped(i)).fold(Rational::zero(), |s, i| s + &live[i].0);
        let q = if slope.is_zero() {
            if paid != *cost {
                continue;
            }
            // Everyone capped: the smallest q reaching every cap.
            (0..live.len()).map(|i| &live[i].1 / &live[i].0).max().unwrap()
        } else {
            (cost - &paid) / &slope
        };
        if q.is_negative() {
            continue;
        }
        let consistent = (0..live.len()).all(|i| {
            let (u, b) = live[i];
            if capped(i) { &q * u >= *b } else { &q * u <= *b }
        });
        let total = live.iter().fold(Rational::zero(), |s, (u, b)| s + (&q * u).min(b.clone()));
        if consistent && total == *cost && best.as_ref().is_none_or(|x| q < *x) {
            best = Some(q);
        }
    }
    best
}

/// Random `(u, b)` supporter lists for price checks: up to five supporters,
/// small rational utilities and buckets, occasionally zero utilities or
/// exactly-fitting costs.
pub fn random_price_case(rng: &mut ChaCha8Rng) -> (Rational, Vec<(Rational, Rational)>) {
    let n = rng.random_range(1..=5);
    let supporters: Vec<(Rational, Rational)> = (0..n)
        .map(|_| {
            let u = if rng.random_bool(0.1) { Rational::zero() } else { rational(rng.random_range(1..=12), rng.random_range(1..=12)) };
            (u, rational(rng.random_range(0..=5_000), rng.random_range(1..=7)))
        })
        .collect();
    let available = supporters.iter().filter(|(u, _)| u.is_positive()).fold(Rational::zero(), |s, (_, b)| s + b);
    let cost = match rng.random_range(0..4) {
        0 => available.clone(),
        _ => rational(rng.random_range(1..=8_000), rng.random_range(1..=3)),
    };
    (cost, supporters)
}

/// `|a - b| <= 1e-12 · max(|b|, 1 cent)`.
pub fn close(a: &Rational, b: &Rational) -> bool {
    let scale = b.abs().max(Rational::one());
    (a - b).abs() * int(1_000_000_000_000) <= scale
}

/// Exact payments per agent across all rounds.
pub fn spent_by_agent(result: &kes_core::AllocationResult) -> BTreeMap<String, Rational> {
    let mut out = BTreeMap::new();
    for round in &result.rounds {
        for p in &round.payments {
            *out.entry(p.agent.clone()).or_insert_with(Rational::zero) += &p.amount;
        }
    }
    out
}

/// Priceability checks shared by KES and MES results. Returns the first
/// violation found.
pub fn priceability_violation(inst: &ValidatedInstance, result: &kes_core::AllocationResult) -> Option<String> {
    for id in &result.funded {
        let cost = inst.project(id).unwrap().cost;
        let rounded = result.receipts.iter().filter(|r| &r.project == id).fold(Money::ZERO, |s, r| s + r.amount);
        if rounded != cost {
            return Some(format!("receipts for {id} sum to {rounded}, cost {cost}"));
        }
    }
    let spent = spent_by_agent(result);
    for balance in &result.balances {
        let total = spent.get(&balance.agent).cloned().unwrap_or_else(Rational::zero);
        if total > balance.initial {
            return Some(format!("{} spent {} of {}", balance.agent, total, balance.initial));
        }
        if balance.leftover.is_negative() {
            return Some(format!("{} ends negative", balance.agent));
        }
    }
    for round in &result.rounds {
        for p in &round.payments {
            if !p.amount.is_positive() {
                return Some(format!("{} records a non-positive payment", p.agent));
            }
            if !inst.ballots().get(&p.agent, &round.selected).is_positive() {
                return Some(format!("{} pays for {} without utility", p.agent, round.selected));
            }
        }
    }
    let total_cost = result.funded.iter().fold(Money::ZERO, |s, id| s + inst.project(id).unwrap().cost);
    if total_cost > inst.config().total_budget {
        return Some(format!("funded cost {total_cost} exceeds the budget"));
    }
    None
}
