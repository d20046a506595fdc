//! Komitee Equal Shares: individuals and weighted impact-field agents spend
//! their buckets on the most strongly supported affordable project until no
//! project can be afforded.
//!
//! Support for a project is `S(p) = Σ_a b_a · û_a(p)` over every agent,
//! individuals and fields alike. A project is affordable when `S(p) > 0` and
//! `cost ≤ S(p)`; the winner's bill is split in proportion to each agent's
//! term of that sum, so no agent ever pays more than its bucket.

use std::cmp::Ordering;

use num_traits::{Signed, Zero};

use crate::model::ValidatedInstance;
use crate::money::Rational;
use crate::result::{apportion, AllocationResult, ResultBuilder};

/// Current support for `project` given the agents' remaining buckets.
pub fn compute_support(instance: &ValidatedInstance, buckets: &[Rational], project: usize) -> Rational {
    instance
        .supporters(project)
        .iter()
        .fold(Rational::zero(), |acc, (agent, u)| acc + &buckets[*agent] * u)
}

/// Unfunded projects whose support is positive and covers their cost,
/// paired with that support.
pub fn affordable_set(instance: &ValidatedInstance, buckets: &[Rational], funded: &[bool]) -> Vec<(usize, Rational)> {
    (0..instance.projects().len())
        .filter(|&p| !funded[p])
        .filter_map(|p| {
            let support = compute_support(instance, buckets, p);
            let cost = instance.projects()[p].cost.to_rational();
            (support.is_positive() && cost <= support).then_some((p, support))
        })
        .collect()
}

/// Ordering used to pick among affordable projects: larger support first,
/// then lower cost, then the lexicographically smaller id.
pub(crate) fn priority(instance: &ValidatedInstance, a: (usize, &Rational), b: (usize, &Rational)) -> Ordering {
    let (pa, pb) = (&instance.projects()[a.0], &instance.projects()[b.0]);
    b.1.cmp(a.1).then(pa.cost.cmp(&pb.cost)).then_with(|| pa.id.cmp(&pb.id))
}

/// Picks the strongest-supported project out of a non-empty affordable set.
pub fn select_next(affordable: &[(usize, Rational)], instance: &ValidatedInstance) -> Option<usize> {
    affordable
        .iter()
        .min_by(|a, b| priority(instance, (a.0, &a.1), (b.0, &b.1)))
        .map(|(p, _)| *p)
}

/// Exact payments produced by funding one project.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FundedRound {
    pub project: usize,
    pub support: Rational,
    /// (agent index, exact cents) for every agent that paid, in agent order.
    pub payments: Vec<(usize, Rational)>,
}

/// Splits the cost of `project` in proportion to `b_a · û_a(p)` and deducts
/// the shares from the buckets.
///
/// Shares are apportioned onto the instance's ledger grid: they still sum to
/// the cost exactly, each lies within one grid unit of its proportional
/// value and none exceeds the payer's bucket. Without the grid the bucket
/// denominators compound from round to round.
pub fn fund(instance: &ValidatedInstance, buckets: &mut [Rational], project: usize) -> FundedRound {
    let support = compute_support(instance, buckets, project);
    debug_assert!(support.is_positive());
    let cost = instance.projects()[project].cost.to_rational();
    let grid = Rational::from_integer(instance.ledger_denominator().clone());
    let mut payers = Vec::new();
    let mut scaled = Vec::new();
    for (agent, u) in instance.supporters(project) {
        let term = &buckets[*agent] * u;
        if term.is_zero() {
            continue;
        }
        payers.push(*agent);
        scaled.push(&cost * term / &support * &grid);
    }
    let total = (&cost * &grid).to_integer();
    let units = apportion(&total, &scaled);
    let mut payments = Vec::with_capacity(payers.len());
    for (agent, n) in payers.into_iter().zip(units) {
        if n.is_zero() {
            continue;
        }
        let share = Rational::from_integer(n) / &grid;
        buckets[agent] -= &share;
        debug_assert!(!buckets[agent].is_negative());
        payments.push((agent, share));
    }
    FundedRound { project, support, payments }
}

pub fn run_kes(instance: &ValidatedInstance) -> AllocationResult {
    let mut buckets = instance.initial_buckets().to_vec();
    let mut funded = vec![false; instance.projects().len()];
    let mut support: Vec<Rational> =
        (0..instance.projects().len()).map(|p| compute_support(instance, &buckets, p)).collect();
    let mut builder = ResultBuilder::new(
        instance.agents().iter().map(|a| a.id.as_str()).collect(),
        buckets.clone(),
        instance.config().total_budget,
    );
    loop {
        let affordable: Vec<(usize, Rational)> = (0..support.len())
            .filter(|&p| !funded[p] && support[p].is_positive())
            .filter(|&p| instance.projects()[p].cost.to_rational() <= support[p])
            .map(|p| (p, support[p].clone()))
            .collect();
        let Some(next) = select_next(&affordable, instance) else { break };
        let round = fund(instance, &mut buckets, next);
        funded[next] = true;
        // Only projects backed by a payer change support.
        for (agent, paid) in &round.payments {
            for (q, u) in instance.supported_by(*agent) {
                support[*q] -= paid * u;
            }
        }
        let project = &instance.projects()[next];
        builder.record(&project.id, project.cost, round.support, None, round.payments);
    }
    builder.finish(buckets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, Agent, BallotSet, Project, ScenarioConfig};
    use crate::money::{int, rational, Money};

    fn walkthrough() -> ValidatedInstance {
        build_instance(
            vec![Project::new("A", Money::from_units(60)), Project::new("B", Money::from_units(40))],
            vec![Agent::individual("i1"), Agent::individual("i2"), Agent::field("f", int(1))],
            BallotSet::new().with("i1", "A", 10).with("i2", "B", 10).with("f", "A", 5).with("f", "B", 5),
            ScenarioConfig::new(Money::from_units(100), rational(1, 2)),
        )
        .unwrap()
    }

    #[test]
    fn support_examples() {
        let inst = walkthrough();
        let mut buckets = inst.initial_buckets().to_vec();
        // i1: 25.00·1 + f: 50.00·0.5
        assert_eq!(compute_support(&inst, &buckets, 0), int(5000));
        buckets[0] = int(500);
        assert_eq!(compute_support(&inst, &buckets, 0), int(3000));
    }

    #[test]
    fn unsupported_project_has_zero_support() {
        let inst = build_instance(
            vec![Project::new("A", Money::from_units(1)), Project::new("Z", Money::from_units(1))],
            vec![Agent::individual("i")],
            BallotSet::new().with("i", "A", 1),
            ScenarioConfig::new(Money::from_units(10), Rational::zero()),
        )
        .unwrap();
        assert!(compute_support(&inst, inst.initial_buckets(), 1).is_zero());
        assert_eq!(affordable_set(&inst, inst.initial_buckets(), &[false, false]).len(), 1);
    }

    #[test]
    fn affordability_in_walkthrough() {
        let inst = walkthrough();
        let aff = affordable_set(&inst, inst.initial_buckets(), &[false, false]);
        assert_eq!(aff, vec![(1, int(5000))]);
        let zero = vec![Rational::zero(); 3];
        assert!(affordable_set(&inst, &zero, &[false, false]).is_empty());
    }

    #[test]
    fn selection_tie_breaks() {
        let inst = build_instance(
            vec![
                Project::new("Y", Money::from_units(40)),
                Project::new("X", Money::from_units(30)),
                Project::new("a2", Money::from_units(30)),
                Project::new("a1", Money::from_units(30)),
            ],
            vec![Agent::individual("i")],
            BallotSet::new(),
            ScenarioConfig::new(Money::from_units(10), Rational::zero()),
        )
        .unwrap();
        assert_eq!(select_next(&[(0, int(5000))], &inst), Some(0));
        assert_eq!(select_next(&[(0, int(5000)), (1, int(5000))], &inst), Some(1));
        assert_eq!(select_next(&[(2, int(5000)), (3, int(5000))], &inst), Some(3));
        assert_eq!(select_next(&[(0, int(6000)), (1, int(5000))], &inst), Some(0));
        assert_eq!(select_next(&[], &inst), None);
    }

    #[test]
    fn walkthrough_replay() {
        let inst = walkthrough();
        let result = run_kes(&inst);
        assert_eq!(result.funded, vec!["B"]);
        let round = &result.rounds[0];
        assert_eq!(round.support, int(5000));
        let pays: Vec<(&str, Rational)> = round.payments.iter().map(|p| (p.agent.as_str(), p.amount.clone())).collect();
        assert_eq!(pays, vec![("i2", int(2000)), ("f", int(2000))]);
        let left: Vec<Rational> = result.balances.iter().map(|b| b.leftover.clone()).collect();
        assert_eq!(left, vec![int(2500), int(500), int(3000)]);
        assert_eq!(result.leftover_total(), Money::from_units(60));
        let receipts: Vec<(&str, &str, Money)> =
            result.receipts.iter().map(|r| (r.agent.as_str(), r.project.as_str(), r.amount)).collect();
        assert_eq!(receipts, vec![("i2", "B", Money::from_units(20)), ("f", "B", Money::from_units(20))]);
    }

    #[test]
    fn sole_supporter_pays_full_cost() {
        let inst = build_instance(
            vec![Project::new("A", Money::from_units(30))],
            vec![Agent::individual("i")],
            BallotSet::new().with("i", "A", 3),
            ScenarioConfig::new(Money::from_units(50), Rational::zero()),
        )
        .unwrap();
        let r = run_kes(&inst);
        assert_eq!(r.receipts[0].amount, Money::from_units(30));
        assert_eq!(r.balances[0].leftover, int(2000));
    }

    #[test]
    fn equal_terms_split_evenly() {
        let inst = build_instance(
            vec![Project::new("A", Money::from_units(30))],
            vec![Agent::individual("i"), Agent::individual("j")],
            BallotSet::new().with("i", "A", 3).with("j", "A", 7),
            ScenarioConfig::new(Money::from_units(100), Rational::zero()),
        )
        .unwrap();
        let r = run_kes(&inst);
        assert_eq!(r.rounds[0].payments[0].amount, int(1500));
        assert_eq!(r.rounds[0].payments[1].amount, int(1500));
    }

    #[test]
    fn unconstrained_budget_funds_every_supported_project() {
        let inst = build_instance(
            vec![
                Project::new("A", Money::from_units(10)),
                Project::new("B", Money::from_units(20)),
                Project::new("C", Money::from_units(30)),
                Project::new("D", Money::from_units(5)),
            ],
            vec![Agent::individual("i"), Agent::individual("j")],
            BallotSet::new().with("i", "A", 1).with("i", "B", 1).with("j", "C", 1),
            ScenarioConfig::new(Money::from_units(1_000_000), Rational::zero()),
        )
        .unwrap();
        let r = run_kes(&inst);
        let mut funded = r.funded.clone();
        funded.sort();
        assert_eq!(funded, vec!["A", "B", "C"]);
    }
}
