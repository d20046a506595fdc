mod support;

use kes_core::kes::run_kes;
use kes_core::money::int;
use kes_core::{build_instance, AllocationResult, BallotSet, Normalization, Rational, ValidatedInstance};
use num_traits::Zero;
use proptest::prelude::*;
use support::{random_instance, SMALL};

fn with_split_zero(inst: &ValidatedInstance) -> ValidatedInstance {
    let mut config = inst.config().clone();
    config.split_r = Rational::zero();
    inst.reconfigure(config).unwrap()
}

fn without_field_ballots(inst: &ValidatedInstance) -> ValidatedInstance {
    let mut ballots: BallotSet = inst.ballots().clone();
    for agent in inst.agents().iter().filter(|a| a.is_field()) {
        ballots.remove_agent(&agent.id);
    }
    build_instance(inst.projects().to_vec(), inst.agents().to_vec(), ballots, inst.config().clone()).unwrap()
}

fn scaled(inst: &ValidatedInstance, agent: &str, factor: &Rational) -> ValidatedInstance {
    let mut ballots = inst.ballots().clone();
    ballots.scale_agent(agent, factor);
    build_instance(inst.projects().to_vec(), inst.agents().to_vec(), ballots, inst.config().clone()).unwrap()
}

fn exact_payments(result: &AllocationResult) -> Vec<Vec<(String, Rational)>> {
    result.rounds.iter().map(|r| r.payments.iter().map(|p| (p.agent.clone(), p.amount.clone())).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn zero_split_fields_pay_nothing(seed in any::<u64>()) {
        let inst = with_split_zero(&random_instance(seed, SMALL, Normalization::SumShare));
        let result = run_kes(&inst);
        for round in &result.rounds {
            for p in &round.payments {
                prop_assert!(!inst.agent(&p.agent).unwrap().is_field());
            }
        }
        let stripped = run_kes(&without_field_ballots(&inst));
        prop_assert_eq!(&result.funded, &stripped.funded);
        prop_assert_eq!(exact_payments(&result), exact_payments(&stripped));
    }

    #[test]
    fn scaling_one_agent_changes_nothing(seed in any::<u64>(), num in 1i64..50, den in 1i64..50, pick in any::<prop::sample::Index>()) {
        let inst = random_instance(seed, SMALL, Normalization::SumShare);
        let agent = pick.get(inst.agents()).id.clone();
        let factor = Rational::new(num.into(), den.into());
        let base = run_kes(&inst);
        let other = run_kes(&scaled(&inst, &agent, &factor));
        prop_assert_eq!(&base.funded, &other.funded);
        prop_assert_eq!(exact_payments(&base), exact_payments(&other));
    }

    #[test]
    fn max_scale_is_scale_invariant_too(seed in any::<u64>(), num in 1i64..50) {
        let inst = random_instance(seed, SMALL, Normalization::MaxScale);
        let agent = inst.agents()[0].id.clone();
        let base = run_kes(&inst);
        let other = run_kes(&scaled(&inst, &agent, &int(num)));
        prop_assert_eq!(base, other);
    }
}

#[test]
fn zero_split_matches_individual_only_buckets() {
    for seed in 0..100 {
        let inst = with_split_zero(&random_instance(seed, SMALL, Normalization::SumShare));
        for (agent, bucket) in inst.agents().iter().zip(inst.initial_buckets()) {
            if agent.is_field() {
                assert!(bucket.is_zero());
            }
        }
    }
}
