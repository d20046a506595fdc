//! Allocation results, round logs and cent-exact receipts.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::money::{rational_str, Money, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payment {
    pub agent: String,
    #[serde(with = "rational_str")]
    pub amount: Rational,
}

/// One iteration of an allocation loop. Monetary rationals are in cents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    pub selected: String,
    /// Money backing the selected project when it was chosen: S(p*) for the
    /// Equal Shares loop, supporters' remaining buckets for MES, and the
    /// remaining pool for greedy runs.
    #[serde(with = "rational_str")]
    pub support: Rational,
    /// Price per unit of utility (MES only).
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_rational")]
    pub price: Option<Rational>,
    pub payments: Vec<Payment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub agent: String,
    pub project: String,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Balance {
    pub agent: String,
    #[serde(with = "rational_str")]
    pub initial: Rational,
    #[serde(with = "rational_str")]
    pub leftover: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub total_budget: Money,
    /// Funded project ids in funding order.
    pub funded: Vec<String>,
    /// Rounded receipts, grouped by project in funding order.
    pub receipts: Vec<Receipt>,
    pub balances: Vec<Balance>,
    pub rounds: Vec<RoundRecord>,
}

impl AllocationResult {
    pub fn balance(&self, agent: &str) -> Option<&Balance> {
        self.balances.iter().find(|b| b.agent == agent)
    }

    pub fn receipts_of<'a>(&'a self, agent: &'a str) -> impl Iterator<Item = &'a Receipt> + 'a {
        self.receipts.iter().filter(move |r| r.agent == agent)
    }

    /// Sum of rounded receipts per funded project.
    pub fn receipt_totals(&self) -> BTreeMap<&str, Money> {
        let mut totals = BTreeMap::new();
        for r in &self.receipts {
            *totals.entry(r.project.as_str()).or_insert(Money::ZERO) += r.amount;
        }
        totals
    }

    /// Total leftover across agents, rounded half-even to cents.
    pub fn leftover_total(&self) -> Money {
        let sum = self.balances.iter().fold(Rational::zero(), |acc, b| acc + &b.leftover);
        Money::round_half_even(&sum)
    }
}

/// Rounds exact cent payments so that they sum to `cost` exactly.
///
/// Every payment is floored, then the missing cents go to the largest
/// fractional remainders; equal remainders favour the earlier entry.
pub fn largest_remainder(cost: Money, exact: &[Rational]) -> Vec<Money> {
    apportion(&BigInt::from(cost.cents()), exact)
        .into_iter()
        .map(|c| Money::from_cents(c.to_i64().expect("money overflow")))
        .collect()
}

/// Integer apportionment of `total` among exact shares summing to it:
/// floors first, then one unit each to the largest remainders (earlier
/// entries win ties).
pub fn apportion(total: &BigInt, exact: &[Rational]) -> Vec<BigInt> {
    let mut floors: Vec<BigInt> = exact.iter().map(|x| x.floor().to_integer()).collect();
    let assigned = floors.iter().fold(BigInt::zero(), |acc, f| acc + f);
    let missing = (total - assigned).to_usize().expect("shares must sum to the total");
    debug_assert!(missing <= exact.len());
    let remainders: Vec<Rational> = exact.iter().map(|x| x - x.floor()).collect();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    for &i in order.iter().take(missing) {
        floors[i] += 1;
    }
    floors
}

/// Accumulates rounds and receipts while an engine runs.
pub(crate) struct ResultBuilder<'a> {
    agent_ids: Vec<&'a str>,
    initial: Vec<Rational>,
    total_budget: Money,
    funded: Vec<String>,
    receipts: Vec<Receipt>,
    rounds: Vec<RoundRecord>,
}

impl<'a> ResultBuilder<'a> {
    pub(crate) fn new(agent_ids: Vec<&'a str>, initial: Vec<Rational>, total_budget: Money) -> Self {
        ResultBuilder { agent_ids, initial, total_budget, funded: Vec::new(), receipts: Vec::new(), rounds: Vec::new() }
    }

    /// `payments` holds (agent index, exact cents) pairs in agent order and
    /// must sum to `cost`.
    pub(crate) fn record(
        &mut self,
        project: &str,
        cost: Money,
        support: Rational,
        price: Option<Rational>,
        payments: Vec<(usize, Rational)>,
    ) {
        let exact: Vec<Rational> = payments.iter().map(|(_, x)| x.clone()).collect();
        let rounded = largest_remainder(cost, &exact);
        for ((agent, _), amount) in payments.iter().zip(rounded) {
            self.receipts.push(Receipt {
                agent: self.agent_ids[*agent].to_string(),
                project: project.to_string(),
                amount,
            });
        }
        self.rounds.push(RoundRecord {
            round_index: self.rounds.len(),
            selected: project.to_string(),
            support,
            price,
            payments: payments
                .into_iter()
                .map(|(a, amount)| Payment { agent: self.agent_ids[a].to_string(), amount })
                .collect(),
        });
        self.funded.push(project.to_string());
    }

    pub(crate) fn finish(self, leftover: Vec<Rational>) -> AllocationResult {
        let balances = self
            .agent_ids
            .iter()
            .zip(self.initial)
            .zip(leftover)
            .map(|((agent, initial), leftover)| Balance { agent: agent.to_string(), initial, leftover })
            .collect();
        AllocationResult {
            total_budget: self.total_budget,
            funded: self.funded,
            receipts: self.receipts,
            balances,
            rounds: self.rounds,
        }
    }
}

mod opt_rational {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => s.serialize_some(&crate::money::format_rational(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        let raw: Option<String> = Option::deserialize(d)?;
        raw.map(|s| crate::money::parse_rational(&s).map_err(serde::de::Error::custom)).transpose()
    }
}
