//! Rule selection and what-if overrides on top of a validated instance.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::{run_greedy, run_mes, Channel, GreedyWalk};
use crate::kes::run_kes;
use crate::model::{ModelError, ValidatedInstance, WeightValue};
use crate::money::{Money, Rational};
use crate::result::AllocationResult;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    #[default]
    #[serde(rename = "kes")]
    Kes,
    #[serde(rename = "mes")]
    Mes,
    #[serde(rename = "greedy-ind")]
    GreedyIndividual,
    #[serde(rename = "greedy-grp")]
    GreedyGroup,
}

impl Rule {
    pub const ALL: [Rule; 4] = [Rule::GreedyIndividual, Rule::GreedyGroup, Rule::Mes, Rule::Kes];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Kes => "kes",
            Rule::Mes => "mes",
            Rule::GreedyIndividual => "greedy-ind",
            Rule::GreedyGroup => "greedy-grp",
        }
    }

    pub fn run(self, instance: &ValidatedInstance) -> AllocationResult {
        match self {
            Rule::Kes => run_kes(instance),
            Rule::Mes => run_mes(instance),
            Rule::GreedyIndividual => run_greedy(instance, Channel::IndividualOnly, GreedyWalk::default()),
            Rule::GreedyGroup => run_greedy(instance, Channel::GroupOnly, GreedyWalk::default()),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown rule `{0}` (expected kes, mes, greedy-ind or greedy-grp)")]
pub struct UnknownRule(pub String);

impl FromStr for Rule {
    type Err = UnknownRule;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.trim().to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        match key.as_str() {
            "kes" => Ok(Rule::Kes),
            "mes" => Ok(Rule::Mes),
            "greedyind" | "greedyindividual" | "individual" => Ok(Rule::GreedyIndividual),
            "greedygrp" | "greedygroup" | "group" => Ok(Rule::GreedyGroup),
            _ => Err(UnknownRule(s.to_string())),
        }
    }
}

/// What-if parameters layered over an instance's stored configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_budget: Option<Money>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_split")]
    pub split_r: Option<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_weights: Option<BTreeMap<String, WeightValue>>,
}

impl Overrides {
    pub fn is_empty(&self) -> bool {
        self.total_budget.is_none() && self.split_r.is_none() && self.field_weights.is_none()
    }

    /// Applies the overrides, re-validating the resulting configuration.
    pub fn apply(&self, instance: &ValidatedInstance) -> Result<ValidatedInstance, ModelError> {
        if self.is_empty() {
            return Ok(instance.clone());
        }
        let mut config = instance.config().clone();
        if let Some(budget) = self.total_budget {
            config.total_budget = budget;
        }
        if let Some(r) = &self.split_r {
            config.split_r = r.clone();
        }
        if let Some(weights) = &self.field_weights {
            config.field_weights.extend(weights.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        instance.reconfigure(config)
    }
}

mod opt_split {
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
