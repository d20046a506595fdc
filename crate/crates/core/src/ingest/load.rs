//! One-call loading of a ballot file, an optional group sheet and upload
//! options into a validated instance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::assemble::{assemble, config_from_meta, parse_weight_list, ConfigError, FIELD_WEIGHTS_META};
use super::groups::{parse_group_points, parse_group_points_any, GroupPointsError, GroupPointsSheet};
use super::pb::{parse_pb_with_warnings, PbError, PbFile, PbWarning};
use crate::model::{ModelError, Normalization, ValidatedInstance, WeightValue};
use crate::scenario::Overrides;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error(transparent)]
    Pb(#[from] PbError),
    #[error("group sheet {0}")]
    Groups(#[from] GroupPointsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl LoadError {
    /// True for errors in the input bytes, false for rejected configurations.
    pub fn is_parse(&self) -> bool {
        matches!(self, LoadError::Pb(_) | LoadError::Groups(_))
    }
}

/// Settings that replace the ones derived from the file's META section.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Budget, split and weights. Weights given here replace the META list
    /// and so define the set of impact fields.
    #[serde(flatten)]
    pub overrides: Overrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_preweighted: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub file: PbFile,
    pub sheet: Option<GroupPointsSheet>,
    pub warnings: Vec<PbWarning>,
    pub instance: ValidatedInstance,
}

pub fn load(pb: &[u8], groups: Option<&[u8]>, options: &LoadOptions) -> Result<Loaded, LoadError> {
    let (file, warnings) = parse_pb_with_warnings(pb)?;
    let declared: Option<Vec<String>> = match (&options.overrides.field_weights, file.meta_value(FIELD_WEIGHTS_META)) {
        (Some(weights), _) => Some(weights.keys().cloned().collect()),
        (None, Some(text)) => Some(
            parse_weight_list(text)
                .map_err(|reason| ConfigError::InvalidMeta { key: FIELD_WEIGHTS_META.into(), reason })?
                .into_keys()
                .collect(),
        ),
        (None, None) => None,
    };
    let sheet = match (groups, &declared) {
        (None, _) => None,
        (Some(bytes), Some(fields)) => {
            let fields: Vec<&str> = fields.iter().map(String::as_str).collect();
            Some(parse_group_points(bytes, &fields)?)
        }
        (Some(bytes), None) => Some(parse_group_points_any(bytes)?),
    };

    let mut config = config_from_meta(&file, sheet.as_ref())?;
    let o = &options.overrides;
    if let Some(budget) = o.total_budget {
        config.total_budget = budget;
    }
    if let Some(weights) = &o.field_weights {
        config.field_weights = weights.iter().map(|(k, v)| (k.clone(), v.clone())).collect::<BTreeMap<String, WeightValue>>();
    }
    if let Some(r) = &o.split_r {
        config.split_r = r.clone();
    }
    if let Some(mode) = options.normalization {
        config.normalization = mode;
    }
    if let Some(flag) = options.points_preweighted {
        config.points_preweighted = flag;
    }
    let instance = assemble(&file, sheet.as_ref(), config)?;
    Ok(Loaded { file, sheet, warnings, instance })
}
