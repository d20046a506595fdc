use std::collections::BTreeMap;

use num_traits::{One, Zero};
use thiserror::Error;

use super::groups::GroupPointsSheet;
use super::pb::PbFile;
use crate::model::{build_instance, Agent, BallotSet, ModelError, Project, ScenarioConfig, ValidatedInstance, WeightValue};
use crate::money::{int, parse_rational, rational, Rational};

/// Optional META key holding the impact-field split, e.g. `0.5`.
pub const SPLIT_META: &str = "split_r";
/// Optional META key holding field weights, e.g. `tradition:6,inclusion:11`.
pub const FIELD_WEIGHTS_META: &str = "field_weights";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("META `{key}`: {reason}")]
    InvalidMeta { key: String, reason: String },
}

/// Parses `a:19,b:18` weight lists.
pub fn parse_weight_list(text: &str) -> Result<BTreeMap<String, Rational>, String> {
    let mut out = BTreeMap::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once(':')
            .or_else(|| item.split_once('='))
            .ok_or_else(|| format!("`{item}` is not field:weight"))?;
        let w = parse_rational(v).map_err(|e| e.to_string())?;
        if out.insert(k.trim().to_string(), w).is_some() {
            return Err(format!("field `{}` listed twice", k.trim()));
        }
    }
    Ok(out)
}

/// Default scenario for a file: budget from META, field weights from the
/// `field_weights` key or one per sheet field, split from `split_r` or 1/2
/// whenever fields exist.
pub fn config_from_meta(file: &PbFile, sheet: Option<&GroupPointsSheet>) -> Result<ScenarioConfig, ConfigError> {
    let invalid = |key: &str, reason: String| ConfigError::InvalidMeta { key: key.to_string(), reason };
    let weights: BTreeMap<String, Rational> = match file.meta_value(FIELD_WEIGHTS_META) {
        Some(text) => parse_weight_list(text).map_err(|e| invalid(FIELD_WEIGHTS_META, e))?,
        None => sheet
            .map(|s| s.fields().into_iter().map(|f| (f.to_string(), Rational::one())).collect())
            .unwrap_or_default(),
    };
    let split = match file.meta_value(SPLIT_META) {
        Some(text) => parse_rational(text).map_err(|e| invalid(SPLIT_META, e.to_string()))?,
        None if weights.is_empty() => Rational::zero(),
        None => rational(1, 2),
    };
    Ok(ScenarioConfig::new(file.budget(), split).with_weights(weights))
}

/// Builds the instance: every VOTES row becomes an individual, every
/// configured field an impact-field agent whose ballot is its sheet row.
///
/// Sheet points are taken as entered unless `points_preweighted` is off, in
/// which case each row is multiplied by its field weight.
pub fn assemble(
    file: &PbFile,
    sheet: Option<&GroupPointsSheet>,
    config: ScenarioConfig,
) -> Result<ValidatedInstance, ModelError> {
    let projects: Vec<Project> = file
        .projects
        .iter()
        .map(|p| {
            let mut project = Project::new(p.id.clone(), p.cost);
            if let Some(name) = p.name.as_ref().filter(|n| !n.is_empty()) {
                project.name = name.clone();
            }
            project.with_annotations(p.categories.iter().map(|c| (c.clone(), 1)))
        })
        .collect();

    let mut agents: Vec<Agent> = file.votes.iter().map(|v| Agent::individual(v.voter_id.clone())).collect();
    let mut ballots = BallotSet::new();
    for vote in &file.votes {
        for (project, points) in vote.weighted() {
            ballots.add(&vote.voter_id, project, int(points as i64))?;
        }
    }

    let weights: &BTreeMap<String, WeightValue> = &config.field_weights;
    agents.extend(weights.iter().map(|(f, w)| Agent::field(f.clone(), w.0.clone())));
    if let Some(sheet) = sheet {
        for row in &sheet.rows {
            let mut points = int(row.points as i64);
            if !config.points_preweighted {
                if let Some(w) = weights.get(&row.field) {
                    points *= &w.0;
                }
            }
            ballots.add(&row.field, &row.project, points)?;
        }
    }
    build_instance(projects, agents, ballots, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_group_points, parse_pb};
    use crate::money::Money;

    const WALK: &str = "META\nkey;value\nbudget;100\ncurrency;CHF\nvote_type;cumulative\nPROJECTS\nproject_id;cost\nA;60\nB;40\nVOTES\nvoter_id;vote;points\ni1;A;10\ni2;B;10\n";
    const SHEET: &[u8] = b"field,project,points\nf,A,5\nf,B,5\n";

    #[test]
    fn walkthrough_assembles() {
        let file = parse_pb(WALK.as_bytes()).unwrap();
        let sheet = parse_group_points(SHEET, &["f"]).unwrap();
        let config = config_from_meta(&file, Some(&sheet)).unwrap();
        assert_eq!(config.split_r, rational(1, 2));
        let inst = assemble(&file, Some(&sheet), config).unwrap();
        assert_eq!(inst.agents().len(), 3);
        assert_eq!(inst.bucket_of("f"), Some(&int(5000)));
        assert_eq!(inst.ballots().get("f", "B"), int(5));
    }

    #[test]
    fn no_sheet_gives_pure_mes_setup() {
        let file = parse_pb(WALK.as_bytes()).unwrap();
        let config = config_from_meta(&file, None).unwrap();
        assert!(config.split_r.is_zero());
        let inst = assemble(&file, None, config).unwrap();
        assert!(!inst.has_fields());
        assert_eq!(inst.bucket_of("i1"), Some(&int(5000)));
    }

    #[test]
    fn full_split_leaves_individuals_empty() {
        let file = parse_pb(WALK.as_bytes()).unwrap();
        let sheet = parse_group_points(SHEET, &["f"]).unwrap();
        let config = ScenarioConfig::new(Money::from_units(100), int(1)).with_weights([("f", int(1))]);
        let inst = assemble(&file, Some(&sheet), config).unwrap();
        assert!(inst.bucket_of("i1").unwrap().is_zero());
        let r = crate::kes::run_kes(&inst);
        assert!(r.receipts.iter().all(|x| x.agent == "f"));
    }

    #[test]
    fn raw_points_get_weighted() {
        let file = parse_pb(WALK.as_bytes()).unwrap();
        let sheet = parse_group_points(SHEET, &["f"]).unwrap();
        let mut config = ScenarioConfig::new(Money::from_units(100), rational(1, 2)).with_weights([("f", int(3))]);
        config.points_preweighted = false;
        let inst = assemble(&file, Some(&sheet), config).unwrap();
        assert_eq!(inst.ballots().get("f", "A"), int(15));
    }

    #[test]
    fn meta_keys_drive_config() {
        let text = WALK.replace("vote_type;cumulative\n", "vote_type;cumulative\nsplit_r;0.25\nfield_weights;f:2,g:6\n");
        let file = parse_pb(text.as_bytes()).unwrap();
        let config = config_from_meta(&file, None).unwrap();
        assert_eq!(config.split_r, rational(1, 4));
        assert_eq!(config.field_weights.len(), 2);
        let inst = assemble(&file, None, config).unwrap();
        // 25.00 split 2:6
        assert_eq!(inst.bucket_of("g"), Some(&int(1875)));
    }

    #[test]
    fn weight_list_errors() {
        assert!(parse_weight_list("a:1,a:2").is_err());
        assert!(parse_weight_list("a").is_err());
        assert_eq!(parse_weight_list("a=1, b:0.5").unwrap().len(), 2);
    }
}
