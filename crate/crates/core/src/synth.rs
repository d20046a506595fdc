//! Seeded generator for synthetic instances shaped like a committee-run
//! cultural budget: a few dozen individuals spending a fixed point
//! allowance, eight weighted impact fields whose deliberation tables award
//! pre-weighted group points, and about a hundred projects.
//!
//! Generated data is synthetic. It reproduces the shape of such a process,
//! not any real ballot.

use rand::seq::index::sample_weighted;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{GroupPointsSheet, GroupPointsRow, PbFile, PbProject, PbVote};
use crate::model::{build_instance, Agent, BallotSet, ModelError, Project, ScenarioConfig, ValidatedInstance};
use crate::money::{int, rational, Money};

/// Impact fields and weights used by the Winterthur committee (percent).
pub const KK25_FIELDS: [(&str, i64); 8] = [
    ("curiosity_learning", 19),
    ("community_connection", 18),
    ("public_space_accessibility", 15),
    ("emotional_impact", 13),
    ("support_newcomers", 11),
    ("audience_creativity", 10),
    ("nature_environment", 9),
    ("tradition_history", 6),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub individuals: usize,
    pub projects: usize,
    pub budget: Money,
    pub min_cost_units: i64,
    pub max_cost_units: i64,
    pub points_per_person: u32,
    pub min_projects_per_person: usize,
    pub max_projects_per_person: usize,
    /// Group points per unit of field weight, so a field of weight 19 hands
    /// out `19 * group_points_per_weight` points.
    pub group_points_per_weight: u32,
    /// Projects each deliberation table spreads its points over.
    pub projects_per_table: usize,
    /// Standard deviation of the log-normal project appeal; larger values
    /// concentrate attention on fewer projects.
    pub appeal_spread: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            individuals: 36,
            projects: 121,
            budget: Money::from_units(380_000),
            min_cost_units: 3_000,
            max_cost_units: 40_000,
            points_per_person: 20,
            min_projects_per_person: 3,
            max_projects_per_person: 6,
            group_points_per_weight: 7,
            projects_per_table: 8,
            appeal_spread: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticInstance {
    pub params: SynthParams,
    pub projects: Vec<Project>,
    /// (voter id, [(project id, points)])
    pub votes: Vec<(String, Vec<(String, u32)>)>,
    /// (field id, project id, points), already scaled by field weight.
    pub group_points: Vec<(String, String, u32)>,
    pub weights: Vec<(String, i64)>,
}

impl SyntheticInstance {
    pub fn generate(seed: u64, params: SynthParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<(String, i64)> = KK25_FIELDS.iter().map(|(f, w)| (f.to_string(), *w)).collect();

        // Latent appeal drives both individual and group attention; it is
        // independent of cost.
        let normal = rand_distr::Normal::new(0.0, params.appeal_spread.max(0.0)).expect("finite spread");
        let appeal: Vec<f64> = (0..params.projects).map(|_| rng.sample(normal).exp()).collect();
        let projects: Vec<Project> = (0..params.projects)
            .map(|i| {
                let cost = rng.random_range(params.min_cost_units..=params.max_cost_units);
                let tag_count = rng.random_range(1..=3);
                let tags = sample_weighted(&mut rng, weights.len(), |f| weights[f].1 as f64, tag_count)
                    .expect("positive weights");
                Project::new(format!("P{:03}", i + 1), Money::from_units(cost))
                    .with_annotations(tags.into_iter().map(|f| (weights[f].0.clone(), 1)))
            })
            .collect();

        let votes = (0..params.individuals)
            .map(|v| {
                let k = rng.random_range(params.min_projects_per_person..=params.max_projects_per_person);
                let k = k.min(params.projects).min(params.points_per_person as usize);
                let chosen = sample_weighted(&mut rng, params.projects, |p| appeal[p], k).expect("positive appeal");
                let split = compose(&mut rng, params.points_per_person, k);
                let mut row: Vec<(String, u32)> =
                    chosen.into_iter().zip(split).map(|(p, pts)| (projects[p].id.clone(), pts)).collect();
                row.sort();
                (format!("{}", v + 1), row)
            })
            .collect();

        let mut group_points = Vec::new();
        for (field, weight) in &weights {
            let candidates: Vec<usize> =
                (0..params.projects).filter(|&p| projects[p].annotations.contains_key(field)).collect();
            if candidates.is_empty() {
                continue;
            }
            let k = params.projects_per_table.min(candidates.len());
            let picked = sample_weighted(&mut rng, candidates.len(), |c| appeal[candidates[c]], k).expect("appeal");
            let total = (*weight as u32) * params.group_points_per_weight;
            let split = compose(&mut rng, total.max(k as u32), k);
            let mut rows: Vec<(String, String, u32)> = picked
                .into_iter()
                .zip(split)
                .map(|(c, pts)| (field.clone(), projects[candidates[c]].id.clone(), pts))
                .collect();
            rows.sort();
            group_points.extend(rows);
        }

        SyntheticInstance { params, projects, votes, group_points, weights }
    }

    pub fn kk25(seed: u64) -> Self {
        Self::generate(seed, SynthParams::default())
    }

    pub fn config(&self) -> ScenarioConfig {
        ScenarioConfig::new(self.params.budget, rational(1, 2))
            .with_weights(self.weights.iter().map(|(f, w)| (f.clone(), int(*w))))
    }

    pub fn instance(&self) -> Result<ValidatedInstance, ModelError> {
        self.instance_with(self.config())
    }

    pub fn instance_with(&self, config: ScenarioConfig) -> Result<ValidatedInstance, ModelError> {
        let mut agents: Vec<Agent> = self.votes.iter().map(|(v, _)| Agent::individual(v.clone())).collect();
        agents.extend(self.weights.iter().map(|(f, w)| Agent::field(f.clone(), int(*w))));
        let mut ballots = BallotSet::new();
        for (voter, row) in &self.votes {
            for (p, pts) in row {
                ballots.add(voter, p, int(*pts as i64))?;
            }
        }
        for (f, p, pts) in &self.group_points {
            ballots.add(f, p, int(*pts as i64))?;
        }
        build_instance(self.projects.clone(), agents, ballots, config)
    }

    /// The ballots as a `.pb` file with a `categories` column carrying the
    /// field annotations.
    pub fn to_pb(&self) -> PbFile {
        let meta = vec![
            ("budget".to_string(), self.params.budget.to_compact_string()),
            ("currency".to_string(), "CHF".to_string()),
            ("vote_type".to_string(), "cumulative".to_string()),
            ("description".to_string(), "synthetic committee-shaped instance".to_string()),
            (
                crate::ingest::FIELD_WEIGHTS_META.to_string(),
                self.weights.iter().map(|(f, w)| format!("{f}:{w}")).collect::<Vec<_>>().join(","),
            ),
            (crate::ingest::SPLIT_META.to_string(), "0.5".to_string()),
            ("max_sum_points".to_string(), self.params.points_per_person.to_string()),
            ("num_projects".to_string(), self.projects.len().to_string()),
            ("num_votes".to_string(), self.votes.len().to_string()),
        ];
        PbFile {
            meta,
            project_columns: vec!["project_id".into(), "cost".into(), "name".into(), "categories".into()],
            projects: self
                .projects
                .iter()
                .map(|p| PbProject {
                    id: p.id.clone(),
                    cost: p.cost,
                    name: Some(format!("Project {}", p.id)),
                    categories: p.annotations.keys().cloned().collect(),
                    extras: Default::default(),
                })
                .collect(),
            vote_columns: vec!["voter_id".into(), "vote".into(), "points".into()],
            votes: self
                .votes
                .iter()
                .map(|(v, row)| PbVote {
                    voter_id: v.clone(),
                    vote: row.iter().map(|(p, _)| p.clone()).collect(),
                    points: Some(row.iter().map(|(_, pts)| *pts as u64).collect()),
                    extras: Default::default(),
                })
                .collect(),
        }
    }

    pub fn to_sheet(&self) -> GroupPointsSheet {
        GroupPointsSheet {
            rows: self
                .group_points
                .iter()
                .map(|(f, p, pts)| GroupPointsRow { field: f.clone(), project: p.clone(), points: *pts as u64 })
                .collect(),
        }
    }
}

/// Random composition of `total` into `parts` positive integers.
fn compose(rng: &mut impl Rng, total: u32, parts: usize) -> Vec<u32> {
    assert!(parts >= 1 && total as usize >= parts);
    let mut cuts = rand::seq::index::sample(rng, (total - 1) as usize, parts - 1).into_vec();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0u32;
    for c in cuts {
        let c = c as u32 + 1;
        out.push(c - prev);
        prev = c;
    }
    out.push(total - prev);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_matches_parameters() {
        let s = SyntheticInstance::kk25(7);
        assert_eq!(s.projects.len(), 121);
        assert_eq!(s.votes.len(), 36);
        for (_, row) in &s.votes {
            assert!(row.len() >= 3);
            assert_eq!(row.iter().map(|(_, p)| p).sum::<u32>(), 20);
        }
        for p in &s.projects {
            assert!(p.cost >= Money::from_units(3_000) && p.cost <= Money::from_units(40_000));
        }
        let inst = s.instance().unwrap();
        assert_eq!(inst.agents().len(), 44);
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(SyntheticInstance::kk25(3), SyntheticInstance::kk25(3));
        assert_ne!(SyntheticInstance::kk25(3).projects, SyntheticInstance::kk25(4).projects);
    }

    #[test]
    fn compositions_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for parts in 1..10 {
            let c = compose(&mut rng, 20, parts);
            assert_eq!(c.len(), parts);
            assert_eq!(c.iter().sum::<u32>(), 20);
            assert!(c.iter().all(|&x| x > 0));
        }
    }
}
