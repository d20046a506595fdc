//! Reader and canonical writer for Pabulib `.pb` files.
//!
//! A file has three `;`-separated sections in fixed order:
//!
//! ```text
//! META
//! key;value
//! budget;380000
//! ...
//! PROJECTS
//! project_id;cost;name
//! ...
//! VOTES
//! voter_id;vote;points
//! 1;P7,P9;12,8
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;

pub const REQUIRED_META: [&str; 3] = ["budget", "currency", "vote_type"];

/// Optional project columns with a common meaning in Pabulib corpora. They
/// are kept as extras without a warning.
const KNOWN_PROJECT_COLUMNS: [&str; 10] =
    ["votes", "score", "selected", "target", "targets", "latitude", "longitude", "description", "subunit", "district"];
const KNOWN_VOTE_COLUMNS: [&str; 6] = ["age", "sex", "voting_method", "district", "neighborhood", "education"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PbError {
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("missing section {0}")]
    MissingSection(&'static str),
    #[error("line {line}: unexpected `{found}`")]
    UnexpectedSection { line: usize, found: String },
    #[error("META is missing required key `{0}`")]
    MissingMetaKey(&'static str),
    #[error("line {line}: invalid value for `{key}`: {reason}")]
    InvalidMetaValue { line: usize, key: String, reason: String },
    #[error("line {line}: {section} header lacks column `{column}`")]
    MissingColumn { line: usize, section: &'static str, column: &'static str },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: vote for unknown project `{project}`")]
    VoteForUnknownProject { line: usize, project: String },
}

impl PbError {
    pub fn line(&self) -> Option<usize> {
        match self {
            PbError::UnexpectedSection { line, .. }
            | PbError::InvalidMetaValue { line, .. }
            | PbError::MissingColumn { line, .. }
            | PbError::MalformedRow { line, .. }
            | PbError::DuplicateId { line, .. }
            | PbError::VoteForUnknownProject { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Non-fatal findings while reading a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PbWarning {
    UnknownColumn { line: usize, section: String, column: String },
    PointTotal { line: usize, voter: String, total: u64, expected: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PbProject {
    pub id: String,
    pub cost: Money,
    /// Present iff the file has a `name` column.
    pub name: Option<String>,
    /// Entries of the `categories`/`category` column.
    pub categories: Vec<String>,
    pub extras: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PbVote {
    pub voter_id: String,
    pub vote: Vec<String>,
    /// Present iff the file has a `points` column.
    pub points: Option<Vec<u64>>,
    pub extras: BTreeMap<String, String>,
}

impl PbVote {
    /// Points per voted project; approval ballots count one point each.
    pub fn weighted(&self) -> impl Iterator<Item = (&str, u64)> {
        self.vote
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), self.points.as_ref().map_or(1, |pts| pts[i])))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PbFile {
    pub meta: Vec<(String, String)>,
    pub project_columns: Vec<String>,
    pub projects: Vec<PbProject>,
    pub vote_columns: Vec<String>,
    pub votes: Vec<PbVote>,
}

impl PbFile {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn budget(&self) -> Money {
        self.meta_value("budget")
            .and_then(|b| Money::parse_decimal(b).ok())
            .unwrap_or_default()
    }

    /// Announced per-voter point allowance, if the file declares one.
    pub fn point_allowance(&self) -> Option<u64> {
        self.meta_value("max_sum_points").and_then(|v| v.trim().parse().ok())
    }

    /// Meta entries in canonical order: required keys first, the rest sorted.
    pub fn canonical_meta(&self) -> Vec<(&str, &str)> {
        let mut out: Vec<(&str, &str)> = REQUIRED_META
            .iter()
            .filter_map(|k| self.meta_value(k).map(|v| (*k, v)))
            .collect();
        let mut rest: Vec<(&str, &str)> = self
            .meta
            .iter()
            .filter(|(k, _)| !REQUIRED_META.contains(&k.as_str()))
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        rest.sort();
        out.extend(rest);
        out
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Meta,
    Projects,
    Votes,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Meta => "META",
            Section::Projects => "PROJECTS",
            Section::Votes => "VOTES",
        }
    }
}

const SECTIONS: [Section; 3] = [Section::Meta, Section::Projects, Section::Votes];

fn section_header(line: &str) -> Option<Section> {
    match line.trim() {
        "META" => Some(Section::Meta),
        "PROJECTS" => Some(Section::Projects),
        "VOTES" => Some(Section::Votes),
        _ => None,
    }
}

pub fn parse_pb(bytes: &[u8]) -> Result<PbFile, PbError> {
    parse_pb_with_warnings(bytes).map(|(file, _)| file)
}

pub fn parse_pb_with_warnings(bytes: &[u8]) -> Result<(PbFile, Vec<PbWarning>), PbError> {
    let text = std::str::from_utf8(bytes).map_err(|_| PbError::NotUtf8)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);

    // (1-based line number, content) per section
    let mut sections: [Option<SectionLines>; 3] = [None, None, None];
    let mut current: Option<Section> = None;
    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        if let Some(sec) = section_header(line) {
            let next = current.map_or(0, |c| c as usize + 1);
            if (sec as usize) < next || (current.is_none() && sec != Section::Meta) {
                return Err(PbError::UnexpectedSection { line: line_no, found: line.trim().to_string() });
            }
            if sec as usize > next {
                return Err(PbError::MissingSection(SECTIONS[next].name()));
            }
            sections[sec as usize] = Some((line_no, Vec::new()));
            current = Some(sec);
            continue;
        }
        match current {
            None => return Err(PbError::UnexpectedSection { line: line_no, found: line.to_string() }),
            Some(sec) => sections[sec as usize].as_mut().expect("open section").1.push((line_no, line)),
        }
    }

    let [meta, projects, votes] = sections;
    let meta = meta.ok_or(PbError::MissingSection("META"))?;
    let projects = projects.ok_or(PbError::MissingSection("PROJECTS"))?;
    let votes = votes.ok_or(PbError::MissingSection("VOTES"))?;

    let mut warnings = Vec::new();
    let meta = parse_meta(&meta.1)?;
    let (project_columns, projects) = parse_projects(projects.0, &projects.1, &mut warnings)?;
    let known: HashSet<&str> = projects.iter().map(|p| p.id.as_str()).collect();
    let allowance = meta
        .iter()
        .find(|(k, _)| k == "max_sum_points")
        .and_then(|(_, v)| v.trim().parse::<u64>().ok());
    let (vote_columns, votes) = parse_votes(votes.0, &votes.1, &known, allowance, &mut warnings)?;

    Ok((PbFile { meta, project_columns, projects, vote_columns, votes }, warnings))
}

fn parse_meta(lines: &[(usize, &str)]) -> Result<Vec<(String, String)>, PbError> {
    let mut rows = lines;
    if let Some((_, first)) = rows.first() {
        if first.trim() == "key;value" {
            rows = &rows[1..];
        }
    }
    let mut meta: Vec<(String, String)> = Vec::with_capacity(rows.len());
    for (line, text) in rows {
        let Some((key, value)) = text.split_once(';') else {
            return Err(PbError::MalformedRow { line: *line, reason: "expected key;value".into() });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(PbError::MalformedRow { line: *line, reason: "empty meta key".into() });
        }
        if meta.iter().any(|(k, _)| k == key) {
            return Err(PbError::DuplicateId { line: *line, id: key.to_string() });
        }
        if key == "budget" {
            Money::parse_decimal(value)
                .map_err(|e| PbError::InvalidMetaValue { line: *line, key: key.into(), reason: e.to_string() })?;
        }
        meta.push((key.to_string(), value.to_string()));
    }
    for key in REQUIRED_META {
        if !meta.iter().any(|(k, _)| k == key) {
            return Err(PbError::MissingMetaKey(key));
        }
    }
    Ok(meta)
}

fn parse_header(
    section: Section,
    header_line: usize,
    lines: &[(usize, &str)],
    required: &[&'static str],
) -> Result<(usize, Vec<String>), PbError> {
    let Some(&(line, text)) = lines.first() else {
        return Err(PbError::MissingColumn { line: header_line, section: section.name(), column: required[0] });
    };
    let columns: Vec<String> = text.split(';').map(|c| c.trim().to_string()).collect();
    let mut seen = BTreeSet::new();
    for c in &columns {
        if c.is_empty() || !seen.insert(c.as_str()) {
            return Err(PbError::MalformedRow { line, reason: format!("bad or repeated column name `{c}`") });
        }
    }
    for col in required {
        if !columns.iter().any(|c| c == col) {
            return Err(PbError::MissingColumn { line, section: section.name(), column: col });
        }
    }
    Ok((line, columns))
}

/// Header line number and the (line, content) rows below it.
type SectionLines<'a> = (usize, Vec<(usize, &'a str)>);

fn split_row(line: usize, text: &str, width: usize) -> Result<Vec<&str>, PbError> {
    let cells: Vec<&str> = text.split(';').collect();
    if cells.len() != width {
        return Err(PbError::MalformedRow {
            line,
            reason: format!("expected {width} columns, found {}", cells.len()),
        });
    }
    Ok(cells)
}

fn split_list(cell: &str) -> Vec<String> {
    if cell.trim().is_empty() {
        Vec::new()
    } else {
        cell.split(',').map(|s| s.trim().to_string()).collect()
    }
}

fn is_category_column(c: &str) -> bool {
    c == "categories" || c == "category"
}

fn parse_projects(
    header_line: usize,
    lines: &[(usize, &str)],
    warnings: &mut Vec<PbWarning>,
) -> Result<(Vec<String>, Vec<PbProject>), PbError> {
    let (line, columns) = parse_header(Section::Projects, header_line, lines, &["project_id", "cost"])?;
    for c in &columns {
        let core = matches!(c.as_str(), "project_id" | "cost" | "name") || is_category_column(c);
        if !core && !KNOWN_PROJECT_COLUMNS.contains(&c.as_str()) {
            warnings.push(PbWarning::UnknownColumn { line, section: "PROJECTS".into(), column: c.clone() });
        }
    }
    let mut ids = HashSet::new();
    let mut projects = Vec::with_capacity(lines.len().saturating_sub(1));
    for &(line, text) in &lines[1..] {
        let cells = split_row(line, text, columns.len())?;
        let mut project = PbProject {
            id: String::new(),
            cost: Money::ZERO,
            name: None,
            categories: Vec::new(),
            extras: BTreeMap::new(),
        };
        for (col, cell) in columns.iter().zip(cells) {
            match col.as_str() {
                "project_id" => project.id = cell.trim().to_string(),
                "cost" => {
                    project.cost = Money::parse_decimal(cell)
                        .map_err(|e| PbError::MalformedRow { line, reason: format!("cost: {e}") })?;
                }
                "name" => project.name = Some(cell.to_string()),
                c if is_category_column(c) => project.categories = split_list(cell),
                _ => {
                    project.extras.insert(col.clone(), cell.to_string());
                }
            }
        }
        if project.id.is_empty() {
            return Err(PbError::MalformedRow { line, reason: "empty project_id".into() });
        }
        if project.cost.is_zero() {
            return Err(PbError::MalformedRow { line, reason: "cost must be positive".into() });
        }
        if !ids.insert(project.id.clone()) {
            return Err(PbError::DuplicateId { line, id: project.id });
        }
        projects.push(project);
    }
    Ok((columns, projects))
}

fn parse_votes(
    header_line: usize,
    lines: &[(usize, &str)],
    known: &HashSet<&str>,
    allowance: Option<u64>,
    warnings: &mut Vec<PbWarning>,
) -> Result<(Vec<String>, Vec<PbVote>), PbError> {
    let (line, columns) = parse_header(Section::Votes, header_line, lines, &["voter_id", "vote"])?;
    for c in &columns {
        let core = matches!(c.as_str(), "voter_id" | "vote" | "points");
        if !core && !KNOWN_VOTE_COLUMNS.contains(&c.as_str()) {
            warnings.push(PbWarning::UnknownColumn { line, section: "VOTES".into(), column: c.clone() });
        }
    }
    let has_points = columns.iter().any(|c| c == "points");
    let mut ids = HashSet::new();
    let mut votes = Vec::with_capacity(lines.len().saturating_sub(1));
    for &(line, text) in &lines[1..] {
        let cells = split_row(line, text, columns.len())?;
        let mut vote = PbVote {
            voter_id: String::new(),
            vote: Vec::new(),
            points: has_points.then(Vec::new),
            extras: BTreeMap::new(),
        };
        for (col, cell) in columns.iter().zip(cells) {
            match col.as_str() {
                "voter_id" => vote.voter_id = cell.trim().to_string(),
                "vote" => vote.vote = split_list(cell),
                "points" => {
                    let parsed = split_list(cell)
                        .iter()
                        .map(|p| p.parse::<u64>())
                        .collect::<Result<Vec<u64>, _>>()
                        .map_err(|_| PbError::MalformedRow {
                            line,
                            reason: format!("points must be non-negative integers, got `{cell}`"),
                        })?;
                    vote.points = Some(parsed);
                }
                _ => {
                    vote.extras.insert(col.clone(), cell.to_string());
                }
            }
        }
        if vote.voter_id.is_empty() {
            return Err(PbError::MalformedRow { line, reason: "empty voter_id".into() });
        }
        if let Some(points) = &vote.points {
            if points.len() != vote.vote.len() {
                return Err(PbError::MalformedRow {
                    line,
                    reason: format!("{} projects but {} point values", vote.vote.len(), points.len()),
                });
            }
        }
        let mut seen = HashSet::new();
        for p in &vote.vote {
            if !known.contains(p.as_str()) {
                return Err(PbError::VoteForUnknownProject { line, project: p.clone() });
            }
            if !seen.insert(p.as_str()) {
                return Err(PbError::MalformedRow { line, reason: format!("project `{p}` listed twice") });
            }
        }
        if !ids.insert(vote.voter_id.clone()) {
            return Err(PbError::DuplicateId { line, id: vote.voter_id });
        }
        if let (Some(expected), Some(points)) = (allowance, &vote.points) {
            let total: u64 = points.iter().sum();
            if total != expected {
                warnings.push(PbWarning::PointTotal { line, voter: vote.voter_id.clone(), total, expected });
            }
        }
        votes.push(vote);
    }
    Ok((columns, votes))
}

/// Canonical text: `\n` line endings, required meta keys first, remaining
/// meta keys sorted, column order as declared.
pub fn serialize_pb(file: &PbFile) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("META\nkey;value\n");
    for (k, v) in file.canonical_meta() {
        out.push_str(k);
        out.push(';');
        out.push_str(v);
        out.push('\n');
    }
    out.push_str("PROJECTS\n");
    out.push_str(&file.project_columns.join(";"));
    out.push('\n');
    for p in &file.projects {
        let cells: Vec<String> = file
            .project_columns
            .iter()
            .map(|c| match c.as_str() {
                "project_id" => p.id.clone(),
                "cost" => p.cost.to_compact_string(),
                "name" => p.name.clone().unwrap_or_default(),
                c if is_category_column(c) => p.categories.join(","),
                other => p.extras.get(other).cloned().unwrap_or_default(),
            })
            .collect();
        out.push_str(&cells.join(";"));
        out.push('\n');
    }
    out.push_str("VOTES\n");
    out.push_str(&file.vote_columns.join(";"));
    out.push('\n');
    for v in &file.votes {
        let cells: Vec<String> = file
            .vote_columns
            .iter()
            .map(|c| match c.as_str() {
                "voter_id" => v.voter_id.clone(),
                "vote" => v.vote.join(","),
                "points" => v
                    .points
                    .as_ref()
                    .map(|pts| pts.iter().map(u64::to_string).collect::<Vec<_>>().join(","))
                    .unwrap_or_default(),
                other => v.extras.get(other).cloned().unwrap_or_default(),
            })
            .collect();
        out.push_str(&cells.join(";"));
        out.push('\n');
    }
    out.into_bytes()
}
