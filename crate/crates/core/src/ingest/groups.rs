//! Group-points sheet: CSV with header `field,project,points`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupPointsError {
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: unknown impact field `{field}`")]
    UnknownField { line: u64, field: String },
    #[error("line {line}: negative points for `{field}`/`{project}`")]
    NegativePoints { line: u64, field: String, project: String },
    #[error("line {line}: duplicate pair `{field}`/`{project}`")]
    DuplicatePair { line: u64, field: String, project: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPointsRow {
    pub field: String,
    pub project: String,
    pub points: u64,
}

/// Deliberation points per (field, project). Absent pairs mean zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPointsSheet {
    pub rows: Vec<GroupPointsRow>,
}

impl GroupPointsSheet {
    pub fn points(&self, field: &str, project: &str) -> u64 {
        self.rows
            .iter()
            .find(|r| r.field == field && r.project == project)
            .map_or(0, |r| r.points)
    }

    /// Field ids in order of first appearance.
    pub fn fields(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.rows.iter().map(|r| r.field.as_str()).filter(|f| seen.insert(*f)).collect()
    }
}

const HEADER: [&str; 3] = ["field", "project", "points"];

/// Parses a sheet, checking every field against `fields`.
pub fn parse_group_points(bytes: &[u8], fields: &[&str]) -> Result<GroupPointsSheet, GroupPointsError> {
    parse_rows(bytes, Some(fields))
}

/// Parses a sheet without a field list; every field named in it is accepted.
pub fn parse_group_points_any(bytes: &[u8]) -> Result<GroupPointsSheet, GroupPointsError> {
    parse_rows(bytes, None)
}

fn parse_rows(bytes: &[u8], fields: Option<&[&str]>) -> Result<GroupPointsSheet, GroupPointsError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| GroupPointsError::Malformed { line: 1, reason: e.to_string() })?
        .clone();
    let is_empty_input = header.iter().all(str::is_empty);
    if is_empty_input {
        return Ok(GroupPointsSheet::default());
    }
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(GroupPointsError::Malformed { line: 1, reason: "header must be `field,project,points`".into() });
    }

    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| GroupPointsError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(GroupPointsError::Malformed { line, reason: format!("expected 3 columns, found {}", record.len()) });
        }
        let (field, project, points) = (record[0].to_string(), record[1].to_string(), &record[2]);
        if fields.is_some_and(|f| !f.contains(&field.as_str())) {
            return Err(GroupPointsError::UnknownField { line, field });
        }
        let points: i64 = points
            .parse()
            .map_err(|_| GroupPointsError::Malformed { line, reason: format!("points `{points}` is not an integer") })?;
        if points < 0 {
            return Err(GroupPointsError::NegativePoints { line, field, project });
        }
        if !seen.insert((field.clone(), project.clone())) {
            return Err(GroupPointsError::DuplicatePair { line, field, project });
        }
        rows.push(GroupPointsRow { field, project, points: points as u64 });
    }
    Ok(GroupPointsSheet { rows })
}

pub fn serialize_group_points(sheet: &GroupPointsSheet) -> Vec<u8> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    writer.write_record(HEADER).expect("in-memory write");
    for row in &sheet.rows {
        writer
            .write_record([row.field.as_str(), row.project.as_str(), &row.points.to_string()])
            .expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}
