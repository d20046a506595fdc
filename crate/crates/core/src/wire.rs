//! JSON bodies exchanged between the what-if service and its clients.

use serde::{Deserialize, Serialize};

use crate::analysis::{AgentReceipt, AlignmentProfile, PortfolioStats, ScoreRow};
use crate::ingest::{LoadOptions, PbWarning};
use crate::model::ScenarioConfig;
use crate::result::AllocationResult;
use crate::scenario::Rule;

/// Optional `config` part of an upload.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UploadConfig {
    #[serde(flatten)]
    pub options: LoadOptions,
    /// Pins the official result at upload time; what-if queries are always
    /// answered in the `scenario` namespace.
    #[serde(default)]
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub id: String,
    pub frozen: bool,
    pub projects: usize,
    pub individuals: usize,
    pub fields: usize,
    pub config: ScenarioConfig,
    pub warnings: Vec<PbWarning>,
}

/// `official` is the stored default scenario under KES; everything else is
/// an exploration that never replaces it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Namespace {
    Official,
    Scenario,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationResponse {
    pub instance: String,
    pub namespace: Namespace,
    pub rule: Rule,
    pub config: ScenarioConfig,
    pub result: AllocationResult,
    pub scores: Vec<ScoreRow>,
    pub stats: PortfolioStats,
    pub alignment: AlignmentProfile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiptResponse {
    pub instance: String,
    pub namespace: Namespace,
    pub rule: Rule,
    #[serde(flatten)]
    pub receipt: AgentReceipt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    SplitR,
    TotalBudget,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::SplitR => "split_r",
            SweepParam::TotalBudget => "total_budget",
        }
    }

    /// Name of the matching allocation query parameter.
    pub fn query_key(self) -> &'static str {
        match self {
            SweepParam::SplitR => "split_r",
            SweepParam::TotalBudget => "budget",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Parameter value as accepted by the allocation endpoint.
    pub value: String,
    pub stats: PortfolioStats,
    pub funded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub instance: String,
    pub rule: Rule,
    pub param: SweepParam,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Machine-readable error kind, e.g. `MalformedRow` or `UnknownAgent`.
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
}
