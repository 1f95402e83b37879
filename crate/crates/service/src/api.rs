//! Request and response documents. Class ids are one-based throughout.

use direct_core::engine::Phase;
use serde::{Deserialize, Serialize};

/// `POST /sessions`. `config` uses the same schema as the TOML experiment
/// config, written as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub config: serde_json::Value,
    #[serde(default)]
    pub idempotency_token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub id: String,
    pub state: StateDoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Complete,
}

/// The engine phase with a one-based class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseDoc {
    pub kind: PhaseKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Seed,
    Locate,
    Annotate,
    Select,
    Idle,
    Complete,
}

impl From<Phase> for PhaseDoc {
    fn from(phase: Phase) -> Self {
        let (kind, class) = match phase {
            Phase::Seed => (PhaseKind::Seed, None),
            Phase::Locate { class } => (PhaseKind::Locate, class),
            Phase::Annotate { class } => (PhaseKind::Annotate, class),
            Phase::Select => (PhaseKind::Select, None),
            Phase::Idle => (PhaseKind::Idle, None),
            Phase::Complete => (PhaseKind::Complete, None),
        };
        Self { kind, class: class.map(|c| c + 1) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub id: usize,
    pub features: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub display: Option<String>,
}

/// `GET /sessions/{id}/batch`. A complete session returns an empty batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDoc {
    pub session: String,
    pub status: Status,
    pub round: usize,
    pub phase: PhaseDoc,
    pub items: Vec<BatchItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Label {
    pub id: usize,
    pub class: usize,
}

/// `POST /sessions/{id}/labels`: labels for exactly the pending batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRequest {
    pub labels: Vec<Label>,
    #[serde(default)]
    pub annotator: Option<String>,
}

/// `GET /sessions/{id}/state`, also returned after each submit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDoc {
    pub id: String,
    pub strategy: String,
    pub status: Status,
    pub round: usize,
    pub rounds: usize,
    pub b_train: usize,
    pub b_parallel: usize,
    pub phase: PhaseDoc,
    pub labeled: usize,
    pub class_counts: Vec<usize>,
    pub minority_fraction: f64,
    /// Latest threshold estimate per class (sorted-list position).
    pub thresholds: Vec<Option<usize>>,
    /// Size of the outstanding batch.
    pub pending: usize,
    /// Labeled fraction of the planned `rounds * b_train` labels.
    pub progress: f64,
}
