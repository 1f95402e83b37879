//! One annotation session: an [`Experiment`] whose oracle is a human, plus
//! the label journal it is persisted as.
//!
//! A snapshot stores only the config and the journal. Because the engine is
//! deterministic given its config, reloading replays the journal batch by
//! batch and arrives at the same pending batch.

use std::collections::HashSet;
use std::time::{SystemTime, UNIX_EPOCH};

use direct_core::engine::Experiment;
use direct_core::harness::config::ExperimentConfig;
use direct_core::harness::metrics::minority_fraction;
use direct_core::pool::LabelSource;
use serde::{Deserialize, Serialize};

use crate::api::{BatchDoc, BatchItem, LabelRequest, PhaseDoc, StateDoc, Status};
use crate::error::{ServiceError, ServiceResult};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub id: usize,
    /// One-based.
    pub class: usize,
    /// Index of the batch this label answered.
    pub batch: usize,
    pub timestamp_ms: u64,
    #[serde(default)]
    pub annotator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub id: String,
    #[serde(default)]
    pub idempotency_token: Option<String>,
    pub config: ExperimentConfig,
    pub journal: Vec<JournalEntry>,
}

pub struct Session {
    id: String,
    token: Option<String>,
    config: ExperimentConfig,
    experiment: Experiment,
    journal: Vec<JournalEntry>,
    batches: usize,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl Session {
    pub fn create(id: String, token: Option<String>, config: ExperimentConfig) -> ServiceResult<Self> {
        let experiment = config.prepare().and_then(|p| p.start()).map_err(ServiceError::from_config)?;
        Ok(Self { id, token, config, experiment, journal: Vec::new(), batches: 0 })
    }

    /// Rebuilds a session by replaying its journal.
    pub fn restore(snapshot: Snapshot) -> ServiceResult<Self> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(ServiceError::Internal(format!("unsupported snapshot version {}", snapshot.version)));
        }
        let mut session = Self::create(snapshot.id, snapshot.idempotency_token, snapshot.config)?;
        let mut rest = snapshot.journal.as_slice();
        while let Some(first) = rest.first() {
            let len = rest.iter().take_while(|e| e.batch == first.batch).count();
            let (group, tail) = rest.split_at(len);
            let request = LabelRequest {
                labels: group.iter().map(|e| crate::api::Label { id: e.id, class: e.class }).collect(),
                annotator: None,
            };
            let labels = session.check(&request).map_err(|e| ServiceError::Internal(format!("journal replay: {e}")))?;
            session.apply(&labels)?;
            session.journal.extend(group.iter().cloned());
            rest = tail;
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    pub fn experiment(&self) -> &Experiment {
        &self.experiment
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            version: SNAPSHOT_VERSION,
            id: self.id.clone(),
            idempotency_token: self.token.clone(),
            config: self.config.clone(),
            journal: self.journal.clone(),
        }
    }

    fn status(&self) -> Status {
        if self.experiment.is_complete() {
            Status::Complete
        } else {
            Status::Active
        }
    }

    pub fn batch(&self) -> BatchDoc {
        let pool = self.experiment.pool();
        let items = self
            .experiment
            .pending()
            .unwrap_or(&[])
            .iter()
            .map(|&id| {
                let ex = pool.example(id);
                BatchItem { id, features: ex.features.clone(), display: ex.display.clone() }
            })
            .collect();
        BatchDoc {
            session: self.id.clone(),
            status: self.status(),
            round: self.experiment.round(),
            phase: PhaseDoc::from(self.experiment.phase()),
            items,
        }
    }

    pub fn state(&self) -> StateDoc {
        let exp = &self.experiment;
        let round = exp.settings().round;
        let store = exp.store();
        let planned = (round.rounds * round.b_train).min(exp.pool().len()).max(1);
        StateDoc {
            id: self.id.clone(),
            strategy: exp.settings().strategy.name().to_string(),
            status: self.status(),
            round: exp.round(),
            rounds: round.rounds,
            b_train: round.b_train,
            b_parallel: round.b_parallel,
            phase: PhaseDoc::from(exp.phase()),
            labeled: store.labeled_count(),
            class_counts: store.class_counts().to_vec(),
            minority_fraction: minority_fraction(exp.pool(), store),
            thresholds: exp.thresholds(),
            pending: exp.pending().map_or(0, <[usize]>::len),
            progress: (store.labeled_count() as f64 / planned as f64).min(1.0),
        }
    }

    pub fn log_csv(&self) -> ServiceResult<String> {
        self.experiment.log().to_csv_string().map_err(|e| ServiceError::Internal(e.to_string()))
    }

    /// Validates a submission against the pending batch without changing
    /// anything; returns zero-based labels.
    pub fn check(&self, request: &LabelRequest) -> ServiceResult<Vec<(usize, usize)>> {
        let Some(pending) = self.experiment.pending() else {
            return Err(ServiceError::SessionComplete);
        };
        let k = self.experiment.pool().num_classes();
        if let Some(bad) = request.labels.iter().find(|l| l.class == 0 || l.class > k) {
            return Err(ServiceError::InvalidLabel(format!("class {} for example {} is outside 1..={k}", bad.class, bad.id)));
        }
        let expected: HashSet<usize> = pending.iter().copied().collect();
        let given: HashSet<usize> = request.labels.iter().map(|l| l.id).collect();
        if given.len() != request.labels.len() {
            return Err(ServiceError::BatchMismatch("an example is labeled twice".into()));
        }
        if let Some(foreign) = given.difference(&expected).next() {
            return Err(ServiceError::BatchMismatch(format!("example {foreign} is not in the pending batch")));
        }
        if given.len() != expected.len() {
            return Err(ServiceError::BatchMismatch(format!(
                "labels must cover the whole pending batch of {} examples, got {}",
                expected.len(),
                given.len()
            )));
        }
        Ok(request.labels.iter().map(|l| (l.id, l.class - 1)).collect())
    }

    /// Journal entries a checked submission would append.
    pub fn entries_for(&self, request: &LabelRequest) -> Vec<JournalEntry> {
        let timestamp_ms = now_ms();
        request
            .labels
            .iter()
            .map(|l| JournalEntry {
                id: l.id,
                class: l.class,
                batch: self.batches,
                timestamp_ms,
                annotator: request.annotator.clone(),
            })
            .collect()
    }

    fn apply(&mut self, labels: &[(usize, usize)]) -> ServiceResult<()> {
        self.experiment.submit(labels, LabelSource::Human).map_err(|e| ServiceError::Internal(e.to_string()))?;
        self.batches += 1;
        Ok(())
    }

    /// Applies a submission. `persist` sees the snapshot including the new
    /// entries and runs before the engine advances, so a failed write leaves
    /// the session unchanged.
    pub fn submit(
        &mut self,
        request: &LabelRequest,
        persist: impl FnOnce(&Snapshot) -> ServiceResult<()>,
    ) -> ServiceResult<StateDoc> {
        let labels = self.check(request)?;
        let entries = self.entries_for(request);
        let mut snapshot = self.snapshot();
        snapshot.journal.extend(entries.iter().cloned());
        persist(&snapshot)?;
        self.apply(&labels)?;
        self.journal.extend(entries);
        Ok(self.state())
    }
}
