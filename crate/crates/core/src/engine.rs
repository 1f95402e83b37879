//! A resumable experiment.
//!
//! Strategies are written as [`RoundSelector`]s that hand out one annotation
//! batch at a time. [`Experiment`] strings rounds together: it asks the
//! current selector for a batch, waits for [`Experiment::submit`], retrains at
//! round boundaries and records metrics. The simulator answers batches from
//! the pool's observed labels; the annotation service answers them with human
//! labels. Both go through the same calls, so they select the same examples.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::{ConfidenceSelector, GalaxySelector, MostLikelyPositiveSelector, RandomSelector};
use crate::direct::{DirectRound, RoundConfig, VReduceTrace};
use crate::error::{config_err, Error, Result};
use crate::harness::log::{ExperimentLog, LogRow};
use crate::harness::metrics::{balanced_accuracy, minority_fraction, EvalSet};
use crate::pool::{query_oracle, ClassId, LabelSource, LabelStore, Pool};
use crate::reduction::{estimate_threshold, PrefixLossTable, ThresholdEstimate};
use crate::rng::{self, Rng};
use crate::scorer::{sorted_class_view, train, ScoreMatrix, SoftmaxModel, SortedClassView, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Direct,
    Random,
    Confidence,
    MostLikelyPositive,
    GalaxyBisection,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Direct,
        Strategy::Random,
        Strategy::Confidence,
        Strategy::MostLikelyPositive,
        Strategy::GalaxyBisection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::Random => "random",
            Strategy::Confidence => "confidence",
            Strategy::MostLikelyPositive => "most_likely_positive",
            Strategy::GalaxyBisection => "galaxy_bisection",
        }
    }

    fn needs_scores(self) -> bool {
        !matches!(self, Strategy::Random)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| config_err(format!("strategy: unknown strategy {s:?}")))
    }
}

/// What the selector is currently doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phase {
    /// Uniform seed round.
    Seed,
    /// Locating the threshold of `class` (one-based in serialized form is left
    /// to the caller; this is zero-based).
    Locate { class: Option<ClassId> },
    /// Annotating around the estimated threshold of `class`.
    Annotate { class: Option<ClassId> },
    /// A baseline strategy's selection.
    Select,
    /// Between steps.
    Idle,
    /// No more batches.
    Complete,
}

/// Lazily sorted class views for one score matrix.
pub struct ViewCache {
    scores: Option<Arc<ScoreMatrix>>,
    views: Vec<Option<Arc<SortedClassView>>>,
}

impl ViewCache {
    pub fn new(scores: Option<Arc<ScoreMatrix>>) -> Self {
        let k = scores.as_ref().map_or(0, |s| s.num_classes());
        Self { scores, views: vec![None; k] }
    }

    pub fn scores(&self) -> Option<&Arc<ScoreMatrix>> {
        self.scores.as_ref()
    }

    pub fn view(&mut self, class: ClassId) -> Result<Arc<SortedClassView>> {
        let scores = self
            .scores
            .as_ref()
            .ok_or_else(|| Error::Precondition("this strategy needs a score matrix".into()))?;
        if let Some(view) = &self.views[class] {
            return Ok(view.clone());
        }
        let view = Arc::new(sorted_class_view(scores, class));
        self.views[class] = Some(view.clone());
        Ok(view)
    }
}

/// What a selector sees while choosing a batch.
pub struct RoundContext<'a> {
    pub pool: &'a Pool,
    pub store: &'a LabelStore,
    pub rng: &'a mut Rng,
    pub b_train: usize,
    pub b_parallel: usize,
    cache: &'a mut ViewCache,
}

impl<'a> RoundContext<'a> {
    pub fn new(
        pool: &'a Pool,
        store: &'a LabelStore,
        cache: &'a mut ViewCache,
        rng: &'a mut Rng,
        config: &RoundConfig,
    ) -> Self {
        Self { pool, store, rng, b_train: config.b_train, b_parallel: config.b_parallel, cache }
    }

    pub fn view(&mut self, class: ClassId) -> Result<Arc<SortedClassView>> {
        self.cache.view(class)
    }

    pub fn scores(&self) -> Result<&ScoreMatrix> {
        self.cache
            .scores()
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::Precondition("this strategy needs a score matrix".into()))
    }
}

/// A strategy's selection for one round, one batch at a time.
///
/// Every id of a returned batch must be labeled in the store before the next
/// call. Returning `None` ends the round.
pub trait RoundSelector: Send {
    fn next_batch(&mut self, ctx: &mut RoundContext<'_>) -> Result<Option<Vec<usize>>>;

    fn phase(&self) -> Phase;

    /// Threshold estimates made so far this round.
    fn thresholds(&self) -> Vec<ThresholdEstimate> {
        Vec::new()
    }

    fn take_traces(&mut self) -> Vec<VReduceTrace> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundOutcome {
    pub added: usize,
    /// The pool ran out before `B_train` labels were collected.
    pub truncated: bool,
}

/// Drives `selector` to completion against the simulated oracle.
pub fn drive_round(
    selector: &mut dyn RoundSelector,
    pool: &Pool,
    store: &mut LabelStore,
    scores: Option<Arc<ScoreMatrix>>,
    config: &RoundConfig,
    round: usize,
    rng: &mut Rng,
) -> Result<RoundOutcome> {
    let mut cache = ViewCache::new(scores);
    let mut added = 0;
    loop {
        let mut ctx = RoundContext::new(pool, store, &mut cache, rng, config);
        let Some(batch) = selector.next_batch(&mut ctx)? else { break };
        query_oracle(pool, &batch, store, round)?;
        added += batch.len();
    }
    Ok(RoundOutcome { added, truncated: added < config.b_train })
}

/// Builds the selector `strategy` uses in round `round` (round 0 is the
/// uniform seed round for every strategy).
pub fn selector_for(strategy: Strategy, round: usize) -> Box<dyn RoundSelector> {
    if round == 0 {
        return Box::new(RandomSelector::seed());
    }
    match strategy {
        Strategy::Direct => Box::new(DirectRound::new(round)),
        Strategy::Random => Box::new(RandomSelector::new()),
        Strategy::Confidence => Box::new(ConfidenceSelector::new()),
        Strategy::MostLikelyPositive => Box::new(MostLikelyPositiveSelector::new()),
        Strategy::GalaxyBisection => Box::new(GalaxySelector::new()),
    }
}

/// Where per-round scores come from.
#[derive(Clone)]
pub enum Scoring {
    /// Retrain a fresh softmax model each round.
    Trained(TrainConfig),
    /// A fixed external score matrix; no training, no accuracy metric.
    Fixed(Arc<ScoreMatrix>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub strategy: Strategy,
    pub round: RoundConfig,
}

/// An experiment paused at its next annotation batch.
pub struct Experiment {
    pool: Arc<Pool>,
    eval: Option<Arc<EvalSet>>,
    settings: ExperimentSettings,
    scoring: Scoring,
    store: LabelStore,
    rng: Rng,
    round: usize,
    added: usize,
    selector: Box<dyn RoundSelector>,
    cache: ViewCache,
    model: Option<SoftmaxModel>,
    pending: Option<Vec<usize>>,
    thresholds: Vec<Option<usize>>,
    log: ExperimentLog,
    finished: bool,
}

impl Experiment {
    pub fn new(
        pool: Arc<Pool>,
        eval: Option<Arc<EvalSet>>,
        settings: ExperimentSettings,
        scoring: Scoring,
        config_echo: String,
    ) -> Result<Self> {
        settings.round.validate(pool.num_classes())?;
        if let Scoring::Fixed(scores) = &scoring {
            if scores.rows() != pool.len() || scores.num_classes() != pool.num_classes() {
                return Err(config_err("scores: score matrix does not match the pool"));
            }
        }
        if let Some(eval) = &eval {
            if eval.dim() != pool.dim() {
                return Err(Error::DimensionMismatch { expected: pool.dim(), found: eval.dim() });
            }
        }
        let k = pool.num_classes();
        let store = LabelStore::for_pool(&pool);
        let mut experiment = Self {
            log: ExperimentLog::new(config_echo, k),
            rng: rng::seeded(settings.round.seed, rng::STREAM_SELECTION),
            selector: selector_for(settings.strategy, 0),
            cache: ViewCache::new(None),
            pool,
            eval,
            settings,
            scoring,
            store,
            round: 0,
            added: 0,
            model: None,
            pending: None,
            thresholds: vec![None; k],
            finished: false,
        };
        experiment.advance()?;
        Ok(experiment)
    }

    pub fn pool(&self) -> &Arc<Pool> {
        &self.pool
    }

    pub fn store(&self) -> &LabelStore {
        &self.store
    }

    pub fn settings(&self) -> &ExperimentSettings {
        &self.settings
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn log(&self) -> &ExperimentLog {
        &self.log
    }

    pub fn into_log(self) -> ExperimentLog {
        self.log
    }

    pub fn model(&self) -> Option<&SoftmaxModel> {
        self.model.as_ref()
    }

    /// The batch awaiting labels, or `None` once the experiment is complete.
    pub fn pending(&self) -> Option<&[usize]> {
        self.pending.as_deref()
    }

    pub fn is_complete(&self) -> bool {
        self.finished
    }

    pub fn phase(&self) -> Phase {
        if self.finished {
            Phase::Complete
        } else if self.round == 0 {
            Phase::Seed
        } else {
            self.selector.phase()
        }
    }

    /// Latest threshold estimate per class: this round's phase-2 estimates
    /// where available, otherwise the estimates recorded at the last round end.
    pub fn thresholds(&self) -> Vec<Option<usize>> {
        let mut out = self.thresholds.clone();
        if !self.finished {
            for est in self.selector.thresholds() {
                out[est.class] = Some(est.j_hat);
            }
        }
        out
    }

    /// Labels added in the current round.
    pub fn added_this_round(&self) -> usize {
        self.added
    }

    /// Records labels for exactly the pending batch and advances to the next
    /// batch. Rejected submissions leave the experiment untouched.
    pub fn submit(&mut self, labels: &[(usize, ClassId)], source: LabelSource) -> Result<()> {
        let pending = self
            .pending
            .as_ref()
            .ok_or_else(|| Error::ContractViolation("no batch is pending".into()))?;
        let expected: HashSet<usize> = pending.iter().copied().collect();
        let given: HashSet<usize> = labels.iter().map(|&(id, _)| id).collect();
        if labels.len() != pending.len() || given != expected {
            return Err(Error::ContractViolation(format!(
                "labels must cover exactly the pending batch of {} examples",
                pending.len()
            )));
        }
        self.store.record_batch(labels, self.round, source)?;
        self.added += labels.len();
        self.pending = None;
        self.advance()
    }

    /// Answers every remaining batch from the pool's observed labels.
    pub fn run_to_completion(&mut self) -> Result<()> {
        while let Some(batch) = self.pending.clone() {
            let labels: Vec<(usize, ClassId)> =
                batch.iter().map(|&id| (id, self.pool.example(id).observed_label)).collect();
            self.submit(&labels, LabelSource::Oracle)?;
        }
        Ok(())
    }

    fn advance(&mut self) -> Result<()> {
        while !self.finished {
            let mut ctx = RoundContext::new(&self.pool, &self.store, &mut self.cache, &mut self.rng, &self.settings.round);
            if let Some(batch) = self.selector.next_batch(&mut ctx)? {
                debug_assert!(!batch.is_empty());
                self.pending = Some(batch);
                return Ok(());
            }
            self.finish_round()?;
        }
        self.pending = None;
        Ok(())
    }

    fn finish_round(&mut self) -> Result<()> {
        for trace in self.selector.take_traces() {
            self.log.audit.push(trace);
        }
        let truncated = self.added < self.settings.round.b_train;
        let (scores, accuracy) = match &self.scoring {
            Scoring::Trained(config) => {
                let model = train(&self.pool, &self.store, config)?;
                let accuracy = match &self.eval {
                    Some(eval) => {
                        let predictions: Vec<ClassId> = eval.features.iter().map(|x| model.predict_class(x)).collect();
                        Some(balanced_accuracy(&predictions, &eval.labels, self.pool.num_classes())?)
                    }
                    None => None,
                };
                let scores = Arc::new(model.predict_proba(&self.pool)?);
                self.model = Some(model);
                (scores, accuracy)
            }
            Scoring::Fixed(scores) => (scores.clone(), None),
        };
        self.cache = ViewCache::new(Some(scores));
        let k = self.pool.num_classes();
        for class in 0..k {
            let view = self.cache.view(class)?;
            let table = PrefixLossTable::from_labels(class, &view.labels(&self.store));
            self.thresholds[class] = Some(estimate_threshold(&table).j_hat);
        }
        let labeled = self.store.labeled_count();
        self.log.rows.push(LogRow {
            round: self.round,
            labels: labeled,
            class_counts: self.store.class_counts().to_vec(),
            minority_fraction: minority_fraction(&self.pool, &self.store),
            balanced_accuracy: accuracy,
            thresholds: self.thresholds.clone(),
            truncated,
        });
        self.round += 1;
        self.added = 0;
        if self.round >= self.settings.round.rounds || self.store.unlabeled_count() == 0 {
            self.finished = true;
        } else {
            if self.settings.strategy.needs_scores() && self.cache.scores().is_none() {
                return Err(Error::Precondition("strategy needs scores".into()));
            }
            self.selector = selector_for(self.settings.strategy, self.round);
        }
        Ok(())
    }
}
