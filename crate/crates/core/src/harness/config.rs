//! Experiment configuration files (TOML).
//!
//! ```toml
//! strategy = "direct"
//! rounds = 8
//! b_train = 100
//! b_parallel = 5
//! seed = 1
//! eta = 0.2
//!
//! [pool.synthetic]
//! counts = [400, 3600]
//! dim = 2
//! separation = 1.5
//! seed = 7
//!
//! [scorer]
//! epochs = 300
//! ```
//!
//! `[pool]` may instead hold `path = "pool.jsonl"`. Relative paths resolve
//! against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::direct::RoundConfig;
use crate::engine::{Experiment, ExperimentSettings, Scoring, Strategy};
use crate::error::{config_err, Result};
use crate::harness::metrics::{holdout_split, EvalSet};
use crate::pool::{load_pool, Pool, SyntheticSpec};
use crate::scorer::{load_scores, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSource {
    Path(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub epochs: usize,
    pub step: f64,
    /// Defaults to 0.1 when `eta > 0`, else 0.
    pub label_smoothing: Option<f64>,
    pub reweight: bool,
    /// Fixed score matrix (JSON lines `{id, probs}`); disables training and
    /// the accuracy metric.
    pub scores: Option<PathBuf>,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self { epochs: t.epochs, step: t.step, label_smoothing: None, reweight: t.reweight, scores: None }
    }
}

fn default_holdout() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: String,
    pub rounds: usize,
    pub b_train: usize,
    pub b_parallel: usize,
    pub seed: u64,
    #[serde(default)]
    pub eta: f64,
    /// Defaults to `seed`.
    #[serde(default)]
    pub noise_seed: Option<u64>,
    /// Stratified eval fraction; 0 disables the holdout.
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub pool: PoolSource,
    #[serde(default)]
    pub scorer: ScorerConfig,
}

/// Everything needed to start an [`Experiment`].
#[derive(Clone)]
pub struct Prepared {
    pub pool: Arc<Pool>,
    pub eval: Option<Arc<EvalSet>>,
    pub settings: ExperimentSettings,
    pub scoring: Scoring,
    pub echo: String,
}

impl Prepared {
    pub fn start(self) -> Result<Experiment> {
        Experiment::new(self.pool, self.eval, self.settings, self.scoring, self.echo)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| config_err(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads and validates a config file, resolving relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut config = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let PoolSource::Path(p) = &mut self.pool {
            fix(p);
        }
        if let Some(p) = &mut self.scorer.scores {
            fix(p);
        }
        if let Some(p) = &mut self.output_dir {
            fix(p);
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn strategy(&self) -> Result<Strategy> {
        self.strategy.parse()
    }

    pub fn round_config(&self) -> RoundConfig {
        RoundConfig { rounds: self.rounds, b_train: self.b_train, b_parallel: self.b_parallel, seed: self.seed }
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed.unwrap_or(self.seed)
    }

    pub fn train_config(&self) -> TrainConfig {
        let smoothing = self.scorer.label_smoothing.unwrap_or(if self.eta > 0.0 { 0.1 } else { 0.0 });
        TrainConfig { epochs: self.scorer.epochs, step: self.scorer.step, label_smoothing: smoothing, reweight: self.scorer.reweight }
    }

    /// Field-level checks that do not need the pool.
    pub fn validate(&self) -> Result<()> {
        self.strategy()?;
        if self.rounds == 0 {
            return Err(config_err("rounds: must be at least 1"));
        }
        if self.b_parallel == 0 {
            return Err(config_err("b_parallel: must be at least 1"));
        }
        if self.b_parallel > self.b_train {
            return Err(config_err("b_parallel: must not exceed b_train"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(config_err("eta: must lie in [0, 1]"));
        }
        if !(self.holdout_fraction == 0.0 || (self.holdout_fraction > 0.0 && self.holdout_fraction <= 0.5)) {
            return Err(config_err("holdout_fraction: must be 0 or lie in (0, 0.5]"));
        }
        if self.scorer.epochs == 0 {
            return Err(config_err("scorer.epochs: must be at least 1"));
        }
        if !(self.scorer.step > 0.0 && self.scorer.step.is_finite()) {
            return Err(config_err("scorer.step: must be positive"));
        }
        if let Some(eps) = self.scorer.label_smoothing {
            if !(0.0..1.0).contains(&eps) {
                return Err(config_err("scorer.label_smoothing: must lie in [0, 1)"));
            }
        }
        if let PoolSource::Synthetic(spec) = &self.pool {
            if spec.counts.len() < 2 {
                return Err(config_err("pool.synthetic.counts: at least two classes are required"));
            }
        }
        Ok(())
    }

    /// The config as echoed into log headers: JSON with the noise seed filled in.
    pub fn echo(&self) -> String {
        let mut resolved = self.clone();
        resolved.noise_seed = Some(self.noise_seed());
        serde_json::to_string(&resolved).expect("config serializes")
    }

    /// Builds the pool, splits off the eval set, applies noise and loads any
    /// fixed scores. With fixed scores there is no holdout: score rows are
    /// indexed by the original pool ids.
    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let strategy = self.strategy()?;
        let full = match &self.pool {
            PoolSource::Path(path) => load_pool(path, None)?,
            PoolSource::Synthetic(spec) => spec.generate()?,
        };
        self.round_config().validate(full.num_classes())?;
        let (pool, eval, scoring) = match &self.scorer.scores {
            Some(path) => {
                let scores = load_scores(path, full.len())?;
                (full, None, Scoring::Fixed(Arc::new(scores)))
            }
            None if self.holdout_fraction > 0.0 => {
                let (train, eval) = holdout_split(&full, self.holdout_fraction, self.seed)?;
                (train, Some(Arc::new(eval)), Scoring::Trained(self.train_config()))
            }
            None => (full, None, Scoring::Trained(self.train_config())),
        };
        let pool = pool.apply_noise(self.eta, self.noise_seed())?;
        Ok(Prepared {
            pool: Arc::new(pool),
            eval,
            settings: ExperimentSettings { strategy, round: self.round_config() },
            scoring,
            echo: self.echo(),
        })
    }
}
