//! Linear softmax scorer, score matrices and per-class sorted views.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::{ClassId, LabelStore, Pool};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub step: f64,
    /// Mass moved off the observed class, spread evenly over the others.
    pub label_smoothing: f64,
    /// Weight each example by the inverse labeled frequency of its class.
    pub reweight: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 300, step: 0.5, label_smoothing: 0.0, reweight: true }
    }
}

/// Labeled training data in the form the objective consumes.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<ClassId>,
    /// Per-example weights with mean 1.
    pub weights: Vec<f64>,
    pub num_classes: usize,
}

impl TrainingSet {
    pub fn from_store(pool: &Pool, store: &LabelStore, reweight: bool) -> Result<Self> {
        let entries = store.entries();
        if entries.is_empty() {
            return Err(Error::Precondition("training needs at least one labeled example".into()));
        }
        let features = entries.iter().map(|e| pool.example(e.id).features.clone()).collect();
        let targets: Vec<ClassId> = entries.iter().map(|e| e.label).collect();
        Ok(Self::new(features, targets, pool.num_classes(), reweight))
    }

    pub fn new(features: Vec<Vec<f64>>, targets: Vec<ClassId>, num_classes: usize, reweight: bool) -> Self {
        let weights = if reweight {
            inverse_frequency_weights(&targets, num_classes)
        } else {
            vec![1.0; targets.len()]
        };
        Self { features, targets, weights, num_classes }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// `1 / count(class)` per example, rescaled to mean 1.
pub fn inverse_frequency_weights(targets: &[ClassId], num_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; num_classes];
    for &t in targets {
        counts[t] += 1;
    }
    let raw: Vec<f64> = targets.iter().map(|&t| 1.0 / counts[t] as f64).collect();
    let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
    raw.into_iter().map(|w| w / mean).collect()
}

/// A K x D linear map plus bias followed by softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    num_classes: usize,
    dim: usize,
    /// Row-major K x D.
    weights: Vec<f64>,
    bias: Vec<f64>,
    config: TrainConfig,
}

impl SoftmaxModel {
    pub fn zeros(num_classes: usize, dim: usize, config: TrainConfig) -> Self {
        Self { num_classes, dim, weights: vec![0.0; num_classes * dim], bias: vec![0.0; num_classes], config }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Weights followed by bias, as one flat vector.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let split = self.weights.len();
        assert_eq!(params.len(), split + self.bias.len(), "parameter length");
        self.weights.copy_from_slice(&params[..split]);
        self.bias.copy_from_slice(&params[split..]);
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_classes)
            .map(|c| {
                let row = &self.weights[c * self.dim..(c + 1) * self.dim];
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[c]
            })
            .collect()
    }

    pub fn predict_row(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    pub fn predict_class(&self, x: &[f64]) -> ClassId {
        argmax(&self.predict_row(x))
    }

    pub fn predict_proba(&self, pool: &Pool) -> Result<ScoreMatrix> {
        if pool.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: pool.dim() });
        }
        let mut probs = Vec::with_capacity(pool.len() * self.num_classes);
        for e in pool.examples() {
            probs.extend(self.predict_row(&e.features));
        }
        Ok(ScoreMatrix { rows: pool.len(), num_classes: self.num_classes, probs })
    }

    /// Weighted, label-smoothed mean cross entropy and its gradient with
    /// respect to [`params`](Self::params).
    pub fn loss_and_gradient(&self, data: &TrainingSet) -> (f64, Vec<f64>) {
        let k = self.num_classes;
        let d = self.dim;
        let n = data.len() as f64;
        let eps = self.config.label_smoothing;
        let off = if k > 1 { eps / (k - 1) as f64 } else { 0.0 };
        let mut loss = 0.0;
        let mut grad = vec![0.0; k * d + k];
        for ((x, &target), &w) in data.features.iter().zip(&data.targets).zip(&data.weights) {
            let logits = self.logits(x);
            let probs = softmax(&logits);
            let log_norm = log_sum_exp(&logits);
            for c in 0..k {
                let t = if c == target { 1.0 - eps } else { off };
                if t > 0.0 {
                    loss -= w * t * (logits[c] - log_norm);
                }
                let g = w * (probs[c] - t) / n;
                let row = &mut grad[c * d..(c + 1) * d];
                for (gj, xj) in row.iter_mut().zip(x) {
                    *gj += g * xj;
                }
                grad[k * d + c] += g;
            }
        }
        (loss / n, grad)
    }

    pub fn loss(&self, data: &TrainingSet) -> f64 {
        self.loss_and_gradient(data).0
    }
}

/// Trains a fresh zero-initialised model on every labeled example by full-batch
/// gradient descent.
pub fn train(pool: &Pool, store: &LabelStore, config: &TrainConfig) -> Result<SoftmaxModel> {
    let data = TrainingSet::from_store(pool, store, config.reweight)?;
    Ok(fit(&data, pool.dim(), config))
}

pub fn fit(data: &TrainingSet, dim: usize, config: &TrainConfig) -> SoftmaxModel {
    let mut model = SoftmaxModel::zeros(data.num_classes, dim, *config);
    let mut params = model.params();
    for _ in 0..config.epochs {
        let (_, grad) = model.loss_and_gradient(data);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= config.step * g;
        }
        model.set_params(&params);
    }
    model
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Index of the largest entry; lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Row `i` holds the softmax probability vector of example `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    num_classes: usize,
    probs: Vec<f64>,
}

const ROW_SUM_TOLERANCE: f64 = 1e-9;
const RENORMALIZE_TOLERANCE: f64 = 1e-6;

impl ScoreMatrix {
    /// Builds a matrix from probability rows, renormalising rows whose sum is
    /// within 1e-6 of one and rejecting the rest.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_classes = rows.first().map(Vec::len).unwrap_or(0);
        if num_classes < 2 {
            return Err(Error::InvalidInput("score rows need at least two classes".into()));
        }
        let mut probs = Vec::with_capacity(rows.len() * num_classes);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != num_classes {
                return Err(Error::DimensionMismatch { expected: num_classes, found: row.len() });
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidInput(format!("row {i} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
                return Err(Error::InvalidInput(format!("row {i} sums to {sum}")));
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                probs.extend(row.iter().map(|p| p / sum));
            } else {
                probs.extend_from_slice(row);
            }
        }
        Ok(Self { rows: rows.len(), num_classes, probs })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn prob(&self, i: usize, k: ClassId) -> f64 {
        self.probs[i * self.num_classes + k]
    }

    /// `max_{k' != k} p[k'] - p[k]`: negative exactly when k is the strict argmax.
    pub fn separation_score(&self, i: usize, k: ClassId) -> f64 {
        let row = self.row(i);
        let rival = row
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != k)
            .map(|(_, &p)| p)
            .fold(f64::NEG_INFINITY, f64::max);
        rival - row[k]
    }

    /// Gap between the two largest probabilities of row `i`.
    pub fn top_two_gap(&self, i: usize) -> f64 {
        let mut first = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for &p in self.row(i) {
            if p > first {
                second = first;
                first = p;
            } else if p > second {
                second = p;
            }
        }
        first - second
    }
}

/// Reads `{id, probs}` records covering every id in `0..pool_size`.
pub fn load_scores(path: &Path, pool_size: usize) -> Result<ScoreMatrix> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; pool_size];
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ScoreRecord =
            serde_json::from_str(&line).map_err(|err| Error::Parse { line: idx + 1, message: err.to_string() })?;
        let slot = rows
            .get_mut(record.id)
            .ok_or_else(|| Error::Parse { line: idx + 1, message: format!("id {} outside the pool", record.id) })?;
        *slot = Some(record.probs);
    }
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| Error::InvalidInput(format!("no scores for example {i}"))))
        .collect::<Result<Vec<_>>>()?;
    ScoreMatrix::from_rows(rows)
}

#[derive(Debug, Deserialize)]
struct ScoreRecord {
    id: usize,
    probs: Vec<f64>,
}

/// Separation scores of every example for class `k`.
pub fn class_separation_scores(scores: &ScoreMatrix, k: ClassId) -> Vec<f64> {
    (0..scores.rows()).map(|i| scores.separation_score(i, k)).collect()
}

/// Examples ordered from "confidently k" to "confidently not k".
#[derive(Debug, Clone, PartialEq)]
pub struct SortedClassView {
    pub class: ClassId,
    /// `order[r]` is the example id at sorted position `r + 1`.
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
}

impl SortedClassView {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Example id at one-based sorted position `pos`.
    pub fn id_at(&self, pos: usize) -> usize {
        self.order[pos - 1]
    }

    /// One-vs-rest observed labels in sorted order; `None` where unlabeled.
    pub fn labels(&self, store: &LabelStore) -> Vec<Option<bool>> {
        self.order.iter().map(|&id| store.label_of(id).map(|l| l == self.class)).collect()
    }

    /// One-vs-rest true labels in sorted order.
    pub fn true_labels(&self, pool: &Pool) -> Vec<bool> {
        self.order.iter().map(|&id| pool.example(id).true_label == self.class).collect()
    }
}

/// Sorts ascending by separation score, then by descending class-k
/// confidence, then by example id.
pub fn sorted_class_view(scores: &ScoreMatrix, k: ClassId) -> SortedClassView {
    let sep = class_separation_scores(scores, k);
    let confidence: Vec<f64> = (0..scores.rows()).map(|i| scores.prob(i, k)).collect();
    let order = separation_order(&sep, &confidence);
    let sorted = order.iter().map(|&i| sep[i]).collect();
    SortedClassView { class: k, order, scores: sorted }
}

/// The total order behind [`sorted_class_view`].
pub fn separation_order(separation: &[f64], confidence: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..separation.len()).collect();
    order.sort_by(|&a, &b| {
        separation[a]
            .total_cmp(&separation[b])
            .then_with(|| confidence[b].total_cmp(&confidence[a]))
            .then_with(|| a.cmp(&b))
    });
    order
}

/// Sorted views for every class, computed in parallel when enabled.
pub fn all_class_views(scores: &ScoreMatrix) -> Vec<SortedClassView> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..scores.num_classes()).into_par_iter().map(|k| sorted_class_view(scores, k)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..scores.num_classes()).map(|k| sorted_class_view(scores, k)).collect()
    }
}
