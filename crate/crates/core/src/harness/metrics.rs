//! Evaluation metrics and the stratified holdout split.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::pool::{ClassId, Example, LabelStore, Pool};
use crate::rng;

/// Held-out examples with their true (noise-free) labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<ClassId>,
}

impl EvalSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

/// Mean per-class recall. Every class must occur in `truth`.
pub fn balanced_accuracy(predictions: &[ClassId], truth: &[ClassId], num_classes: usize) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidInput("evaluation set is empty".into()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), found: predictions.len() });
    }
    let mut total = vec![0usize; num_classes];
    let mut correct = vec![0usize; num_classes];
    for (&p, &y) in predictions.iter().zip(truth) {
        if y >= num_classes {
            return Err(Error::InvalidInput(format!("label {} outside 1..={num_classes}", y + 1)));
        }
        total[y] += 1;
        if p == y {
            correct[y] += 1;
        }
    }
    if let Some(k) = total.iter().position(|&t| t == 0) {
        return Err(Error::MissingClass(k + 1));
    }
    let sum: f64 = (0..num_classes).map(|k| correct[k] as f64 / total[k] as f64).sum();
    Ok(sum / num_classes as f64)
}

/// Fraction of labeled examples whose true class is the pool's minority class.
pub fn minority_fraction(pool: &Pool, store: &LabelStore) -> f64 {
    let labeled = store.labeled_count();
    if labeled == 0 {
        return 0.0;
    }
    let minority = pool.minority_class();
    let hits = store.entries().iter().filter(|e| pool.example(e.id).true_label == minority).count();
    hits as f64 / labeled as f64
}

/// Number of eval examples taken from a class of size `count`.
pub fn holdout_count(count: usize, fraction: f64) -> usize {
    ((fraction * count as f64).round() as usize).clamp(1, count - 1)
}

/// Stratified split: `holdout_count(N_k, fraction)` examples of each class
/// go to the eval set. The training pool is re-indexed from 0 in the original
/// id order and keeps the source pool's labels.
pub fn holdout_split(pool: &Pool, fraction: f64, seed: u64) -> Result<(Pool, EvalSet)> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(config_err("holdout_fraction: must lie in (0, 0.5]"));
    }
    if let Some(k) = pool.class_counts().iter().position(|&c| c < 2) {
        return Err(Error::InvalidInput(format!("class {} needs at least 2 examples for a holdout split", k + 1)));
    }
    let mut rng = rng::seeded(seed, rng::STREAM_HOLDOUT);
    let mut held = vec![false; pool.len()];
    for class in 0..pool.num_classes() {
        let members: Vec<usize> =
            pool.examples().iter().filter(|e| e.true_label == class).map(|e| e.id).collect();
        let take = holdout_count(members.len(), fraction);
        for i in index::sample(&mut rng, members.len(), take) {
            held[members[i]] = true;
        }
    }
    let mut eval = EvalSet { features: Vec::new(), labels: Vec::new() };
    let mut train = Vec::new();
    for e in pool.examples() {
        if held[e.id] {
            eval.features.push(e.features.clone());
            eval.labels.push(e.true_label);
        } else {
            train.push(Example { id: train.len(), ..e.clone() });
        }
    }
    Ok((Pool::from_examples(train, pool.num_classes(), pool.seed())?, eval))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::generate_synthetic;

    #[test]
    fn balanced_accuracy_examples() {
        assert_eq!(balanced_accuracy(&[0, 1, 1], &[0, 1, 1], 2).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&[1, 1, 1, 1], &[0, 1, 1, 1], 2).unwrap(), 0.5);
        // Recalls 1.0, 0.5 and 0.3.
        let mut truth = vec![0; 2];
        let mut pred = vec![0; 2];
        truth.extend([1, 1]);
        pred.extend([1, 0]);
        truth.extend([2; 10]);
        pred.extend([2, 2, 2, 0, 0, 0, 0, 0, 0, 0]);
        assert!((balanced_accuracy(&pred, &truth, 3).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn missing_class_is_named() {
        assert!(matches!(balanced_accuracy(&[0, 0], &[0, 0], 3), Err(Error::MissingClass(2))));
    }

    #[test]
    fn stratified_counts() {
        let pool = generate_synthetic(&[100, 900], 2, 1.0, 1).unwrap();
        let (train, eval) = holdout_split(&pool, 0.2, 3).unwrap();
        assert_eq!(eval.labels.iter().filter(|&&y| y == 0).count(), 20);
        assert_eq!(eval.labels.iter().filter(|&&y| y == 1).count(), 180);
        assert_eq!(train.class_counts(), &[80, 720]);

        let pool = generate_synthetic(&[10, 10], 2, 1.0, 1).unwrap();
        let (_, eval) = holdout_split(&pool, 0.5, 3).unwrap();
        assert_eq!(eval.labels.iter().filter(|&&y| y == 0).count(), 5);
        assert_eq!(eval.len(), 10);
    }

    #[test]
    fn split_is_seeded() {
        let pool = generate_synthetic(&[30, 70], 2, 1.0, 1).unwrap();
        assert_eq!(holdout_split(&pool, 0.3, 9).unwrap(), holdout_split(&pool, 0.3, 9).unwrap());
        assert_ne!(holdout_split(&pool, 0.3, 9).unwrap().1, holdout_split(&pool, 0.3, 10).unwrap().1);
    }

    #[test]
    fn singleton_class_is_rejected() {
        let pool = generate_synthetic(&[1, 70], 2, 1.0, 1).unwrap();
        assert!(holdout_split(&pool, 0.2, 1).is_err());
        assert!(holdout_split(&generate_synthetic(&[5, 5], 2, 1.0, 1).unwrap(), 0.7, 1).is_err());
    }
}
