//! Selection-only timing of one DIRECT round.
//!
//! Scores are random probability vectors, so no scorer is trained; the timed
//! section covers building the sorted views, both phases and the oracle
//! bookkeeping.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::direct::{DirectRound, RoundConfig};
use crate::engine::drive_round;
use crate::error::{config_err, Result};
use crate::pool::{query_oracle, Example, LabelStore, Pool};
use crate::rng;
use crate::scorer::ScoreMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub k: usize,
    pub b_train: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub rows: Vec<TimingRow>,
    /// Least-squares slope of log(time) against log(N).
    pub exponent: f64,
}

/// A pool of size `n` with 1-D dummy features, random labels covering all
/// classes, random scores and a seeded labeled set of `b_train` examples.
pub fn timing_fixture(n: usize, k: usize, b_train: usize, seed: u64) -> Result<(Pool, Arc<ScoreMatrix>, LabelStore)> {
    if n < k || k < 2 {
        return Err(config_err("n: need at least K >= 2 examples"));
    }
    let mut rng = rng::seeded(seed, rng::STREAM_POOL);
    let examples = (0..n)
        .map(|id| {
            let label = if id < k { id } else { rng.random_range(0..k) };
            Example { id, features: vec![0.0], true_label: label, observed_label: label, display: None }
        })
        .collect();
    let pool = Pool::from_examples(examples, k, seed)?;
    let rows = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        })
        .collect();
    let scores = Arc::new(ScoreMatrix::from_rows(rows)?);
    let mut store = LabelStore::for_pool(&pool);
    let seeds = b_train.min(n - 1);
    let seed_ids: Vec<usize> = (0..seeds).map(|i| i * n / seeds).collect();
    query_oracle(&pool, &seed_ids, &mut store, 0)?;
    Ok((pool, scores, store))
}

/// Fastest of `reps` timed DIRECT rounds.
pub fn time_selection(n: usize, k: usize, b_train: usize, reps: usize, seed: u64) -> Result<Duration> {
    let (pool, scores, store) = timing_fixture(n, k, b_train, seed)?;
    let b_train = b_train.max(2 * k);
    let config = RoundConfig { rounds: 2, b_train, b_parallel: 5.min(b_train), seed };
    let mut best = Duration::MAX;
    for rep in 0..reps.max(1) {
        let mut store = store.clone();
        let mut rng = rng::seeded(seed + rep as u64, rng::STREAM_SELECTION);
        let start = Instant::now();
        let mut selector = DirectRound::new(1);
        drive_round(&mut selector, &pool, &mut store, Some(scores.clone()), &config, 1, &mut rng)?;
        best = best.min(start.elapsed());
    }
    Ok(best)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if var == 0.0 {
        0.0
    } else {
        cov / var
    }
}

/// Times one round for each N and fits the growth exponent.
pub fn complexity_smoke(ns: &[usize], k: usize, b_train: usize, reps: usize) -> Result<ComplexityReport> {
    let min = ns.iter().copied().min().unwrap_or(0);
    let max = ns.iter().copied().max().unwrap_or(0);
    if ns.len() < 3 || min == 0 || max < 4 * min {
        return Err(config_err("n: need at least 3 pool sizes spanning a factor of 4"));
    }
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let elapsed = time_selection(n, k, b_train, reps, 1)?;
        rows.push(TimingRow { n, k, b_train, seconds: elapsed.as_secs_f64() });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.seconds.max(1e-9))).collect();
    Ok(ComplexityReport { exponent: log_log_slope(&points), rows })
}
