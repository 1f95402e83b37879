//! Browser demo. Each export takes plain numbers and returns a JSON string
//! for `www/index.html` to draw; the `*_json` functions are the same
//! operations without the JS error wrapper.

use direct_core::baselines::{extra_cut_bound, extra_cut_probability_mc};
use direct_core::harness::config::{ExperimentConfig, PoolSource, ScorerConfig};
use direct_core::harness::run_experiment;
use direct_core::pool::SyntheticSpec;
use direct_core::rng::{seeded, STREAM_NOISE, STREAM_SELECTION};
use direct_core::vreduce::{run_on_sequence, VReduceStep};
use rand::Rng as _;
use serde::Serialize;
use wasm_bindgen::prelude::*;

type DemoResult = Result<String, String>;

fn to_json<T: Serialize>(value: &T) -> DemoResult {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Trace {
    pub n: usize,
    pub j_star: usize,
    /// Noisy one-vs-rest labels of every queried position, in query order.
    pub queried: Vec<(usize, bool)>,
    pub steps: Vec<VReduceStep>,
    pub lower: usize,
    pub upper: usize,
    pub contains: bool,
}

/// One VReduce run on `n1` class positions followed by `n - n1` others,
/// each answer flipped with probability `eta`.
pub fn vreduce_trace_json(n: usize, n1: usize, eta: f64, budget: usize, b_parallel: usize, seed: u32) -> DemoResult {
    if n1 == 0 || n1 >= n {
        return Err("need 0 < n1 < n".into());
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err("eta must lie in [0, 1]".into());
    }
    let mut noise = seeded(seed as u64, STREAM_NOISE);
    let observed: Vec<bool> = (1..=n).map(|p| (p <= n1) != noise.random_bool(eta)).collect();
    let mut labels = vec![None; n];
    let mut queried = Vec::new();
    let mut rng = seeded(seed as u64, STREAM_SELECTION);
    let (space, _) = run_on_sequence(
        &mut labels,
        |p| {
            queried.push((p, observed[p - 1]));
            observed[p - 1]
        },
        budget,
        b_parallel,
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    to_json(&Trace {
        n,
        j_star: n1,
        queried,
        lower: space.lower,
        upper: space.upper,
        contains: space.contains(n1),
        steps: space.history,
    })
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub b: usize,
    pub bound: f64,
    pub observed: f64,
}

/// Extra-cut frequency against its lower bound for every even budget from
/// the smallest one above `2 log2 N` up to `b_max`.
pub fn extra_cut_curve_json(n1: usize, n2: usize, eta: f64, b_max: usize, trials: usize, seed: u32) -> DemoResult {
    let n = n1 + n2;
    let b_min = (2.0 * (n as f64).log2()).floor() as usize + 1;
    let b_min = b_min + b_min % 2;
    if b_max < b_min {
        return Err(format!("b_max must be at least {b_min} for N = {n}"));
    }
    let points = (b_min..=b_max)
        .step_by(2)
        .map(|b| {
            let est = extra_cut_probability_mc(n1, n2, eta, b, trials, seed as u64).map_err(|e| e.to_string())?;
            Ok(CurvePoint { b, bound: extra_cut_bound(eta, b), observed: est.observed })
        })
        .collect::<Result<Vec<_>, String>>()?;
    to_json(&points)
}

#[derive(Debug, Serialize)]
pub struct StrategyCurve {
    pub strategy: String,
    pub labels: Vec<usize>,
    pub minority_fraction: Vec<f64>,
    pub balanced_accuracy: Vec<Option<f64>>,
}

pub const DEMO_STRATEGIES: [&str; 5] = ["direct", "confidence", "random", "most_likely_positive", "galaxy_bisection"];

/// Per-round curves of every strategy on one two-class synthetic pool.
pub fn strategy_curves_json(
    minority: usize,
    majority: usize,
    rounds: usize,
    b_train: usize,
    eta: f64,
    seed: u32,
) -> DemoResult {
    let curves = DEMO_STRATEGIES
        .iter()
        .map(|&strategy| {
            let config = ExperimentConfig {
                strategy: strategy.into(),
                rounds,
                b_train,
                b_parallel: 5.min(b_train),
                seed: seed as u64,
                eta,
                noise_seed: None,
                holdout_fraction: 0.2,
                output_dir: None,
                pool: PoolSource::Synthetic(SyntheticSpec {
                    counts: vec![minority, majority],
                    dim: 5,
                    separation: 1.5,
                    seed: seed as u64,
                }),
                scorer: ScorerConfig::default(),
            };
            let log = run_experiment(&config).map_err(|e| e.to_string())?;
            Ok(StrategyCurve {
                strategy: strategy.to_string(),
                labels: log.rows.iter().map(|r| r.labels).collect(),
                minority_fraction: log.rows.iter().map(|r| r.minority_fraction).collect(),
                balanced_accuracy: log.rows.iter().map(|r| r.balanced_accuracy).collect(),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    to_json(&curves)
}

#[wasm_bindgen]
pub fn vreduce_trace(n: usize, n1: usize, eta: f64, budget: usize, b_parallel: usize, seed: u32) -> Result<String, JsError> {
    vreduce_trace_json(n, n1, eta, budget, b_parallel, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn extra_cut_curve(n1: usize, n2: usize, eta: f64, b_max: usize, trials: usize, seed: u32) -> Result<String, JsError> {
    extra_cut_curve_json(n1, n2, eta, b_max, trials, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn strategy_curves(
    minority: usize,
    majority: usize,
    rounds: usize,
    b_train: usize,
    eta: f64,
    seed: u32,
) -> Result<String, JsError> {
    strategy_curves_json(minority, majority, rounds, b_train, eta, seed).map_err(|e| JsError::new(&e))
}
