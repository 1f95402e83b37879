//! Self-checks run by `direct verify`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::baselines::extra_cut_probability_mc;
use crate::error::Result;
use crate::reduction::{lemma_equivalence_check, PrefixLossTable};
use crate::rng::{self, Rng};
use crate::scorer::{SoftmaxModel, TrainConfig, TrainingSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// A random small training problem and model with random parameters.
pub fn random_gradient_instance(rng: &mut Rng) -> (SoftmaxModel, TrainingSet) {
    let k = rng.random_range(2..=4);
    let d = rng.random_range(1..=5);
    let n = rng.random_range(1..=20);
    let features: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let targets = (0..n).map(|_| rng.random_range(0..k)).collect();
    let config = TrainConfig {
        label_smoothing: if rng.random_bool(0.5) { rng.random_range(0.0..0.3) } else { 0.0 },
        reweight: rng.random_bool(0.5),
        ..TrainConfig::default()
    };
    let data = TrainingSet::new(features, targets, k, config.reweight);
    let mut model = SoftmaxModel::zeros(k, d, config);
    let params: Vec<f64> = (0..k * d + k).map(|_| rng.random_range(-1.0..1.0)).collect();
    model.set_params(&params);
    (model, data)
}

/// Norm-wise relative error between the analytic gradient and central
/// differences with step `h`.
pub fn gradient_relative_error(model: &SoftmaxModel, data: &TrainingSet, h: f64) -> f64 {
    let (_, analytic) = model.loss_and_gradient(data);
    let base = model.params();
    let mut probe = model.clone();
    let numeric: Vec<f64> = (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + h;
            probe.set_params(&p);
            let up = probe.loss(data);
            p[i] = base[i] - h;
            probe.set_params(&p);
            let down = probe.loss(data);
            (up - down) / (2.0 * h)
        })
        .collect();
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.to_string(), passed, detail }
}

/// Runs every self-check. `trials` sets the Monte-Carlo size.
pub fn run_verification(trials: usize, seed: u64) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let mut rng = rng::seeded(seed, 0);

    let mut failures = 0;
    for i in 0..1200 {
        let (k, n) = if i < 1000 { (2, rng.random_range(1..=50)) } else { (rng.random_range(3..=6), rng.random_range(1..=50)) };
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let class = rng.random_range(0..k);
        if !lemma_equivalence_check(&labels, class) {
            failures += 1;
        }
    }
    checks.push(check("loss/discrepancy equivalence", failures == 0, format!("{failures} failures in 1200 sequences")));

    let mut mismatches = 0;
    for _ in 0..500 {
        let n = rng.random_range(0..=200);
        let labels: Vec<Option<bool>> =
            (0..n).map(|_| if rng.random_bool(0.5) { Some(rng.random_bool(0.5)) } else { None }).collect();
        let table = PrefixLossTable::from_labels(0, &labels);
        let direct: Vec<usize> = (0..=n)
            .map(|j| (0..n).filter(|&i| labels[i].is_some_and(|y| y != (i < j))).count())
            .collect();
        if table.losses != direct {
            mismatches += 1;
        }
    }
    checks.push(check("loss table", mismatches == 0, format!("{mismatches} mismatches in 500 instances")));

    let worst = (0..50)
        .map(|_| {
            let (model, data) = random_gradient_instance(&mut rng);
            gradient_relative_error(&model, &data, 1e-5)
        })
        .fold(0.0, f64::max);
    checks.push(check("gradient", worst <= 1e-5, format!("max relative error {worst:.2e}")));

    for eta in [0.0, 0.05, 0.1, 0.2] {
        for b in [20, 40] {
            let est = extra_cut_probability_mc(100, 900, eta, b, trials, seed)?;
            let passed = if eta == 0.0 { est.observed == 0.0 } else { est.holds() };
            checks.push(check(
                &format!("extra cut eta={eta} b={b}"),
                passed,
                format!("observed {:.4}, bound {:.4}, tolerance {:.4}", est.observed, est.bound, est.tolerance()),
            ));
        }
    }
    Ok(VerifyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_verification_passes() {
        let report = run_verification(300, 1).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
