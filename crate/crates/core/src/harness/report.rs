//! Aggregation of several seed logs into mean and standard-error curves.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::log::ExperimentLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub round: usize,
    pub labels: f64,
    pub mean_bal_acc: Option<f64>,
    pub stderr_bal_acc: Option<f64>,
    pub mean_minority_frac: f64,
    pub stderr_minority_frac: f64,
}

/// Mean and sample standard deviation over `sqrt(n)`; a single value has
/// zero standard error. Values are sorted first so the result does not
/// depend on input order.
pub fn mean_and_stderr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    if sorted.len() == 1 {
        return Some((mean, 0.0));
    }
    let mut squares: Vec<f64> = sorted.iter().map(|v| (v - mean).powi(2)).collect();
    squares.sort_by(f64::total_cmp);
    let sd = (squares.iter().sum::<f64>() / (n - 1.0)).sqrt();
    Some((mean, sd / n.sqrt()))
}

/// Groups rows by round across logs.
pub fn aggregate(logs: &[ExperimentLog]) -> Result<Vec<ReportRow>> {
    if logs.is_empty() {
        return Err(Error::InvalidInput("no logs to aggregate".into()));
    }
    let mut by_round: BTreeMap<usize, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for log in logs {
        for row in &log.rows {
            let entry = by_round.entry(row.round).or_default();
            entry.0.push(row.labels as f64);
            entry.1.push(row.minority_fraction);
            if let Some(acc) = row.balanced_accuracy {
                entry.2.push(acc);
            }
        }
    }
    Ok(by_round
        .into_iter()
        .map(|(round, (labels, minority, acc))| {
            let (mean_minority_frac, stderr_minority_frac) = mean_and_stderr(&minority).expect("non-empty");
            let bal = mean_and_stderr(&acc);
            ReportRow {
                round,
                labels: mean_and_stderr(&labels).expect("non-empty").0,
                mean_bal_acc: bal.map(|b| b.0),
                stderr_bal_acc: bal.map(|b| b.1),
                mean_minority_frac,
                stderr_minority_frac,
            }
        })
        .collect())
}

pub fn write_report<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::InvalidInput(e.to_string());
    writer
        .write_record(["round", "labels", "mean_bal_acc", "stderr_bal_acc", "mean_minority_frac", "stderr_minority_frac"])
        .map_err(to_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writer
            .write_record([
                r.round.to_string(),
                r.labels.to_string(),
                opt(r.mean_bal_acc),
                opt(r.stderr_bal_acc),
                r.mean_minority_frac.to_string(),
                r.stderr_minority_frac.to_string(),
            ])
            .map_err(to_err)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::log::LogRow;

    fn log(acc: f64, frac: f64) -> ExperimentLog {
        let mut log = ExperimentLog::new("{}".into(), 2);
        log.rows.push(LogRow {
            round: 0,
            labels: 10,
            class_counts: vec![1, 9],
            minority_fraction: frac,
            balanced_accuracy: Some(acc),
            thresholds: vec![None, None],
            truncated: false,
        });
        log
    }

    #[test]
    fn four_seed_stderr_is_sd_over_two() {
        let logs: Vec<_> = [0.5, 0.6, 0.7, 0.8].iter().map(|&a| log(a, 0.1)).collect();
        let rows = aggregate(&logs).unwrap();
        let mean = 0.65;
        let sd = ([0.5f64, 0.6, 0.7, 0.8].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert!((rows[0].mean_bal_acc.unwrap() - mean).abs() < 1e-12);
        assert!((rows[0].stderr_bal_acc.unwrap() - sd / 2.0).abs() < 1e-12);
        assert_eq!(rows[0].stderr_minority_frac, 0.0);
    }

    #[test]
    fn order_does_not_matter() {
        let a: Vec<_> = [0.1, 0.37, 0.93, 0.2].iter().map(|&v| log(v, v / 3.0)).collect();
        let mut b = a.clone();
        b.reverse();
        b.swap(0, 2);
        assert_eq!(aggregate(&a).unwrap(), aggregate(&b).unwrap());
    }
}
