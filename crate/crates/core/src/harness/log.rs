//! The per-round experiment log and its CSV form.
//!
//! ```text
//! # direct-log v1
//! # config: {"strategy":"direct",...}
//! round,labels,count_1,count_2,minority_fraction,balanced_accuracy,jhat_1,jhat_2,truncated
//! 0,100,12,88,0.1,0.71,40,3561,false
//! ```
//!
//! Class columns are one-based. Empty `balanced_accuracy` means no eval set;
//! empty `jhat_k` means no estimate.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::direct::VReduceTrace;
use crate::error::{Error, Result};

pub const LOG_VERSION_LINE: &str = "# direct-log v1";
const CONFIG_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub round: usize,
    /// Cumulative labeled count.
    pub labels: usize,
    /// Labeled count per observed class.
    pub class_counts: Vec<usize>,
    pub minority_fraction: f64,
    pub balanced_accuracy: Option<f64>,
    pub thresholds: Vec<Option<usize>>,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentLog {
    /// JSON echo of the full configuration, seeds included.
    pub config: String,
    pub num_classes: usize,
    pub rows: Vec<LogRow>,
    /// VReduce histories; written separately as JSON lines.
    pub audit: Vec<VReduceTrace>,
}

impl ExperimentLog {
    pub fn new(config: String, num_classes: usize) -> Self {
        Self { config, num_classes, rows: Vec::new(), audit: Vec::new() }
    }

    /// Checks that labeled counts grow by exactly `b_train` per
    /// non-truncated round and that class counts sum to the labeled count.
    pub fn validate(&self, b_train: usize) -> Result<()> {
        let mut previous = 0;
        for row in &self.rows {
            if row.class_counts.len() != self.num_classes || row.thresholds.len() != self.num_classes {
                return Err(Error::InvalidInput(format!("round {}: expected {} classes", row.round, self.num_classes)));
            }
            let sum: usize = row.class_counts.iter().sum();
            if sum != row.labels {
                return Err(Error::InvalidInput(format!(
                    "round {}: class counts sum to {sum}, labels column is {}",
                    row.round, row.labels
                )));
            }
            let grew = row.labels.checked_sub(previous);
            let ok = if row.truncated { grew.is_some_and(|g| g <= b_train) } else { grew == Some(b_train) };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "round {}: labels went from {previous} to {} with B_train = {b_train}",
                    row.round, row.labels
                )));
            }
            previous = row.labels;
        }
        Ok(())
    }

    /// `b_train` as recorded in the config echo.
    pub fn b_train(&self) -> Option<usize> {
        let value: serde_json::Value = serde_json::from_str(&self.config).ok()?;
        value.get("b_train")?.as_u64().map(|b| b as usize)
    }

    pub fn header(&self) -> Vec<String> {
        let k = self.num_classes;
        let mut h = vec!["round".to_string(), "labels".to_string()];
        h.extend((1..=k).map(|c| format!("count_{c}")));
        h.push("minority_fraction".into());
        h.push("balanced_accuracy".into());
        h.extend((1..=k).map(|c| format!("jhat_{c}")));
        h.push("truncated".into());
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = out;
        writeln!(out, "{LOG_VERSION_LINE}")?;
        writeln!(out, "{CONFIG_PREFIX}{}", self.config)?;
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(self.header()).map_err(csv_err)?;
        for row in &self.rows {
            let mut record = vec![row.round.to_string(), row.labels.to_string()];
            record.extend(row.class_counts.iter().map(usize::to_string));
            record.push(row.minority_fraction.to_string());
            record.push(row.balanced_accuracy.map(|a| a.to_string()).unwrap_or_default());
            record.extend(row.thresholds.iter().map(|t| t.map(|j| j.to_string()).unwrap_or_default()));
            record.push(row.truncated.to_string());
            writer.write_record(&record).map_err(csv_err)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    /// Validates (when the config echo names `b_train`) and writes the CSV.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        if let Some(b) = self.b_train() {
            self.validate(b)?;
        }
        let mut out = BufWriter::new(File::create(path)?);
        self.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_audit<W: Write>(&self, mut out: W) -> Result<()> {
        for trace in &self.audit {
            serde_json::to_writer(&mut out, trace).map_err(|e| Error::InvalidInput(e.to_string()))?;
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let mut lines = text.lines();
        if lines.next().map(str::trim_end) != Some(LOG_VERSION_LINE) {
            return Err(Error::Parse { line: 1, message: format!("expected {LOG_VERSION_LINE:?}") });
        }
        let config = lines
            .next()
            .and_then(|l| l.strip_prefix(CONFIG_PREFIX))
            .ok_or_else(|| Error::Parse { line: 2, message: "missing config line".into() })?
            .to_string();

        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = reader.headers().map_err(csv_err)?.clone();
        let k = header.iter().filter(|h| h.starts_with("count_")).count();
        let expected = ExperimentLog::new(String::new(), k).header();
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Parse { line: 3, message: "unexpected column layout".into() });
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 4;
            let record = record.map_err(csv_err)?;
            let field = |j: usize| record.get(j).unwrap_or("");
            let bad = |what: &str| Error::Parse { line, message: format!("bad {what}") };
            let num = |j: usize, what: &str| field(j).parse::<usize>().map_err(|_| bad(what));
            let opt = |j: usize| -> Result<Option<usize>> {
                if field(j).is_empty() {
                    Ok(None)
                } else {
                    field(j).parse().map(Some).map_err(|_| bad("threshold"))
                }
            };
            let class_counts = (0..k).map(|c| num(2 + c, "count")).collect::<Result<Vec<_>>>()?;
            let minority_fraction = field(2 + k).parse::<f64>().map_err(|_| bad("minority_fraction"))?;
            let balanced_accuracy = match field(3 + k) {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|_| bad("balanced_accuracy"))?),
            };
            let thresholds = (0..k).map(|c| opt(4 + k + c)).collect::<Result<Vec<_>>>()?;
            let truncated = field(4 + 2 * k).parse::<bool>().map_err(|_| bad("truncated"))?;
            rows.push(LogRow {
                round: num(0, "round")?,
                labels: num(1, "labels")?,
                class_counts,
                minority_fraction,
                balanced_accuracy,
                thresholds,
                truncated,
            });
        }
        Ok(Self { config, num_classes: k, rows, audit: Vec::new() })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::read_csv(fs::File::open(path)?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { line, message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentLog {
        let mut log = ExperimentLog::new(r#"{"b_train":10}"#.into(), 2);
        log.rows.push(LogRow {
            round: 0,
            labels: 10,
            class_counts: vec![1, 9],
            minority_fraction: 0.1,
            balanced_accuracy: Some(0.625),
            thresholds: vec![Some(3), Some(40)],
            truncated: false,
        });
        log.rows.push(LogRow {
            round: 1,
            labels: 14,
            class_counts: vec![3, 11],
            minority_fraction: 3.0 / 14.0,
            balanced_accuracy: None,
            thresholds: vec![None, Some(0)],
            truncated: true,
        });
        log
    }

    #[test]
    fn csv_round_trip() {
        let log = sample();
        let text = log.to_csv_string().unwrap();
        assert!(text.starts_with("# direct-log v1\n# config: {\"b_train\":10}\nround,labels,count_1,count_2,"));
        assert_eq!(ExperimentLog::read_csv(text.as_bytes()).unwrap(), log);
    }

    #[test]
    fn validation_catches_budget_and_count_errors() {
        let mut log = sample();
        assert!(log.validate(10).is_ok());
        log.rows[1].truncated = false;
        assert!(log.validate(10).is_err());
        let mut log = sample();
        log.rows[0].class_counts = vec![2, 9];
        assert!(log.validate(10).is_err());
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(ExperimentLog::read_csv("round,labels\n".as_bytes()).is_err());
    }
}
