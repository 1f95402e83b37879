//! The example pool, the noisy label channel and label bookkeeping.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use rand::seq::SliceRandom;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::rng;

/// Zero-based class id.
pub type ClassId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: usize,
    pub features: Vec<f64>,
    /// Hidden from every selection strategy.
    pub true_label: ClassId,
    /// What the oracle answers. Fixed once noise has been applied.
    pub observed_label: ClassId,
    /// Optional display URI forwarded to human annotators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display: Option<String>,
}

/// An immutable pool of examples. Ids are `0..len()`, stored in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    examples: Vec<Example>,
    num_classes: usize,
    dim: usize,
    class_counts: Vec<usize>,
    noise_rate: f64,
    seed: u64,
}

impl Pool {
    /// Builds a pool from examples whose ids are exactly `0..examples.len()`.
    pub fn from_examples(mut examples: Vec<Example>, num_classes: usize, seed: u64) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::InvalidInput("pool has no examples".into()));
        }
        if num_classes < 2 {
            return Err(config_err("at least two classes are required"));
        }
        examples.sort_by_key(|e| e.id);
        let dim = examples[0].features.len();
        if dim == 0 {
            return Err(Error::InvalidInput("feature dimension must be at least 1".into()));
        }
        let mut class_counts = vec![0; num_classes];
        for (i, e) in examples.iter().enumerate() {
            if e.id != i {
                return Err(Error::InvalidInput(format!(
                    "example ids must be 0..{}; id {} is missing",
                    examples.len(),
                    i
                )));
            }
            if e.features.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: e.features.len() });
            }
            if e.true_label >= num_classes || e.observed_label >= num_classes {
                return Err(Error::InvalidInput(format!("example {i} has a label outside 1..={num_classes}")));
            }
            class_counts[e.true_label] += 1;
        }
        if let Some(k) = class_counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidInput(format!("class {} has no examples", k + 1)));
        }
        Ok(Self { examples, num_classes, dim, class_counts, noise_rate: 0.0, seed })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn example(&self, id: usize) -> &Example {
        &self.examples[id]
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-class counts of true labels.
    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn noise_rate(&self) -> f64 {
        self.noise_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `min_k N_k / max_k N_k`.
    pub fn imbalance_ratio(&self) -> f64 {
        let min = *self.class_counts.iter().min().expect("non-empty");
        let max = *self.class_counts.iter().max().expect("non-empty");
        min as f64 / max as f64
    }

    /// The class with the fewest true examples; lowest id on ties.
    pub fn minority_class(&self) -> ClassId {
        let min = *self.class_counts.iter().min().expect("non-empty");
        self.class_counts.iter().position(|&c| c == min).expect("present")
    }

    /// Number of examples whose observed label differs from the true one.
    pub fn flipped_count(&self) -> usize {
        self.examples.iter().filter(|e| e.true_label != e.observed_label).count()
    }

    /// Per-class counts of observed labels.
    pub fn observed_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for e in &self.examples {
            counts[e.observed_label] += 1;
        }
        counts
    }

    /// Draws the persistent noise realization: each example independently, with
    /// probability `eta`, observes a class drawn uniformly from the other K-1.
    pub fn apply_noise(mut self, eta: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(config_err(format!("eta must lie in [0, 1], got {eta}")));
        }
        let mut rng = rng::seeded(seed, rng::STREAM_NOISE);
        let k = self.num_classes;
        for e in &mut self.examples {
            e.observed_label = e.true_label;
            if rng.random::<f64>() < eta {
                let shift = rng.random_range(1..k);
                e.observed_label = (e.true_label + shift) % k;
            }
        }
        self.noise_rate = eta;
        Ok(self)
    }

    /// Writes one `{id, features, label}` record per line with one-based labels.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_records(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_records<W: Write>(&self, out: &mut W) -> Result<()> {
        for e in &self.examples {
            let record = PoolRecord {
                id: e.id,
                features: e.features.clone(),
                label: e.true_label + 1,
                display: e.display.clone(),
            };
            let line = serde_json::to_string(&record).map_err(|err| Error::InvalidInput(err.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PoolRecord {
    id: usize,
    features: Vec<f64>,
    label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    display: Option<String>,
}

/// Parameters of the Gaussian-mixture pool generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub counts: Vec<usize>,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn generate(&self) -> Result<Pool> {
        generate_synthetic(&self.counts, self.dim, self.separation, self.seed)
    }
}

/// Class means with norm `separation`, spread as a regular simplex when
/// `dim >= K - 1`, otherwise evenly around a circle (or along a line in 1-D).
pub fn class_means(num_classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    let k = num_classes;
    let mut means = vec![vec![0.0; dim]; k];
    if dim + 1 >= k {
        // Centered one-hot vectors expressed in the Helmert basis of the
        // sum-zero subspace: coordinate j (1-based) of class c.
        let norm = ((k - 1) as f64 / k as f64).sqrt();
        for (c, mean) in means.iter_mut().enumerate() {
            for j in 1..k {
                let scale = ((j * (j + 1)) as f64).sqrt();
                let coord = if c < j {
                    1.0 / scale
                } else if c == j {
                    -(j as f64) / scale
                } else {
                    0.0
                };
                mean[j - 1] = coord / norm * separation;
            }
        }
    } else if dim == 1 {
        for (c, mean) in means.iter_mut().enumerate() {
            mean[0] = separation * (2.0 * c as f64 / (k - 1) as f64 - 1.0);
        }
    } else {
        for (c, mean) in means.iter_mut().enumerate() {
            let angle = std::f64::consts::TAU * c as f64 / k as f64;
            mean[0] = separation * angle.cos();
            mean[1] = separation * angle.sin();
        }
    }
    means
}

/// Class structure of a benchmark dataset: `classes - 1` equally sized
/// minority classes and one majority class, `gamma` = minority / majority.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub classes: usize,
    pub size: usize,
    pub gamma: f64,
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "cifar10-2", classes: 2, size: 50_000, gamma: 0.1111 },
    Preset { name: "cifar10-3", classes: 3, size: 50_000, gamma: 0.1250 },
    Preset { name: "cifar100-2", classes: 2, size: 50_000, gamma: 0.0101 },
    Preset { name: "cifar100-3", classes: 3, size: 50_000, gamma: 0.0102 },
    Preset { name: "cifar100-10", classes: 10, size: 50_000, gamma: 0.0110 },
    Preset { name: "svhn-2", classes: 2, size: 73_257, gamma: 0.0724 },
    Preset { name: "svhn-3", classes: 3, size: 54_448, gamma: 0.2546 },
    Preset { name: "pathmnist-2", classes: 2, size: 89_996, gamma: 0.1166 },
    Preset { name: "fmow-62", classes: 62, size: 76_863, gamma: 0.0049 },
    Preset { name: "iwildcam-14", classes: 14, size: 129_809, gamma: 4.57e-5 },
];

impl Preset {
    pub fn find(name: &str) -> Result<&'static Preset> {
        PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            config_err(format!("preset: unknown preset {name:?}; known: {}", names.join(", ")))
        })
    }

    /// Per-class counts for a pool of `size` examples (the dataset's own size
    /// if `None`); minority classes first. Minority classes get at least one
    /// example, so tiny pools can have a larger ratio than `gamma`.
    pub fn counts(&self, size: Option<usize>) -> Result<Vec<usize>> {
        let n = size.unwrap_or(self.size);
        let minorities = self.classes - 1;
        let majority = (n as f64 / (1.0 + minorities as f64 * self.gamma)).round() as usize;
        let minority = ((n - majority.min(n)) / minorities).max(1);
        if minority * minorities >= n {
            return Err(config_err(format!("size: {n} is too small for {} classes", self.classes)));
        }
        let mut counts = vec![minority; minorities];
        counts.push(n - minority * minorities);
        Ok(counts)
    }
}

/// Samples an isotropic unit-variance Gaussian mixture with `counts[k]`
/// examples of class k, shuffled by `seed`. Observed labels equal true labels.
pub fn generate_synthetic(counts: &[usize], dim: usize, separation: f64, seed: u64) -> Result<Pool> {
    if counts.len() < 2 {
        return Err(config_err("at least two classes are required"));
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(config_err(format!("class {} has a zero count", k + 1)));
    }
    if dim == 0 {
        return Err(config_err("feature dimension must be at least 1"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(config_err("separation must be finite and non-negative"));
    }
    let means = class_means(counts.len(), dim, separation);
    let mut rng = rng::seeded(seed, rng::STREAM_POOL);
    let mut drawn: Vec<(ClassId, Vec<f64>)> = Vec::with_capacity(counts.iter().sum());
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let features = means[class]
                .iter()
                .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                .collect();
            drawn.push((class, features));
        }
    }
    drawn.shuffle(&mut rng);
    let examples = drawn
        .into_iter()
        .enumerate()
        .map(|(id, (label, features))| Example {
            id,
            features,
            true_label: label,
            observed_label: label,
            display: None,
        })
        .collect();
    Pool::from_examples(examples, counts.len(), seed)
}

/// Reads a line-delimited pool file. When `num_classes` is `None` it is the
/// largest label present.
pub fn load_pool(path: &Path, num_classes: Option<usize>) -> Result<Pool> {
    let file = File::open(path)?;
    read_pool(BufReader::new(file), num_classes)
}

pub fn read_pool<R: BufRead>(reader: R, num_classes: Option<usize>) -> Result<Pool> {
    let mut records = Vec::new();
    let mut dim = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PoolRecord = serde_json::from_str(&line)
            .map_err(|err| Error::Parse { line: line_no, message: err.to_string() })?;
        match dim {
            None => dim = Some(record.features.len()),
            Some(d) if d != record.features.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {d} features, found {}", record.features.len()),
                })
            }
            _ => {}
        }
        if record.label == 0 || num_classes.is_some_and(|k| record.label > k) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("label {} outside 1..={}", record.label, num_classes.unwrap_or(usize::MAX)),
            });
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::InvalidInput("pool file is empty".into()));
    }
    let k = num_classes.unwrap_or_else(|| records.iter().map(|r| r.label).max().unwrap_or(0));
    let examples = records
        .into_iter()
        .map(|r| Example {
            id: r.id,
            features: r.features,
            true_label: r.label - 1,
            observed_label: r.label - 1,
            display: r.display,
        })
        .collect();
    Pool::from_examples(examples, k, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Oracle,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub id: usize,
    pub label: ClassId,
    pub round: usize,
    pub source: LabelSource,
}

/// The labeled set `L_t` (in insertion order) and its complement.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelStore {
    entries: Vec<LabelEntry>,
    slots: Vec<Option<usize>>,
    counts: Vec<usize>,
}

impl LabelStore {
    pub fn new(pool_size: usize, num_classes: usize) -> Self {
        Self { entries: Vec::new(), slots: vec![None; pool_size], counts: vec![0; num_classes] }
    }

    pub fn for_pool(pool: &Pool) -> Self {
        Self::new(pool.len(), pool.num_classes())
    }

    pub fn pool_size(&self) -> usize {
        self.slots.len()
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn is_labeled(&self, id: usize) -> bool {
        self.slots[id].is_some()
    }

    pub fn label_of(&self, id: usize) -> Option<ClassId> {
        self.slots[id].map(|slot| self.entries[slot].label)
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn labeled_count(&self) -> usize {
        self.entries.len()
    }

    pub fn unlabeled_count(&self) -> usize {
        self.slots.len() - self.entries.len()
    }

    pub fn unlabeled_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().enumerate().filter(|(_, s)| s.is_none()).map(|(i, _)| i)
    }

    /// Cached per-class counts of recorded labels.
    pub fn class_counts(&self) -> &[usize] {
        &self.counts
    }

    /// Recomputes per-class counts from the entries.
    pub fn recount(&self) -> Vec<usize> {
        let mut counts = vec![0; self.counts.len()];
        for e in &self.entries {
            counts[e.label] += 1;
        }
        counts
    }

    /// Records a batch of labels atomically: nothing is written unless every id
    /// is unlabeled, unique and every label is a valid class.
    pub fn record_batch(&mut self, labels: &[(usize, ClassId)], round: usize, source: LabelSource) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(labels.len());
        for &(id, label) in labels {
            if id >= self.slots.len() {
                return Err(Error::ContractViolation(format!("example {id} is not in the pool")));
            }
            if self.is_labeled(id) || !seen.insert(id) {
                return Err(Error::ContractViolation(format!("example {id} is already labeled")));
            }
            if label >= self.counts.len() {
                return Err(Error::ContractViolation(format!(
                    "label {} outside 1..={}",
                    label + 1,
                    self.counts.len()
                )));
            }
        }
        for &(id, label) in labels {
            self.slots[id] = Some(self.entries.len());
            self.entries.push(LabelEntry { id, label, round, source });
            self.counts[label] += 1;
        }
        Ok(())
    }
}

/// Returns the observed labels of `ids` and marks them labeled at `round`.
/// Re-querying a labeled example is a contract violation and leaves the store
/// untouched.
pub fn query_oracle(pool: &Pool, ids: &[usize], store: &mut LabelStore, round: usize) -> Result<Vec<(usize, ClassId)>> {
    let answers: Vec<(usize, ClassId)> = ids
        .iter()
        .map(|&id| {
            if id >= pool.len() {
                Err(Error::ContractViolation(format!("example {id} is not in the pool")))
            } else {
                Ok((id, pool.example(id).observed_label))
            }
        })
        .collect::<Result<_>>()?;
    store.record_batch(&answers, round, LabelSource::Oracle)?;
    Ok(answers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn small_pool(labels: &[usize]) -> Pool {
        let examples = labels
            .iter()
            .enumerate()
            .map(|(id, &l)| Example { id, features: vec![id as f64], true_label: l, observed_label: l, display: None })
            .collect();
        Pool::from_examples(examples, labels.iter().max().unwrap() + 1, 0).unwrap()
    }

    #[test]
    fn presets_reproduce_their_ratios() {
        for preset in PRESETS.iter().filter(|p| p.gamma > 1e-3) {
            let counts = preset.counts(None).unwrap();
            assert_eq!(counts.len(), preset.classes);
            assert_eq!(counts.iter().sum::<usize>(), preset.size);
            let ratio = counts[0] as f64 / *counts.last().unwrap() as f64;
            assert!((ratio - preset.gamma).abs() < 5e-4, "{} {ratio}", preset.name);
        }
        assert_eq!(Preset::find("cifar10-2").unwrap().counts(Some(1000)).unwrap(), vec![100, 900]);
        let tiny = Preset::find("iwildcam-14").unwrap().counts(Some(1000)).unwrap();
        assert_eq!(tiny[..13], [1; 13]);
        assert!(Preset::find("nope").is_err());
        assert!(Preset::find("fmow-62").unwrap().counts(Some(50)).is_err());
    }

    #[test]
    fn imbalance_ratio_matches_table_preset() {
        let pool = generate_synthetic(&[100, 900], 2, 1.0, 3).unwrap();
        assert!((pool.imbalance_ratio() - 0.1111).abs() < 1e-4);
        let pool = generate_synthetic(&[50, 50], 2, 1.0, 3).unwrap();
        assert_eq!(pool.imbalance_ratio(), 1.0);
        let pool = generate_synthetic(&[5, 100, 1000], 2, 1.0, 3).unwrap();
        assert!((pool.imbalance_ratio() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn generator_is_seeded() {
        let a = generate_synthetic(&[100, 100, 100], 3, 2.0, 9).unwrap();
        let b = generate_synthetic(&[100, 100, 100], 3, 2.0, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.imbalance_ratio(), 1.0);
        let c = generate_synthetic(&[100, 100, 100], 3, 2.0, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generator_rejects_zero_counts() {
        assert!(matches!(generate_synthetic(&[0, 10], 2, 1.0, 1), Err(Error::InvalidConfig(_))));
        assert!(generate_synthetic(&[10], 2, 1.0, 1).is_err());
        assert!(generate_synthetic(&[10, 10], 0, 1.0, 1).is_err());
    }

    #[test]
    fn simplex_means_have_requested_norm_and_equal_spacing() {
        for (k, d) in [(2, 1), (3, 2), (4, 5)] {
            let means = class_means(k, d, 3.0);
            for m in &means {
                let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - 3.0).abs() < 1e-12, "k={k} d={d} norm={norm}");
            }
            let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let d01 = dist(&means[0], &means[1]);
            for i in 0..k {
                for j in i + 1..k {
                    assert!((dist(&means[i], &means[j]) - d01).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_noise_keeps_labels() {
        let pool = generate_synthetic(&[30, 70], 2, 1.0, 1).unwrap().apply_noise(0.0, 5).unwrap();
        assert_eq!(pool.flipped_count(), 0);
    }

    #[test]
    fn full_noise_flips_every_binary_label() {
        let pool = generate_synthetic(&[30, 70], 2, 1.0, 1).unwrap().apply_noise(1.0, 5).unwrap();
        assert!(pool.examples().iter().all(|e| e.observed_label == 1 - e.true_label));
    }

    #[test]
    fn flip_targets_are_never_the_true_class() {
        let pool = generate_synthetic(&[100, 100, 100, 100], 3, 1.0, 1).unwrap().apply_noise(1.0, 2).unwrap();
        let mut targets = [0usize; 4];
        for e in pool.examples() {
            assert_ne!(e.true_label, e.observed_label);
            targets[e.observed_label] += 1;
        }
        assert!(targets.iter().all(|&t| t > 50));
    }

    #[test]
    fn noise_rate_concentrates() {
        // 3 sigma band: 0.1 +- 3 * sqrt(0.1 * 0.9 / 10000) = 0.1 +- 0.009.
        let pool = generate_synthetic(&[5000, 5000], 2, 1.0, 1).unwrap().apply_noise(0.1, 77).unwrap();
        let frac = pool.flipped_count() as f64 / pool.len() as f64;
        assert!((frac - 0.1).abs() <= 0.009, "flipped fraction {frac}");
    }

    #[test]
    fn noise_rejects_out_of_range_eta() {
        let pool = generate_synthetic(&[3, 3], 1, 1.0, 1).unwrap();
        assert!(pool.clone().apply_noise(-0.1, 1).is_err());
        assert!(pool.apply_noise(1.5, 1).is_err());
    }

    #[test]
    fn noise_is_deterministic() {
        let base = generate_synthetic(&[200, 300], 2, 1.0, 4).unwrap();
        let a = base.clone().apply_noise(0.3, 8).unwrap();
        let b = base.apply_noise(0.3, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn load_minimal_file() {
        let text = "{\"id\":0,\"features\":[0.5,1.0],\"label\":1}\n{\"id\":1,\"features\":[1.5,-1.0],\"label\":2}\n";
        let pool = read_pool(Cursor::new(text), None).unwrap();
        assert_eq!(pool.len(), 2);
        assert_eq!(pool.num_classes(), 2);
        assert_eq!(pool.imbalance_ratio(), 1.0);
    }

    #[test]
    fn load_reports_dimension_mismatch_line() {
        let text = "{\"id\":0,\"features\":[0.5,1.0],\"label\":1}\n{\"id\":1,\"features\":[1,2,3],\"label\":2}\n";
        match read_pool(Cursor::new(text), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_class_counts() {
        let text: String = [1, 1, 1, 2]
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{{\"id\":{i},\"features\":[{i}],\"label\":{l}}}\n"))
            .collect();
        let pool = read_pool(Cursor::new(text), None).unwrap();
        assert_eq!(pool.class_counts(), &[3, 1]);
        assert!((pool.imbalance_ratio() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn load_rejects_bad_labels_and_empty_files() {
        let text = "{\"id\":0,\"features\":[0.5],\"label\":1}\n{\"id\":1,\"features\":[1.5],\"label\":3}\n";
        assert!(matches!(read_pool(Cursor::new(text), Some(2)), Err(Error::Parse { line: 2, .. })));
        let text = "{\"id\":0,\"features\":[0.5],\"label\":0}\n";
        assert!(matches!(read_pool(Cursor::new(text), None), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_pool(Cursor::new(""), None), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn written_pool_reads_back() {
        let pool = generate_synthetic(&[4, 6], 3, 2.0, 12).unwrap();
        let mut buf = Vec::new();
        pool.write_records(&mut buf).unwrap();
        let back = read_pool(Cursor::new(buf), Some(2)).unwrap();
        assert_eq!(back.examples(), pool.examples());
    }

    #[test]
    fn exhaustive_query_matches_noisy_counts() {
        let pool = generate_synthetic(&[40, 60], 2, 1.0, 1).unwrap().apply_noise(0.25, 3).unwrap();
        let mut store = LabelStore::for_pool(&pool);
        let ids: Vec<usize> = (0..pool.len()).collect();
        query_oracle(&pool, &ids, &mut store, 0).unwrap();
        assert_eq!(store.class_counts(), pool.observed_counts().as_slice());
        assert_eq!(store.unlabeled_count(), 0);
    }

    #[test]
    fn empty_query_is_noop() {
        let pool = small_pool(&[0, 1, 1]);
        let mut store = LabelStore::for_pool(&pool);
        assert!(query_oracle(&pool, &[], &mut store, 0).unwrap().is_empty());
        assert_eq!(store, LabelStore::for_pool(&pool));
    }

    #[test]
    fn requery_is_rejected_atomically() {
        let pool = small_pool(&[0, 1, 1, 0]);
        let mut store = LabelStore::for_pool(&pool);
        query_oracle(&pool, &[1], &mut store, 0).unwrap();
        let before = store.clone();
        assert!(matches!(query_oracle(&pool, &[2, 1], &mut store, 1), Err(Error::ContractViolation(_))));
        assert_eq!(store, before);
        assert!(query_oracle(&pool, &[3, 3], &mut store, 1).is_err());
        assert_eq!(store, before);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn store_stays_a_partition(batches in prop::collection::vec(prop::collection::vec(0usize..40, 0..8), 0..12)) {
                let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
                let pool = small_pool(&labels);
                let mut store = LabelStore::for_pool(&pool);
                for (round, batch) in batches.iter().enumerate() {
                    let _ = query_oracle(&pool, batch, &mut store, round);
                    let labeled: Vec<usize> = (0..40).filter(|&i| store.is_labeled(i)).collect();
                    let unlabeled: Vec<usize> = store.unlabeled_ids().collect();
                    prop_assert_eq!(labeled.len() + unlabeled.len(), 40);
                    prop_assert!(unlabeled.iter().all(|&i| !store.is_labeled(i)));
                    prop_assert_eq!(store.labeled_count(), labeled.len());
                    prop_assert_eq!(store.recount(), store.class_counts().to_vec());
                }
            }
        }
    }
}
