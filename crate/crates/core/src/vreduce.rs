//! Version-space reduction for one class.
//!
//! The plausible thresholds form an interval `[I, J]`. Each iteration samples
//! unlabeled sorted positions uniformly from `I+1..=J`, waits for their labels,
//! and replaces the interval with a geometrically shorter one minimising the
//! larger of the empirical losses at its two endpoints.
//!
//! [`VReduce`] is a resumable state machine so that a human annotation session
//! and the simulator share one code path: call [`VReduce::next_sample`], label
//! the returned positions, call [`VReduce::absorb`], repeat until `None`.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::{query_oracle, LabelStore, Pool};
use crate::reduction::PrefixLossTable;
use crate::rng::Rng;
use crate::scorer::SortedClassView;

/// One completed iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VReduceStep {
    /// Interval sampled from.
    pub lower: usize,
    pub upper: usize,
    /// Sorted positions queried this iteration.
    pub queried: Vec<usize>,
    /// Interval after the update.
    pub next_lower: usize,
    pub next_upper: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionSpace {
    pub lower: usize,
    pub upper: usize,
    /// Planned iteration count m.
    pub iterations: usize,
    /// Shrink factor c.
    pub shrink: f64,
    pub history: Vec<VReduceStep>,
}

impl VersionSpace {
    pub fn width(&self) -> usize {
        self.upper - self.lower
    }

    pub fn contains(&self, j: usize) -> bool {
        self.lower <= j && j <= self.upper
    }
}

/// The hull of the empirical-loss minimiser set.
pub fn init_version_space(table: &PrefixLossTable) -> (usize, usize) {
    let minimizers = table.minimizers();
    (minimizers[0], *minimizers.last().expect("non-empty"))
}

/// Among intervals `[i, i + len]` inside `[lower, upper]`, the one minimising
/// `max(L(i), L(i + len))`. Ties go to the interval overlapping most with the
/// hull of the current loss minimisers, then to the center nearest the
/// current center, then to the smaller `i`.
pub fn shrink_interval(table: &PrefixLossTable, lower: usize, upper: usize, len: usize) -> (usize, usize) {
    debug_assert!(len <= upper - lower);
    let (hull_lo, hull_hi) = init_version_space(table);
    let center2 = (lower + upper) as i64;
    let mut best = (lower, (usize::MAX, i64::MAX, u64::MAX));
    for i in lower..=upper - len {
        let value = table.losses[i].max(table.losses[i + len]);
        let overlap = (i + len).min(hull_hi) as i64 - i.max(hull_lo) as i64;
        let off_center = ((2 * i + len) as i64 - center2).unsigned_abs();
        let key = (value, -overlap, off_center);
        if key < best.1 {
            best = (i, key);
        }
    }
    (best.0, best.0 + len)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VReduce {
    space: VersionSpace,
    budget: usize,
    b_parallel: usize,
    spent: usize,
    iteration: usize,
    awaiting: Option<Vec<usize>>,
    finished: bool,
}

impl VReduce {
    /// Plans `m = max(1, floor(b / B_parallel))` iterations; the final one also
    /// takes the remainder `b - m * B_parallel`.
    pub fn new(table: &PrefixLossTable, budget: usize, b_parallel: usize) -> Result<Self> {
        if budget < 1 {
            return Err(Error::Precondition("VReduce budget must be at least 1".into()));
        }
        if b_parallel < 1 {
            return Err(Error::Precondition("B_parallel must be at least 1".into()));
        }
        let (lower, upper) = init_version_space(table);
        let iterations = (budget / b_parallel).max(1);
        let width = upper - lower;
        let shrink = if width > 0 { (width as f64).powf(1.0 / iterations as f64) } else { 1.0 };
        Ok(Self {
            space: VersionSpace { lower, upper, iterations, shrink, history: Vec::new() },
            budget,
            b_parallel,
            spent: 0,
            iteration: 0,
            awaiting: None,
            finished: false,
        })
    }

    pub fn space(&self) -> &VersionSpace {
        &self.space
    }

    pub fn into_space(self) -> VersionSpace {
        self.space
    }

    pub fn spent(&self) -> usize {
        self.spent
    }

    /// Budget not used so far; after the run it flows back to the caller.
    pub fn remaining(&self) -> usize {
        self.budget - self.spent
    }

    pub fn is_awaiting(&self) -> bool {
        self.awaiting.is_some()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn batch_size(&self) -> usize {
        let m = self.space.iterations;
        if self.iteration + 1 < m {
            self.b_parallel
        } else {
            self.budget - (m - 1) * self.b_parallel
        }
    }

    /// Samples the next iteration's positions (one-based, ascending) or returns
    /// `None` once the schedule is complete or `[I, J]` holds nothing unlabeled.
    pub fn next_sample(&mut self, labels: &[Option<bool>], rng: &mut Rng) -> Option<Vec<usize>> {
        assert!(self.awaiting.is_none(), "absorb the previous sample first");
        if self.finished || self.iteration >= self.space.iterations {
            self.finished = true;
            return None;
        }
        let candidates: Vec<usize> =
            (self.space.lower + 1..=self.space.upper).filter(|&p| labels[p - 1].is_none()).collect();
        if candidates.is_empty() {
            self.finished = true;
            return None;
        }
        let amount = self.batch_size().min(candidates.len());
        let mut picked: Vec<usize> =
            index::sample(rng, candidates.len(), amount).into_iter().map(|i| candidates[i]).collect();
        picked.sort_unstable();
        self.spent += picked.len();
        self.awaiting = Some(picked.clone());
        Some(picked)
    }

    /// Consumes the labels of the last sample and shrinks the version space.
    pub fn absorb(&mut self, labels: &[Option<bool>]) {
        let queried = self.awaiting.take().expect("no sample awaiting labels");
        debug_assert!(queried.iter().all(|&p| labels[p - 1].is_some()));
        self.iteration += 1;
        let (lower, upper) = (self.space.lower, self.space.upper);
        let width = upper - lower;
        if width > 0 {
            let target = if self.iteration >= self.space.iterations {
                1
            } else {
                ((width as f64 / self.space.shrink).round() as usize).max(1)
            };
            let table = PrefixLossTable::from_labels(0, labels);
            let (i, j) = shrink_interval(&table, lower, upper, target.min(width));
            self.space.lower = i;
            self.space.upper = j;
        }
        self.space.history.push(VReduceStep {
            lower,
            upper,
            queried,
            next_lower: self.space.lower,
            next_upper: self.space.upper,
        });
    }
}

/// Runs VReduce on a bare one-vs-rest sequence, answering queries from
/// `oracle(position)`. `labels` is updated in place.
pub fn run_on_sequence(
    labels: &mut [Option<bool>],
    mut oracle: impl FnMut(usize) -> bool,
    budget: usize,
    b_parallel: usize,
    rng: &mut Rng,
) -> Result<(VersionSpace, usize)> {
    let table = PrefixLossTable::from_labels(0, labels);
    let mut run = VReduce::new(&table, budget, b_parallel)?;
    while let Some(sample) = run.next_sample(labels, rng) {
        for p in sample {
            labels[p - 1] = Some(oracle(p));
        }
        run.absorb(labels);
    }
    let remaining = run.remaining();
    Ok((run.into_space(), remaining))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VReduceOutcome {
    pub space: VersionSpace,
    /// Labels added.
    pub spent: usize,
    /// Unspent budget handed back to the caller.
    pub remaining: usize,
}

/// Runs VReduce for `view.class` against the simulated oracle.
pub fn vreduce_run(
    pool: &Pool,
    store: &mut LabelStore,
    view: &SortedClassView,
    budget: usize,
    b_parallel: usize,
    rng: &mut Rng,
    round: usize,
) -> Result<VReduceOutcome> {
    let table = PrefixLossTable::from_labels(view.class, &view.labels(store));
    let mut run = VReduce::new(&table, budget, b_parallel)?;
    loop {
        let labels = view.labels(store);
        let Some(sample) = run.next_sample(&labels, rng) else { break };
        let ids: Vec<usize> = sample.iter().map(|&p| view.id_at(p)).collect();
        query_oracle(pool, &ids, store, round)?;
        run.absorb(&view.labels(store));
    }
    Ok(VReduceOutcome { spent: run.spent(), remaining: run.remaining(), space: run.into_space() })
}
