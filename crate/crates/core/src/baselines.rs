//! Comparison strategies and the extra-cut Monte-Carlo harness.
//!
//! The bisection strategy here is a simplified GALAXY: it finds cuts (adjacent
//! labeled positions with opposite one-vs-rest labels) by bisection and then
//! samples around every cut it knows about. Outputs call it
//! "simplified-GALAXY".

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::direct::RoundConfig;
use crate::engine::{drive_round, Phase, RoundContext, RoundOutcome, RoundSelector};
use crate::error::{config_err, Result};
use crate::pool::{ClassId, LabelStore, Pool};
use crate::rng::{self, Rng};
use crate::scorer::ScoreMatrix;

/// Uniformly random unlabeled ids, at most `budget`.
pub fn random_selection(store: &LabelStore, budget: usize, rng: &mut Rng) -> Vec<usize> {
    let unlabeled: Vec<usize> = store.unlabeled_ids().collect();
    let amount = budget.min(unlabeled.len());
    index::sample(rng, unlabeled.len(), amount).into_iter().map(|i| unlabeled[i]).collect()
}

/// The `budget` unlabeled ids with the smallest top-two probability gap.
pub fn confidence_selection(scores: &ScoreMatrix, store: &LabelStore, budget: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = store.unlabeled_ids().collect();
    ids.sort_by(|&a, &b| scores.top_two_gap(a).total_cmp(&scores.top_two_gap(b)).then(a.cmp(&b)));
    ids.truncate(budget);
    ids
}

/// Rarest class among the current labels; zero counts included, ties to the
/// lowest class id.
pub fn rarest_class(store: &LabelStore) -> ClassId {
    let counts = store.class_counts();
    (0..counts.len()).min_by_key(|&k| (counts[k], k)).expect("at least one class")
}

/// The `budget` unlabeled ids with the highest probability of the rarest
/// labeled class.
pub fn most_likely_positive_selection(scores: &ScoreMatrix, store: &LabelStore, budget: usize) -> Vec<usize> {
    let r = rarest_class(store);
    let mut ids: Vec<usize> = store.unlabeled_ids().collect();
    ids.sort_by(|&a, &b| scores.prob(b, r).total_cmp(&scores.prob(a, r)).then(a.cmp(&b)));
    ids.truncate(budget);
    ids
}

type PickFn = fn(&mut RoundContext<'_>) -> Result<Vec<usize>>;

/// Picks the whole round up front, then hands it out in `B_parallel` chunks.
struct QueuedSelector {
    phase: Phase,
    pick: PickFn,
    queue: Option<VecDeque<usize>>,
}

impl QueuedSelector {
    fn next(&mut self, ctx: &mut RoundContext<'_>) -> Result<Option<Vec<usize>>> {
        if self.queue.is_none() {
            self.queue = Some((self.pick)(ctx)?.into());
        }
        let queue = self.queue.as_mut().expect("filled above");
        if queue.is_empty() {
            self.phase = Phase::Idle;
            return Ok(None);
        }
        let take = ctx.b_parallel.min(queue.len());
        Ok(Some(queue.drain(..take).collect()))
    }
}

macro_rules! queued_selector {
    ($(#[$doc:meta])* $name:ident, $pick:expr) => {
        $(#[$doc])*
        pub struct $name(QueuedSelector);

        impl $name {
            pub fn new() -> Self {
                Self(QueuedSelector { phase: Phase::Select, pick: $pick, queue: None })
            }
        }

        impl Default for $name {
            fn default() -> Self {
                Self::new()
            }
        }

        impl RoundSelector for $name {
            fn next_batch(&mut self, ctx: &mut RoundContext<'_>) -> Result<Option<Vec<usize>>> {
                self.0.next(ctx)
            }

            fn phase(&self) -> Phase {
                self.0.phase
            }
        }
    };
}

queued_selector!(
    /// Uniform sampling; also the seed round of every strategy.
    RandomSelector,
    |ctx| Ok(random_selection(ctx.store, ctx.b_train, ctx.rng))
);

queued_selector!(
    /// Smallest top-two gap first.
    ConfidenceSelector,
    |ctx| {
        let b = ctx.b_train;
        Ok(confidence_selection(ctx.scores()?, ctx.store, b))
    }
);

queued_selector!(
    /// Highest probability of the rarest labeled class.
    MostLikelyPositiveSelector,
    |ctx| {
        let b = ctx.b_train;
        Ok(most_likely_positive_selection(ctx.scores()?, ctx.store, b))
    }
);

impl RandomSelector {
    /// The uniform seed round.
    pub fn seed() -> Self {
        let mut s = Self::new();
        s.0.phase = Phase::Seed;
        s
    }
}

/// Cuts in a sorted one-vs-rest label sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutRecord {
    /// `(p, q)`: consecutive labeled positions (one-based, unlabeled gaps
    /// ignored) whose labels differ.
    pub cuts: Vec<(usize, usize)>,
}

impl CutRecord {
    pub fn from_labels(labels: &[Option<bool>]) -> Self {
        Self::from_labeled(&labeled_positions(labels))
    }

    /// From `(position, label)` pairs sorted by position.
    pub fn from_labeled(labeled: &[(usize, bool)]) -> Self {
        let cuts = labeled.windows(2).filter(|w| w[0].1 != w[1].1).map(|w| (w[0].0, w[1].0)).collect();
        Self { cuts }
    }

    /// Whether some cut brackets threshold `j` (`p <= j < q`).
    pub fn brackets(&self, j: usize) -> bool {
        self.cuts.iter().any(|&(p, q)| p <= j && j < q)
    }

    /// Cuts found beyond the one at the optimal threshold `j_star`.
    pub fn extra_cut_count(&self, j_star: usize) -> usize {
        self.cuts.len() - usize::from(self.brackets(j_star))
    }
}

fn labeled_positions(labels: &[Option<bool>]) -> Vec<(usize, bool)> {
    labels.iter().enumerate().filter_map(|(i, l)| l.map(|b| (i + 1, b))).collect()
}

/// One bisection step over positions `1..=n`.
///
/// Bisects the shortest unlabeled run between opposite-labeled neighbours;
/// with no such run, takes the nearest unlabeled position around the known
/// cuts, cycling through them via `cursor`. `None` means neither applies.
pub fn galaxy_step(
    labeled: &[(usize, bool)],
    n: usize,
    is_labeled: impl Fn(usize) -> bool,
    cursor: &mut usize,
) -> Option<usize> {
    let cuts = CutRecord::from_labeled(labeled).cuts;
    if let Some(&(p, q)) = cuts.iter().filter(|(p, q)| q - p > 1).min_by_key(|&&(p, q)| (q - p, p)) {
        return Some((p + q) / 2);
    }
    for t in 0..cuts.len() {
        let (p, q) = cuts[(*cursor + t) % cuts.len()];
        for d in 0..n {
            let left = p.checked_sub(d).filter(|&x| x >= 1);
            let right = Some(q + d).filter(|&x| x <= n);
            if left.is_none() && right.is_none() {
                break;
            }
            if let Some(x) = left.into_iter().chain(right).find(|&x| !is_labeled(x)) {
                *cursor = *cursor + t + 1;
                return Some(x);
            }
        }
    }
    None
}

/// Simplified GALAXY: one label per batch, classes in round-robin, with
/// confidence sampling when no class has a cut to work on.
pub struct GalaxySelector {
    emitted: usize,
    turn: usize,
    cursors: Vec<usize>,
    done: bool,
}

impl GalaxySelector {
    pub fn new() -> Self {
        Self { emitted: 0, turn: 0, cursors: Vec::new(), done: false }
    }
}

impl Default for GalaxySelector {
    fn default() -> Self {
        Self::new()
    }
}

impl RoundSelector for GalaxySelector {
    fn next_batch(&mut self, ctx: &mut RoundContext<'_>) -> Result<Option<Vec<usize>>> {
        let k = ctx.pool.num_classes();
        if self.cursors.is_empty() {
            self.cursors = vec![0; k];
        }
        if self.emitted >= ctx.b_train || ctx.store.unlabeled_count() == 0 {
            self.done = true;
            return Ok(None);
        }
        for _ in 0..k {
            let class = self.turn % k;
            self.turn += 1;
            let view = ctx.view(class)?;
            let labels = view.labels(ctx.store);
            let labeled = labeled_positions(&labels);
            if let Some(pos) = galaxy_step(&labeled, labels.len(), |p| labels[p - 1].is_some(), &mut self.cursors[class]) {
                self.emitted += 1;
                return Ok(Some(vec![view.id_at(pos)]));
            }
        }
        let fallback = confidence_selection(ctx.scores()?, ctx.store, 1);
        self.emitted += fallback.len();
        Ok(Some(fallback))
    }

    fn phase(&self) -> Phase {
        if self.done {
            Phase::Idle
        } else {
            Phase::Select
        }
    }
}

fn run_selector(
    mut selector: impl RoundSelector,
    pool: &Pool,
    store: &mut LabelStore,
    scores: Option<Arc<ScoreMatrix>>,
    b_train: usize,
    round: usize,
    rng: &mut Rng,
) -> Result<RoundOutcome> {
    let config = RoundConfig { rounds: 1, b_train, b_parallel: b_train.max(1), seed: 0 };
    if b_train == 0 {
        return Ok(RoundOutcome { added: 0, truncated: false });
    }
    drive_round(&mut selector, pool, store, scores, &config, round, rng)
}

/// Labels `b_train` uniformly random unlabeled examples from the oracle.
pub fn random_strategy(pool: &Pool, store: &mut LabelStore, b_train: usize, round: usize, rng: &mut Rng) -> Result<RoundOutcome> {
    run_selector(RandomSelector::new(), pool, store, None, b_train, round, rng)
}

pub fn confidence_strategy(
    scores: Arc<ScoreMatrix>,
    pool: &Pool,
    store: &mut LabelStore,
    b_train: usize,
    round: usize,
) -> Result<RoundOutcome> {
    let mut rng = rng::seeded(0, 0);
    run_selector(ConfidenceSelector::new(), pool, store, Some(scores), b_train, round, &mut rng)
}

pub fn most_likely_positive_strategy(
    scores: Arc<ScoreMatrix>,
    pool: &Pool,
    store: &mut LabelStore,
    b_train: usize,
    round: usize,
) -> Result<RoundOutcome> {
    let mut rng = rng::seeded(0, 0);
    run_selector(MostLikelyPositiveSelector::new(), pool, store, Some(scores), b_train, round, &mut rng)
}

/// Sequential simplified-GALAXY labeling of `b_train` examples.
pub fn galaxy_bisection_strategy(
    scores: Arc<ScoreMatrix>,
    pool: &Pool,
    store: &mut LabelStore,
    b_train: usize,
    round: usize,
) -> Result<RoundOutcome> {
    let mut rng = rng::seeded(0, 0);
    let config = RoundConfig { rounds: 1, b_train, b_parallel: 1, seed: 0 };
    if b_train == 0 {
        return Ok(RoundOutcome { added: 0, truncated: false });
    }
    drive_round(&mut GalaxySelector::new(), pool, store, Some(scores), &config, round, &mut rng)
}

/// One row of the extra-cut experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtraCutEstimate {
    pub eta: f64,
    pub b: usize,
    pub trials: usize,
    /// `1 - (1 - eta)^(b/2)`.
    pub bound: f64,
    pub observed: f64,
}

impl ExtraCutEstimate {
    /// Three binomial standard errors at the observed frequency.
    pub fn tolerance(&self) -> f64 {
        3.0 * (self.observed * (1.0 - self.observed) / self.trials as f64).sqrt()
    }

    pub fn holds(&self) -> bool {
        self.observed >= self.bound - self.tolerance()
    }
}

pub fn extra_cut_bound(eta: f64, b: usize) -> f64 {
    1.0 - (1.0 - eta).powf(b as f64 / 2.0)
}

/// Runs simplified GALAXY (sequentially) on `n1` class-k positions followed
/// by `n2` others, each label flipped with probability `eta`, and reports
/// whether more than the optimal cut was found within `b` labels.
///
/// Both endpoints are labeled first and count toward `b`. When no cut is
/// known the next label is the unlabeled position closest to the middle,
/// which is what confidence sampling picks on the linear scores
/// `(i + 0.5) / N`.
pub fn extra_cut_trial(n1: usize, n2: usize, eta: f64, b: usize, rng: &mut Rng) -> bool {
    let n = n1 + n2;
    let observed: Vec<bool> = (1..=n)
        .map(|i| {
            let truth = i <= n1;
            if rng.random::<f64>() < eta {
                !truth
            } else {
                truth
            }
        })
        .collect();
    let mut is_labeled = vec![false; n + 1];
    let mut labeled: Vec<(usize, bool)> = Vec::with_capacity(b);
    let add = |pos: usize, labeled: &mut Vec<(usize, bool)>, is_labeled: &mut Vec<bool>| {
        let at = labeled.partition_point(|&(p, _)| p < pos);
        labeled.insert(at, (pos, observed[pos - 1]));
        is_labeled[pos] = true;
    };
    let mut cursor = 0;
    for first in [1, n] {
        if labeled.len() < b && !is_labeled[first] {
            add(first, &mut labeled, &mut is_labeled);
        }
    }
    while labeled.len() < b.min(n) {
        let pos = galaxy_step(&labeled, n, |p| is_labeled[p], &mut cursor)
            .or_else(|| middle_unlabeled(&is_labeled, n))
            .expect("an unlabeled position remains");
        add(pos, &mut labeled, &mut is_labeled);
    }
    CutRecord::from_labeled(&labeled).extra_cut_count(n1) >= 1
}

fn middle_unlabeled(is_labeled: &[bool], n: usize) -> Option<usize> {
    // Smallest |2i - (n + 1)|, ties to the smaller position.
    (1..=n).filter(|&i| !is_labeled[i]).min_by_key(|&i| ((2 * i) as i64 - (n as i64 + 1)).unsigned_abs())
}

/// Monte-Carlo frequency of finding at least one extra cut.
pub fn extra_cut_probability_mc(
    n1: usize,
    n2: usize,
    eta: f64,
    b: usize,
    trials: usize,
    seed: u64,
) -> Result<ExtraCutEstimate> {
    if n1 == 0 || n2 == 0 {
        return Err(config_err("n1, n2: both sides need at least one position"));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(config_err("eta: must lie in [0, 1]"));
    }
    if trials == 0 {
        return Err(config_err("trials: must be at least 1"));
    }
    let n = n1 + n2;
    if (b as f64) <= 2.0 * (n as f64).log2() {
        return Err(config_err(format!("b: must exceed 2*log2(N) = {:.2}", 2.0 * (n as f64).log2())));
    }
    let trial = |t: usize| {
        let mut rng = rng::seeded(seed, rng::STREAM_TRIALS + t as u64);
        extra_cut_trial(n1, n2, eta, b, &mut rng)
    };
    #[cfg(feature = "parallel")]
    let hits = {
        use rayon::prelude::*;
        (0..trials).into_par_iter().filter(|&t| trial(t)).count()
    };
    #[cfg(not(feature = "parallel"))]
    let hits = (0..trials).filter(|&t| trial(t)).count();
    Ok(ExtraCutEstimate { eta, b, trials, bound: extra_cut_bound(eta, b), observed: hits as f64 / trials as f64 })
}
