//! The two-phase selection round.
//!
//! Phase 1 runs [`VReduce`] for every class (random class order) with budget
//! `floor(B_train / 2K)` each. Phase 2 splits whatever is left of `B_train`
//! evenly across classes (remainder to the first classes of a fresh random
//! order), estimates each class's threshold from the refreshed loss table and
//! annotates the unlabeled positions nearest to it.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::engine::{drive_round, Phase, RoundContext, RoundOutcome, RoundSelector};
use crate::error::{config_err, Result};
use crate::pool::{query_oracle, ClassId, LabelStore, Pool};
use crate::reduction::{estimate_threshold, PrefixLossTable, ThresholdEstimate};
use crate::rng::Rng;
use crate::scorer::{train, SortedClassView, TrainConfig};
use crate::vreduce::{VReduce, VersionSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundConfig {
    /// Total rounds T, including the uniform seed round.
    pub rounds: usize,
    /// Labels collected per round before the scorer is retrained.
    pub b_train: usize,
    /// Labels requested simultaneously.
    pub b_parallel: usize,
    pub seed: u64,
}

impl RoundConfig {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.rounds == 0 {
            return Err(config_err("rounds: must be at least 1"));
        }
        if self.b_parallel == 0 {
            return Err(config_err("b_parallel: must be at least 1"));
        }
        if self.b_parallel > self.b_train {
            return Err(config_err("b_parallel: must not exceed b_train"));
        }
        if self.b_train < 2 * num_classes {
            return Err(config_err(format!("b_train: must be at least 2K = {}", 2 * num_classes)));
        }
        Ok(())
    }
}

/// Unlabeled sorted positions nearest to the boundary between `j_hat` and
/// `j_hat + 1`: left `j_hat - d` before right `j_hat + 1 + d` for each
/// distance `d`, skipping labeled positions.
pub fn select_near_threshold(labels: &[Option<bool>], j_hat: usize, budget: usize) -> Vec<usize> {
    let n = labels.len();
    let mut picked = Vec::with_capacity(budget.min(n));
    let mut d = 0;
    while picked.len() < budget && (d < j_hat || j_hat + 1 + d <= n) {
        if d < j_hat {
            let left = j_hat - d;
            if labels[left - 1].is_none() {
                picked.push(left);
            }
        }
        if picked.len() < budget && j_hat + 1 + d <= n {
            let right = j_hat + 1 + d;
            if labels[right - 1].is_none() {
                picked.push(right);
            }
        }
        d += 1;
    }
    picked
}

/// Labels up to `budget` unlabeled examples nearest `j_hat` in `view`.
pub fn annotate_near_threshold(
    view: &SortedClassView,
    j_hat: usize,
    budget: usize,
    pool: &Pool,
    store: &mut LabelStore,
    round: usize,
) -> Result<Vec<usize>> {
    let positions = select_near_threshold(&view.labels(store), j_hat, budget);
    let ids: Vec<usize> = positions.iter().map(|&p| view.id_at(p)).collect();
    query_oracle(pool, &ids, store, round)?;
    Ok(ids)
}

/// VReduce history for one class in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VReduceTrace {
    pub round: usize,
    pub class: ClassId,
    /// Unlabeled positions inside the initial version space.
    pub open_positions: usize,
    pub space: VersionSpace,
}

enum Stage {
    Start,
    Locate {
        order: Vec<ClassId>,
        next: usize,
        active: Option<(Arc<SortedClassView>, VReduce, usize)>,
        queue: VecDeque<usize>,
    },
    Annotate {
        order: Vec<ClassId>,
        budgets: Vec<usize>,
        next: usize,
        active: Option<ClassId>,
        queue: VecDeque<usize>,
    },
    Done,
}

/// One round of the two-phase procedure as a [`RoundSelector`].
pub struct DirectRound {
    round: usize,
    emitted: usize,
    stage: Stage,
    estimates: Vec<ThresholdEstimate>,
    traces: Vec<VReduceTrace>,
}

impl DirectRound {
    pub fn new(round: usize) -> Self {
        Self { round, emitted: 0, stage: Stage::Start, estimates: Vec::new(), traces: Vec::new() }
    }

    fn emit(&mut self, ids: Vec<usize>) -> Option<Vec<usize>> {
        self.emitted += ids.len();
        Some(ids)
    }
}

fn permutation(k: usize, rng: &mut Rng) -> Vec<ClassId> {
    let mut order: Vec<ClassId> = (0..k).collect();
    order.shuffle(rng);
    order
}

impl RoundSelector for DirectRound {
    fn next_batch(&mut self, ctx: &mut RoundContext<'_>) -> Result<Option<Vec<usize>>> {
        let k = ctx.pool.num_classes();
        loop {
            match &mut self.stage {
                Stage::Start => {
                    let order = permutation(k, ctx.rng);
                    self.stage = Stage::Locate { order, next: 0, active: None, queue: VecDeque::new() };
                }
                Stage::Locate { order, next, active, queue } => {
                    if !queue.is_empty() {
                        // A final VReduce sample may exceed B_parallel; hand it
                        // out in chunks and absorb once all are labeled.
                        let take = ctx.b_parallel.min(queue.len());
                        let ids = queue.drain(..take).collect();
                        return Ok(self.emit(ids));
                    }
                    if let Some((view, run, _)) = active {
                        if run.is_awaiting() {
                            run.absorb(&view.labels(ctx.store));
                        }
                        if let Some(sample) = run.next_sample(&view.labels(ctx.store), ctx.rng) {
                            queue.extend(sample.iter().map(|&p| view.id_at(p)));
                            continue;
                        }
                        let (view, run, open_positions) = active.take().expect("checked above");
                        let space = run.into_space();
                        self.traces.push(VReduceTrace { round: self.round, class: view.class, open_positions, space });
                        continue;
                    }
                    if *next < order.len() {
                        let class = order[*next];
                        *next += 1;
                        let per_class = ctx.b_train / (2 * k);
                        if per_class == 0 {
                            continue;
                        }
                        let view = ctx.view(class)?;
                        let labels = view.labels(ctx.store);
                        let table = PrefixLossTable::from_labels(class, &labels);
                        let run = VReduce::new(&table, per_class, ctx.b_parallel)?;
                        let space = run.space();
                        let open = labels[space.lower..space.upper].iter().filter(|l| l.is_none()).count();
                        *active = Some((view, run, open));
                        continue;
                    }
                    let remaining = ctx.b_train.saturating_sub(self.emitted);
                    let order = permutation(k, ctx.rng);
                    let budgets = (0..k).map(|i| remaining / k + usize::from(i < remaining % k)).collect();
                    self.stage = Stage::Annotate { order, budgets, next: 0, active: None, queue: VecDeque::new() };
                }
                Stage::Annotate { order, budgets, next, active, queue } => {
                    if !queue.is_empty() {
                        let take = ctx.b_parallel.min(queue.len());
                        let ids = queue.drain(..take).collect();
                        return Ok(self.emit(ids));
                    }
                    if *next < order.len() {
                        let class = order[*next];
                        let budget = budgets[*next];
                        *next += 1;
                        *active = Some(class);
                        let view = ctx.view(class)?;
                        let labels = view.labels(ctx.store);
                        let estimate = estimate_threshold(&PrefixLossTable::from_labels(class, &labels));
                        let positions = select_near_threshold(&labels, estimate.j_hat, budget);
                        queue.extend(positions.iter().map(|&p| view.id_at(p)));
                        self.estimates.push(estimate);
                        continue;
                    }
                    self.stage = Stage::Done;
                }
                Stage::Done => return Ok(None),
            }
        }
    }

    fn phase(&self) -> Phase {
        match &self.stage {
            Stage::Start => Phase::Locate { class: None },
            Stage::Locate { active, .. } => Phase::Locate { class: active.as_ref().map(|(v, _, _)| v.class) },
            Stage::Annotate { active, .. } => Phase::Annotate { class: *active },
            Stage::Done => Phase::Idle,
        }
    }

    fn thresholds(&self) -> Vec<ThresholdEstimate> {
        self.estimates.clone()
    }

    fn take_traces(&mut self) -> Vec<VReduceTrace> {
        std::mem::take(&mut self.traces)
    }
}

/// Everything one simulated round produced.
#[derive(Debug, Clone)]
pub struct DirectRoundOutcome {
    pub outcome: RoundOutcome,
    pub thresholds: Vec<ThresholdEstimate>,
    pub traces: Vec<VReduceTrace>,
}

/// Trains a scorer on the current labels and runs one round against the
/// simulated oracle.
pub fn direct_round(
    pool: &Pool,
    store: &mut LabelStore,
    config: &RoundConfig,
    train_config: &TrainConfig,
    round: usize,
    rng: &mut Rng,
) -> Result<DirectRoundOutcome> {
    config.validate(pool.num_classes())?;
    let model = train(pool, store, train_config)?;
    let scores = Arc::new(model.predict_proba(pool)?);
    let mut selector = DirectRound::new(round);
    let outcome = drive_round(&mut selector, pool, store, Some(scores), config, round, rng)?;
    Ok(DirectRoundOutcome { outcome, thresholds: selector.thresholds(), traces: selector.take_traces() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::generate_synthetic;
    use crate::rng::seeded;
    use crate::scorer::{sorted_class_view, ScoreMatrix};

    #[test]
    fn alternates_left_then_right() {
        assert_eq!(select_near_threshold(&[None; 10], 5, 4), vec![5, 6, 4, 7]);
    }

    #[test]
    fn empty_left_side_goes_right() {
        assert_eq!(select_near_threshold(&[None; 10], 0, 3), vec![1, 2, 3]);
        assert_eq!(select_near_threshold(&[None; 10], 10, 3), vec![10, 9, 8]);
    }

    #[test]
    fn skips_labeled_positions() {
        let mut labels = vec![None; 10];
        labels[4] = Some(true);
        labels[5] = Some(false);
        assert_eq!(select_near_threshold(&labels, 5, 2), vec![4, 7]);
    }

    #[test]
    fn oversized_budget_labels_everything_left() {
        let mut labels = vec![None; 6];
        labels[0] = Some(true);
        let mut picked = select_near_threshold(&labels, 2, 50);
        picked.sort_unstable();
        assert_eq!(picked, vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn config_validation() {
        let ok = RoundConfig { rounds: 3, b_train: 20, b_parallel: 5, seed: 0 };
        assert!(ok.validate(2).is_ok());
        assert!(RoundConfig { b_parallel: 21, ..ok }.validate(2).is_err());
        assert!(RoundConfig { b_train: 5, b_parallel: 1, ..ok }.validate(3).is_err());
        assert!(RoundConfig { rounds: 0, ..ok }.validate(2).is_err());
    }

    fn fixed_scores(pool: &Pool) -> Arc<ScoreMatrix> {
        // Score by the first feature: a noisy but informative ordering.
        let rows = pool
            .examples()
            .iter()
            .map(|e| {
                let logits: Vec<f64> = (0..pool.num_classes()).map(|c| e.features[0] * (c as f64 - 1.0)).collect();
                crate::scorer::softmax(&logits)
            })
            .collect();
        Arc::new(ScoreMatrix::from_rows(rows).unwrap())
    }

    fn seeded_store(pool: &Pool, count: usize) -> LabelStore {
        let mut store = LabelStore::for_pool(pool);
        let ids: Vec<usize> = (0..count).map(|i| i * (pool.len() / count)).collect();
        query_oracle(pool, &ids, &mut store, 0).unwrap();
        store
    }

    #[test]
    fn binary_budget_split() {
        let pool = generate_synthetic(&[100, 400], 2, 2.0, 3).unwrap();
        let mut store = seeded_store(&pool, 20);
        let config = RoundConfig { rounds: 2, b_train: 20, b_parallel: 1, seed: 1 };
        let mut rng = seeded(1, 2);
        let mut selector = DirectRound::new(1);
        let before = store.labeled_count();
        let outcome = drive_round(&mut selector, &pool, &mut store, Some(fixed_scores(&pool)), &config, 1, &mut rng).unwrap();
        assert_eq!(outcome.added, 20);
        assert!(!outcome.truncated);
        assert_eq!(store.labeled_count() - before, 20);
        let traces = selector.take_traces();
        assert_eq!(traces.len(), 2);
        for trace in &traces {
            let spent: usize = trace.space.history.iter().map(|s| s.queried.len()).sum();
            // Early stops hand budget to phase 2.
            assert!((1..=5).contains(&spent));
        }
    }

    #[test]
    fn three_class_remainder_goes_to_first_classes() {
        let pool = generate_synthetic(&[200, 200, 200], 2, 2.0, 3).unwrap();
        let mut store = seeded_store(&pool, 30);
        let config = RoundConfig { rounds: 2, b_train: 20, b_parallel: 1, seed: 1 };
        let mut rng = seeded(5, 2);
        let mut selector = DirectRound::new(1);
        let mut batches: Vec<(Phase, usize)> = Vec::new();
        let scores = fixed_scores(&pool);
        let mut cache = crate::engine::ViewCache::new(Some(scores));
        loop {
            let mut ctx = RoundContext::new(&pool, &store, &mut cache, &mut rng, &config);
            let Some(batch) = selector.next_batch(&mut ctx).unwrap() else { break };
            batches.push((selector.phase(), batch.len()));
            query_oracle(&pool, &batch, &mut store, 1).unwrap();
        }
        let phase1: usize = batches.iter().filter(|(p, _)| matches!(p, Phase::Locate { .. })).map(|b| b.1).sum();
        assert_eq!(phase1, 9);
        let mut per_class = [0usize; 3];
        let mut order = Vec::new();
        for (phase, n) in &batches {
            if let Phase::Annotate { class: Some(c) } = phase {
                per_class[*c] += n;
                if !order.contains(c) {
                    order.push(*c);
                }
            }
        }
        assert_eq!(order.len(), 3);
        assert_eq!(per_class[order[0]], 4);
        assert_eq!(per_class[order[1]], 4);
        assert_eq!(per_class[order[2]], 3);
    }

    #[test]
    fn exhausted_pool_truncates_round() {
        let pool = generate_synthetic(&[10, 14], 2, 2.0, 3).unwrap();
        let mut store = seeded_store(&pool, 12);
        let config = RoundConfig { rounds: 2, b_train: 20, b_parallel: 2, seed: 1 };
        let mut rng = seeded(2, 2);
        let mut selector = DirectRound::new(1);
        let outcome = drive_round(&mut selector, &pool, &mut store, Some(fixed_scores(&pool)), &config, 1, &mut rng).unwrap();
        assert!(outcome.truncated);
        assert_eq!(outcome.added, 12);
        assert_eq!(store.unlabeled_count(), 0);
    }

    #[test]
    fn annotate_wrapper_labels_nearest() {
        let pool = generate_synthetic(&[10, 10], 1, 2.0, 3).unwrap();
        let scores = fixed_scores(&pool);
        let view = sorted_class_view(&scores, 0);
        let mut store = LabelStore::for_pool(&pool);
        let ids = annotate_near_threshold(&view, 5, 4, &pool, &mut store, 0).unwrap();
        assert_eq!(ids, vec![view.id_at(5), view.id_at(6), view.id_at(4), view.id_at(7)]);
        assert_eq!(store.labeled_count(), 4);
    }

    #[test]
    fn simulated_round_trains_and_selects() {
        let pool = generate_synthetic(&[60, 240], 2, 2.5, 8).unwrap();
        let mut store = seeded_store(&pool, 20);
        let config = RoundConfig { rounds: 2, b_train: 20, b_parallel: 4, seed: 1 };
        let mut rng = seeded(3, 2);
        let out = direct_round(&pool, &mut store, &config, &TrainConfig::default(), 1, &mut rng).unwrap();
        assert_eq!(out.outcome.added, 20);
        assert_eq!(out.thresholds.len(), 2);
        assert_eq!(store.labeled_count(), 40);
    }
}
