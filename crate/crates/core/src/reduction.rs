//! One-dimensional reduction: threshold hypotheses over a sorted view and
//! their zero-one losses.
//!
//! Sorted positions are one-based (`1..=N`); a threshold `j` in `0..=N`
//! predicts class k on positions `1..=j` and "not k" on the rest. Label
//! sequences are one-vs-rest: `Some(true)` means labeled k, `Some(false)`
//! labeled something else, `None` unlabeled.

use serde::{Deserialize, Serialize};

use crate::pool::{ClassId, LabelStore, Pool};
use crate::scorer::SortedClassView;

/// `losses[s]` is the number of labeled examples misclassified by threshold `s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixLossTable {
    pub class: ClassId,
    pub losses: Vec<usize>,
    pub labeled_mask: Vec<bool>,
}

impl PrefixLossTable {
    /// One prefix-sum pass over the sorted labels.
    pub fn from_labels(class: ClassId, labels: &[Option<bool>]) -> Self {
        let positives = labels.iter().filter(|l| **l == Some(true)).count();
        let mut losses = Vec::with_capacity(labels.len() + 1);
        let mut loss = positives;
        losses.push(loss);
        for label in labels {
            match label {
                Some(true) => loss -= 1,
                Some(false) => loss += 1,
                None => {}
            }
            losses.push(loss);
        }
        let labeled_mask = labels.iter().map(Option::is_some).collect();
        Self { class, losses, labeled_mask }
    }

    /// Number of sorted positions N.
    pub fn len(&self) -> usize {
        self.losses.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn min_loss(&self) -> usize {
        *self.losses.iter().min().expect("table has N + 1 entries")
    }

    /// Every threshold achieving the minimum loss, ascending.
    pub fn minimizers(&self) -> Vec<usize> {
        let min = self.min_loss();
        (0..self.losses.len()).filter(|&s| self.losses[s] == min).collect()
    }

    /// Labeled-k minus labeled-not-k count over positions `1..=j`.
    pub fn discrepancy(&self, j: usize) -> i64 {
        self.losses[0] as i64 - self.losses[j] as i64
    }
}

pub fn empirical_loss_table(view: &SortedClassView, store: &LabelStore) -> PrefixLossTable {
    PrefixLossTable::from_labels(view.class, &view.labels(store))
}

/// The optimal separation threshold of a fully labeled one-vs-rest sequence:
/// the prefix maximising (#k - #not-k). Ties go to the largest maximiser when
/// k is the minority side (`N_k <= N - N_k`) and to the smallest otherwise.
pub fn brute_force_optimal_threshold(is_k: &[bool]) -> usize {
    let (set, _) = argmax_prefix_discrepancy(is_k);
    let positives = is_k.iter().filter(|&&b| b).count();
    if positives <= is_k.len() - positives {
        *set.last().expect("non-empty")
    } else {
        set[0]
    }
}

/// [`brute_force_optimal_threshold`] on the true labels under `view`.
pub fn optimal_threshold_for_view(view: &SortedClassView, pool: &Pool) -> usize {
    brute_force_optimal_threshold(&view.true_labels(pool))
}

/// All maximisers of the prefix discrepancy and the maximum value.
pub fn argmax_prefix_discrepancy(is_k: &[bool]) -> (Vec<usize>, i64) {
    let mut values = Vec::with_capacity(is_k.len() + 1);
    let mut running = 0i64;
    values.push(running);
    for &b in is_k {
        running += if b { 1 } else { -1 };
        values.push(running);
    }
    let max = *values.iter().max().expect("non-empty");
    let set = (0..values.len()).filter(|&j| values[j] == max).collect();
    (set, max)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub class: ClassId,
    pub j_hat: usize,
    pub argmax_set: Vec<usize>,
    pub discrepancy: i64,
}

/// Maximises the labeled prefix discrepancy; ties go to the threshold
/// closest to N/2, then to the smaller index.
pub fn estimate_threshold(table: &PrefixLossTable) -> ThresholdEstimate {
    let argmax_set = table.minimizers();
    let n = table.len();
    let j_hat = *argmax_set
        .iter()
        .min_by_key(|&&j| ((2 * j) as i64 - n as i64).unsigned_abs())
        .expect("non-empty");
    ThresholdEstimate { class: table.class, j_hat, discrepancy: table.discrepancy(j_hat), argmax_set }
}

/// Checks that the zero-one-loss minimisers and the prefix-discrepancy
/// maximisers coincide as sets for `labels` viewed as k versus the rest.
/// Both sides are evaluated from their own definitions.
pub fn lemma_equivalence_check(labels: &[ClassId], k: ClassId) -> bool {
    let n = labels.len();
    let losses: Vec<usize> = (0..=n)
        .map(|j| {
            (1..=n)
                .filter(|&i| {
                    let predicts_k = i <= j;
                    predicts_k != (labels[i - 1] == k)
                })
                .count()
        })
        .collect();
    let min = *losses.iter().min().expect("non-empty");
    let argmin: Vec<usize> = (0..=n).filter(|&j| losses[j] == min).collect();

    let discrepancies: Vec<i64> = (0..=n)
        .map(|j| {
            let pos = labels[..j].iter().filter(|&&y| y == k).count() as i64;
            pos - (j as i64 - pos)
        })
        .collect();
    let max = *discrepancies.iter().max().expect("non-empty");
    let argmax: Vec<usize> = (0..=n).filter(|&j| discrepancies[j] == max).collect();
    argmin == argmax
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const K: Option<bool> = Some(true);
    const NK: Option<bool> = Some(false);
    const U: Option<bool> = None;

    #[test]
    fn fully_labeled_table() {
        let table = PrefixLossTable::from_labels(0, &[K, K, NK, K, NK]);
        assert_eq!(table.losses, vec![3, 2, 1, 2, 1, 2]);
        assert_eq!(table.minimizers(), vec![2, 4]);
    }

    #[test]
    fn partially_labeled_table() {
        let table = PrefixLossTable::from_labels(0, &[K, U, NK, U, U]);
        assert_eq!(table.losses, vec![1, 0, 0, 1, 1, 1]);
        assert_eq!(table.minimizers(), vec![1, 2]);
    }

    #[test]
    fn unlabeled_table_is_zero() {
        let table = PrefixLossTable::from_labels(0, &[U; 7]);
        assert!(table.losses.iter().all(|&l| l == 0));
    }

    #[test]
    fn oracle_threshold_examples() {
        assert_eq!(brute_force_optimal_threshold(&[true, true, true, false, false, false]), 3);
        assert_eq!(brute_force_optimal_threshold(&[false; 6]), 0);
        // diffs (1, 0, 1, 0, -1): maximisers {1, 3}; k is the minority -> 3.
        assert_eq!(brute_force_optimal_threshold(&[true, false, true, false, false]), 3);
        // Majority k takes the smallest maximiser.
        assert_eq!(argmax_prefix_discrepancy(&[true, false, true, true, false, true]).0, vec![4, 6]);
        assert_eq!(brute_force_optimal_threshold(&[true, false, true, true, false, true]), 4);
    }

    #[test]
    fn estimate_prefers_center() {
        let mut labels = vec![U; 10];
        labels[1] = K;
        labels[7] = NK;
        let est = estimate_threshold(&PrefixLossTable::from_labels(0, &labels));
        assert_eq!(est.argmax_set, (2..=7).collect::<Vec<_>>());
        assert_eq!(est.j_hat, 5);
        assert_eq!(est.discrepancy, 1);
    }

    #[test]
    fn estimate_without_labels_is_center() {
        let est = estimate_threshold(&PrefixLossTable::from_labels(0, &[U; 10]));
        assert_eq!(est.argmax_set.len(), 11);
        assert_eq!(est.j_hat, 5);
        // Odd N: 2 and 3 are equally close to 2.5; the smaller wins.
        assert_eq!(estimate_threshold(&PrefixLossTable::from_labels(0, &[U; 5])).j_hat, 2);
    }

    #[test]
    fn full_information_recovers_oracle() {
        let truth = [true, true, true, false, false, false, false, false];
        let labels: Vec<Option<bool>> = truth.iter().map(|&b| Some(b)).collect();
        let est = estimate_threshold(&PrefixLossTable::from_labels(0, &labels));
        assert_eq!(est.j_hat, 3);
        assert_eq!(brute_force_optimal_threshold(&truth), 3);
    }

    #[test]
    fn lemma_examples() {
        assert!(lemma_equivalence_check(&[1, 1, 2, 1, 2, 2], 1));
        assert!(lemma_equivalence_check(&[0; 9], 0));
        let (set, _) = argmax_prefix_discrepancy(&[true; 9]);
        assert_eq!(set, vec![9]);
    }

    proptest! {
        #[test]
        fn table_steps_are_unit_and_flat_on_unlabeled(labels in prop::collection::vec(prop::option::of(any::<bool>()), 0..80)) {
            let table = PrefixLossTable::from_labels(0, &labels);
            prop_assert_eq!(table.losses[0], labels.iter().filter(|l| **l == Some(true)).count());
            prop_assert_eq!(table.losses[labels.len()], labels.iter().filter(|l| **l == Some(false)).count());
            for s in 0..labels.len() {
                let step = table.losses[s + 1] as i64 - table.losses[s] as i64;
                match labels[s] {
                    None => prop_assert_eq!(step, 0),
                    Some(_) => prop_assert_eq!(step.abs(), 1),
                }
            }
        }

        #[test]
        fn full_information_sets_agree(truth in prop::collection::vec(any::<bool>(), 1..60)) {
            let labels: Vec<Option<bool>> = truth.iter().map(|&b| Some(b)).collect();
            let est = estimate_threshold(&PrefixLossTable::from_labels(0, &labels));
            let (set, _) = argmax_prefix_discrepancy(&truth);
            prop_assert_eq!(&est.argmax_set, &set);
            prop_assert!(set.contains(&brute_force_optimal_threshold(&truth)));
        }
    }
}
