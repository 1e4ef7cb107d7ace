//! Balanced mini-batch index sampling, confusion-matrix metrics and the
//! F-beta threshold search.

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("label vector is empty")]
    EmptyLabels,
    #[error("batch size must be >= 1")]
    ZeroBatch,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("threshold grid [{lo}, {hi}] with step {step} is invalid")]
    BadGrid { lo: f64, hi: f64, step: f64 },
}

/// A shuffled index list consumed round-robin and reshuffled after every
/// full cycle.
#[derive(Debug, Clone)]
struct Cycle {
    items: Vec<usize>,
    pos: usize,
}

impl Cycle {
    fn new<R: Rng + ?Sized>(mut items: Vec<usize>, rng: &mut R) -> Self {
        items.shuffle(rng);
        Self { items, pos: 0 }
    }

    fn take<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let v = self.items[self.pos];
        self.pos += 1;
        if self.pos == self.items.len() {
            self.items.shuffle(rng);
            self.pos = 0;
        }
        v
    }
}

/// Infinite stream of index batches where each slot comes from the positive
/// or the negative list with probability one half.
#[derive(Debug, Clone)]
pub struct BalancedBatches<R> {
    positives: Cycle,
    negatives: Cycle,
    batch_size: usize,
    rng: R,
}

/// Sets up a balanced sampler over binary labels. If one class is absent,
/// every slot is drawn from the other.
pub fn balanced_batches<R: Rng>(
    labels: &[bool],
    batch_size: usize,
    mut rng: R,
) -> Result<BalancedBatches<R>, DataError> {
    if labels.is_empty() {
        return Err(DataError::EmptyLabels);
    }
    if batch_size == 0 {
        return Err(DataError::ZeroBatch);
    }
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i]);
    let positives = Cycle::new(pos, &mut rng);
    let negatives = Cycle::new(neg, &mut rng);
    Ok(BalancedBatches { positives, negatives, batch_size, rng })
}

impl<R: Rng> BalancedBatches<R> {
    pub fn next_index(&mut self) -> usize {
        let use_pos = match (self.positives.items.is_empty(), self.negatives.items.is_empty()) {
            (true, _) => false,
            (_, true) => true,
            _ => self.rng.random_bool(0.5),
        };
        if use_pos {
            self.positives.take(&mut self.rng)
        } else {
            self.negatives.take(&mut self.rng)
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }
}

impl<R: Rng> Iterator for BalancedBatches<R> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        Some((0..self.batch_size).map(|_| self.next_index()).collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub const fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Counts predictions `score > threshold` against the labels.
    pub fn from_scores<T: Float>(scores: &[T], labels: &[bool], threshold: T) -> Result<Self, DataError> {
        if scores.len() != labels.len() {
            return Err(DataError::LengthMismatch { scores: scores.len(), labels: labels.len() });
        }
        let mut cm = Self::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (s > threshold, y) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, true) => cm.fn_ += 1,
                (false, false) => cm.tn += 1,
            }
        }
        Ok(cm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics<T> {
    pub accuracy: T,
    pub precision: T,
    pub recall: T,
    pub f_beta: T,
    pub beta: T,
}

fn ratio<T: Float>(num: u64, den: u64) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from(num).unwrap() / T::from(den).unwrap()
    }
}

/// `(1 + b^2) P R / (b^2 P + R)`, zero when the denominator vanishes.
pub fn f_beta<T: Float>(precision: T, recall: T, beta: T) -> T {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == T::zero() {
        T::zero()
    } else {
        (T::one() + b2) * precision * recall / den
    }
}

/// Accuracy, precision, recall and F-beta. Undefined ratios are 0.
pub fn compute_metrics<T: Float>(cm: &ConfusionMatrix, beta: T) -> Metrics<T> {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    Metrics {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        precision,
        recall,
        f_beta: f_beta(precision, recall, beta),
        beta,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice<T> {
    pub threshold: T,
    pub f_beta: T,
}

pub const DEFAULT_THRESHOLD_LO: f64 = 0.2;
pub const DEFAULT_THRESHOLD_HI: f64 = 0.8;
pub const DEFAULT_THRESHOLD_STEP: f64 = 0.001;

/// Grid points `lo, lo + step, ..., hi`, snapped to 12 decimals so that e.g.
/// the 11th point of a 0.05 grid from 0.2 is exactly the literal `0.7`.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, DataError> {
    if !(lo.is_finite() && hi.is_finite() && step > 0.0 && lo <= hi) {
        return Err(DataError::BadGrid { lo, hi, step });
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12).collect())
}

/// Threshold in `[lo, hi]` maximizing F-beta of `score > t`; ties go to the
/// smallest threshold. Scores within a few ulps count as tied, since equal
/// ratios from different confusion matrices can round apart.
pub fn threshold_search<T: Float>(
    scores: &[T],
    labels: &[bool],
    beta: T,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<ThresholdChoice<T>, DataError> {
    if scores.len() != labels.len() {
        return Err(DataError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if scores.is_empty() {
        return Err(DataError::EmptyLabels);
    }
    let slack = T::epsilon() * T::from(8).unwrap();
    let mut best: Option<ThresholdChoice<T>> = None;
    for t in threshold_grid(lo, hi, step)? {
        let t = T::from(t).unwrap();
        let cm = ConfusionMatrix::from_scores(scores, labels, t)?;
        let f = compute_metrics(&cm, beta).f_beta;
        if best.is_none_or(|b| f - b.f_beta > slack * b.f_beta.abs().max(T::one())) {
            best = Some(ThresholdChoice { threshold: t, f_beta: f });
        }
    }
    Ok(best.expect("grid has at least one point"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn all_positive_labels_draw_only_positives() {
        let labels = vec![true; 10];
        let mut s = balanced_batches(&labels, 8, ChaCha8Rng::seed_from_u64(0)).unwrap();
        for _ in 0..20 {
            assert!(s.next().unwrap().iter().all(|&i| i < 10));
        }
    }

    #[test]
    fn sampler_errors() {
        assert_eq!(balanced_batches(&[], 4, ChaCha8Rng::seed_from_u64(0)).unwrap_err(), DataError::EmptyLabels);
        assert_eq!(balanced_batches(&[true], 0, ChaCha8Rng::seed_from_u64(0)).unwrap_err(), DataError::ZeroBatch);
    }

    #[test]
    fn negatives_cycle_round_robin() {
        let labels: Vec<bool> = (0..50).map(|i| i % 10 != 0).collect();
        let negs: Vec<usize> = (0..50).filter(|i| i % 10 == 0).collect();
        let mut s = balanced_batches(&labels, 16, ChaCha8Rng::seed_from_u64(11)).unwrap();
        let drawn: Vec<usize> = (0..200).flat_map(|_| s.next().unwrap()).filter(|i| !labels[*i]).collect();
        for w in drawn.windows(2 * negs.len()) {
            for n in &negs {
                assert!(w.contains(n));
            }
        }
    }

    #[test]
    fn acrosome_metrics() {
        let m = compute_metrics(&ConfusionMatrix::new(197, 16, 51, 36), 0.5);
        assert!(close(m.accuracy, 233.0 / 300.0, 1e-15));
        assert!(close(m.precision, 197.0 / 213.0, 1e-15));
        assert!(close(m.recall, 197.0 / 248.0, 1e-15));
        // (1 + b^2) tp / ((1 + b^2) tp + b^2 fn + fp) = 246.25 / 275
        assert!(close(m.f_beta, 246.25 / 275.0, 1e-12));
    }

    #[test]
    fn f_beta_fixed_point() {
        for p in [0.1, 0.5, 0.93] {
            for b in [0.5, 1.0, 2.0] {
                assert!(close(f_beta(p, p, b), p, 1e-12));
            }
        }
    }

    #[test]
    fn zero_denominators() {
        let m = compute_metrics::<f64>(&ConfusionMatrix::new(0, 0, 0, 5), 0.5);
        assert_eq!((m.accuracy, m.precision, m.recall, m.f_beta), (1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn small_threshold_example() {
        let t = threshold_search(&[0.9, 0.7, 0.6, 0.2], &[true, false, true, false], 0.5, 0.2, 0.8, 0.05).unwrap();
        assert!(close(t.threshold, 0.7, 1e-12));
        assert!(close(t.f_beta, 0.25 / 0.3, 1e-12));
    }

    #[test]
    fn separated_scores_pick_lowest() {
        let t = threshold_search(&[0.9, 0.9, 0.1, 0.1], &[true, true, false, false], 0.5, 0.2, 0.8, 0.001).unwrap();
        assert_eq!(t.threshold, 0.2);
        assert_eq!(t.f_beta, 1.0);
    }

    #[test]
    fn all_positive_labels_pick_lowest() {
        let t = threshold_search(&[0.3, 0.5, 0.7, 0.9], &[true; 4], 0.5, 0.2, 0.8, 0.001).unwrap();
        assert_eq!(t.threshold, 0.2);
    }

    #[test]
    fn rounding_does_not_break_ties() {
        // tp 10 fn 6 fp 16 at 0.2 and tp 4 fn 12 fp 4 at 0.7 both give 5/12
        let mut scores = vec![0.75; 4];
        scores.extend([0.75; 4]);
        scores.extend([0.5; 6]);
        scores.extend([0.5; 12]);
        scores.extend([0.1; 6]);
        let mut labels = vec![true; 4];
        labels.extend([false; 4]);
        labels.extend([true; 6]);
        labels.extend([false; 12]);
        labels.extend([true; 6]);
        let at = |t: f64| compute_metrics(&ConfusionMatrix::from_scores(&scores, &labels, t).unwrap(), 0.5).f_beta;
        assert!(close(at(0.2), 5.0 / 12.0, 1e-15) && close(at(0.7), 5.0 / 12.0, 1e-15));
        let t = threshold_search(&scores, &labels, 0.5, 0.2, 0.8, 0.05).unwrap();
        assert_eq!(t.threshold, 0.2);
    }

    #[test]
    fn grid_shape() {
        let g = threshold_grid(0.2, 0.8, 0.001).unwrap();
        assert_eq!(g.len(), 601);
        assert_eq!(*g.last().unwrap(), 0.8);
        assert_eq!(threshold_grid(0.2, 0.8, 0.05).unwrap()[10], 0.7);
        assert!(threshold_grid(0.8, 0.2, 0.1).is_err());
        assert!(threshold_grid(0.2, 0.8, 0.0).is_err());
    }

    #[test]
    fn threshold_in_f32() {
        let t = threshold_search(&[0.9f32, 0.7, 0.6, 0.2], &[true, false, true, false], 0.5, 0.2, 0.8, 0.05).unwrap();
        assert!((t.threshold - 0.7).abs() < 1e-6);
    }
}
