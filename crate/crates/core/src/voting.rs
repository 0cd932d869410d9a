//! Expected accuracy of voted results and answer aggregation.
//!
//! Majority accuracy is the upper tail of a Poisson-binomial distribution: the
//! probability that at least `⌈k/2⌉` of `k` independent workers answer correctly.
//! It is evaluated by dynamic programming over the number of correct answers,
//! which keeps both the direct and the incremental forms at `O(k²)` / `O(k)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::Choice;

fn check_binary(alpha: f64) -> Result<()> {
    if alpha > 0.5 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::BadAccuracy(alpha))
    }
}

/// `dist[c]` = probability that exactly `c` of the workers answer correctly.
pub fn correct_count_distribution(accuracies: &[f64]) -> Vec<f64> {
    let mut dist = Vec::with_capacity(accuracies.len() + 1);
    dist.push(1.0);
    for &a in accuracies {
        push_worker(&mut dist, a);
    }
    dist
}

fn push_worker(dist: &mut Vec<f64>, alpha: f64) {
    dist.push(0.0);
    for c in (1..dist.len()).rev() {
        dist[c] = dist[c] * (1.0 - alpha) + dist[c - 1] * alpha;
    }
    dist[0] *= 1.0 - alpha;
}

fn majority_threshold(k: usize) -> usize {
    k.div_ceil(2)
}

fn upper_tail(dist: &[f64], from: usize) -> f64 {
    dist.iter().skip(from).sum::<f64>().min(1.0)
}

/// Probability that a majority of workers with the given accuracies is correct.
///
/// Defined for odd set sizes only; see [`expected_accuracy_as_written`] for even sizes.
pub fn expected_accuracy_majority(accuracies: &[f64]) -> Result<f64> {
    if accuracies.is_empty() {
        return Err(Error::EmptyWorkerSet);
    }
    if accuracies.len().is_multiple_of(2) {
        return Err(Error::EvenSetNotComparable { size: accuracies.len() });
    }
    expected_accuracy_as_written(accuracies)
}

/// Majority accuracy with threshold `⌈k/2⌉` at any `k`, so even sets count ties as correct.
pub fn expected_accuracy_as_written(accuracies: &[f64]) -> Result<f64> {
    if accuracies.is_empty() {
        return Err(Error::EmptyWorkerSet);
    }
    for &a in accuracies {
        check_binary(a)?;
    }
    let dist = correct_count_distribution(accuracies);
    Ok(upper_tail(&dist, majority_threshold(accuracies.len())))
}

/// Accuracies of a worker set with the cached correct-count distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkerSetAccuracy {
    accuracies: Vec<f64>,
    dist: Vec<f64>,
    cached_probability: Option<f64>,
}

impl Default for WorkerSetAccuracy {
    fn default() -> Self {
        Self::new()
    }
}

impl WorkerSetAccuracy {
    pub fn new() -> Self {
        WorkerSetAccuracy { accuracies: Vec::new(), dist: vec![1.0], cached_probability: None }
    }

    pub fn from_accuracies(accuracies: &[f64]) -> Result<Self> {
        let mut set = Self::new();
        for &a in accuracies {
            set.push(a)?;
        }
        Ok(set)
    }

    pub fn accuracies(&self) -> &[f64] {
        &self.accuracies
    }

    pub fn len(&self) -> usize {
        self.accuracies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accuracies.is_empty()
    }

    /// Probability that exactly `c` workers of the set answer correctly.
    pub fn correct_count_probability(&self, c: usize) -> f64 {
        self.dist.get(c).copied().unwrap_or(0.0)
    }

    /// Adds a worker in `O(k)`.
    pub fn push(&mut self, alpha: f64) -> Result<()> {
        check_binary(alpha)?;
        self.accuracies.push(alpha);
        push_worker(&mut self.dist, alpha);
        self.cached_probability = if self.accuracies.len() % 2 == 1 {
            Some(upper_tail(&self.dist, majority_threshold(self.accuracies.len())))
        } else {
            None
        };
        Ok(())
    }

    /// Majority accuracy of the current set (odd sizes only).
    pub fn probability(&self) -> Result<f64> {
        if self.accuracies.is_empty() {
            return Err(Error::EmptyWorkerSet);
        }
        self.cached_probability
            .ok_or(Error::EvenSetNotComparable { size: self.accuracies.len() })
    }

    pub fn probability_as_written(&self) -> Result<f64> {
        if self.accuracies.is_empty() {
            return Err(Error::EmptyWorkerSet);
        }
        Ok(upper_tail(&self.dist, majority_threshold(self.accuracies.len())))
    }

    /// `true` when the set has odd size and its majority accuracy reaches `q`.
    pub fn meets(&self, q: f64) -> bool {
        self.cached_probability.is_some_and(|p| p >= q)
    }
}

/// Accuracy of `base ∪ {new}` from the cached distribution of `base`, in `O(k)`.
///
/// With `t = ⌈(k+1)/2⌉` the new worker either joins a group that already has
/// `t` correct answers, or supplies the deciding vote when exactly `t-1` are correct:
/// `Pr(base ∪ {w}) = Pr[base ≥ t] + α_w · Pr[base = t-1]`.
/// The value follows the as-written threshold, so it is meaningful at every size.
pub fn expected_accuracy_incremental(base: &WorkerSetAccuracy, new_accuracy: f64) -> Result<f64> {
    check_binary(new_accuracy)?;
    let t = majority_threshold(base.len() + 1);
    let already = upper_tail(&base.dist, t);
    let deciding = base.correct_count_probability(t - 1);
    Ok((already + new_accuracy * deciding).min(1.0))
}

/// Probability that the correct choice wins a strict plurality among `R` choices.
///
/// Wrong answers are spread uniformly over the `R - 1` incorrect choices; a tie for
/// first place counts as a failure.
pub fn expected_accuracy_multichoice_majority(accuracies: &[f64], choices: usize) -> Result<f64> {
    if choices < 2 {
        return Err(Error::BadChoiceCount(choices));
    }
    if accuracies.is_empty() {
        return Err(Error::EmptyWorkerSet);
    }
    let floor = 1.0 / choices as f64;
    for &a in accuracies {
        if !(a > floor && a <= 1.0) {
            return Err(Error::BadAccuracy(a));
        }
    }
    let k = accuracies.len();
    let dist = correct_count_distribution(accuracies);
    let bins = choices - 1;
    let mut total = 0.0;
    for (correct, &p) in dist.iter().enumerate().skip(1) {
        if p == 0.0 {
            continue;
        }
        total += p * all_bins_below(k - correct, bins, correct);
    }
    Ok(total.min(1.0))
}

/// Probability that `balls` thrown uniformly into `bins` bins leave every bin below `cap`.
fn all_bins_below(balls: usize, bins: usize, cap: usize) -> f64 {
    // g[s] = probability for `s` balls over the bins processed so far
    let mut g = vec![0.0; balls + 1];
    g[0] = 1.0;
    for b in 1..=bins {
        let mut next = vec![0.0; balls + 1];
        let p = 1.0 / b as f64;
        for (s, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..=s.min(cap - 1) {
                acc += binomial_pmf(s, j, p) * g[s - j];
            }
            *slot = acc;
        }
        g = next;
    }
    g[balls]
}

fn binomial_pmf(n: usize, j: usize, p: f64) -> f64 {
    let mut coeff = 1.0;
    for i in 0..j {
        coeff = coeff * (n - i) as f64 / (i + 1) as f64;
    }
    coeff * libm::pow(p, j as f64) * libm::pow(1.0 - p, (n - j) as f64)
}

/// One vote for aggregation: the (already de-flipped) choice and the voter's accuracy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vote {
    pub choice: Choice,
    pub accuracy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme<'a> {
    Majority,
    WeightedMajority,
    /// Accept a choice only when more than half of the voters picked it.
    Half,
    /// Score each voted choice by `Π Pr(r)·α_j` over its voters; priors are normalized first.
    Bayesian { priors: &'a [f64] },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub winner: Option<usize>,
    /// Share of votes, share of weight, or Bayesian score of the leading choice.
    pub support: f64,
}

/// Combines votes into a result. Skips are ignored; no votes gives `(None, 0)`.
/// A tie for first place yields no winner.
pub fn aggregate(votes: &[Vote], choice_count: usize, scheme: Scheme<'_>) -> Result<Aggregate> {
    if choice_count < 2 {
        return Err(Error::BadChoiceCount(choice_count));
    }
    let picks: Vec<(usize, f64)> = votes
        .iter()
        .filter_map(|v| v.choice.pick().map(|c| (c, v.accuracy)))
        .collect();
    if let Scheme::Bayesian { priors } = scheme {
        validate_priors(priors, choice_count)?;
    }
    if picks.is_empty() {
        return Ok(Aggregate { winner: None, support: 0.0 });
    }
    if let Some(&(c, _)) = picks.iter().find(|(c, _)| *c >= choice_count) {
        return Err(Error::BadChoiceCount(c));
    }

    let mut counts = vec![0usize; choice_count];
    let mut weights = vec![0.0; choice_count];
    for &(c, a) in &picks {
        counts[c] += 1;
        weights[c] += a;
    }
    let k = picks.len();

    let result = match scheme {
        Scheme::Majority => {
            let scores: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            let (winner, top) = unique_argmax(&scores);
            Aggregate { winner, support: top / k as f64 }
        }
        Scheme::WeightedMajority => {
            let total: f64 = weights.iter().sum();
            let (winner, top) = unique_argmax(&weights);
            Aggregate { winner, support: if total > 0.0 { top / total } else { 0.0 } }
        }
        Scheme::Half => {
            let (best, top) = counts
                .iter()
                .enumerate()
                .fold((0, 0usize), |acc, (i, &c)| if c > acc.1 { (i, c) } else { acc });
            let winner = (2 * top > k).then_some(best);
            Aggregate { winner, support: top as f64 / k as f64 }
        }
        Scheme::Bayesian { priors } => {
            let norm: f64 = priors.iter().sum();
            let mut scores = vec![f64::NEG_INFINITY; choice_count];
            for (r, score) in scores.iter_mut().enumerate() {
                if counts[r] == 0 {
                    continue;
                }
                let prior = priors[r] / norm;
                *score = picks
                    .iter()
                    .filter(|(c, _)| *c == r)
                    .map(|(_, a)| prior * a)
                    .product();
            }
            let (winner, top) = unique_argmax(&scores);
            Aggregate { winner, support: top }
        }
    };
    Ok(result)
}

fn validate_priors(priors: &[f64], choice_count: usize) -> Result<()> {
    if priors.len() != choice_count {
        return Err(Error::BadPrior);
    }
    if priors.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::BadPrior);
    }
    if priors.iter().sum::<f64>() <= 0.0 {
        return Err(Error::BadPrior);
    }
    Ok(())
}

fn unique_argmax(scores: &[f64]) -> (Option<usize>, f64) {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let top = scores[best];
    let ties = scores.iter().filter(|&&s| s == top).count();
    ((ties == 1).then_some(best), top)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(acc: &[f64]) -> f64 {
        let k = acc.len();
        let need = k.div_ceil(2);
        (0u32..1 << k)
            .filter(|m| m.count_ones() as usize >= need)
            .map(|m| {
                acc.iter()
                    .enumerate()
                    .map(|(i, a)| if m >> i & 1 == 1 { *a } else { 1.0 - a })
                    .product::<f64>()
            })
            .sum()
    }

    #[test]
    fn single_worker() {
        assert_eq!(expected_accuracy_majority(&[0.8]).unwrap(), 0.8);
    }

    #[test]
    fn three_worker_examples() {
        assert!((brute_force(&[0.9, 0.8, 0.7]) - 0.902).abs() < 1e-12);
        assert!((expected_accuracy_majority(&[0.9, 0.8, 0.7]).unwrap() - 0.902).abs() < 1e-12);
        assert!((brute_force(&[0.8, 0.8, 0.8]) - 0.896).abs() < 1e-12);
        assert!((expected_accuracy_majority(&[0.8, 0.8, 0.8]).unwrap() - 0.896).abs() < 1e-12);
    }

    #[test]
    fn error_cases() {
        assert_eq!(expected_accuracy_majority(&[]), Err(Error::EmptyWorkerSet));
        assert_eq!(
            expected_accuracy_majority(&[0.9, 0.8]),
            Err(Error::EvenSetNotComparable { size: 2 })
        );
        assert!(expected_accuracy_as_written(&[0.9, 0.8]).is_ok());
        assert!(matches!(expected_accuracy_majority(&[0.4]), Err(Error::BadAccuracy(_))));
    }

    #[test]
    fn incremental_examples() {
        let base = WorkerSetAccuracy::from_accuracies(&[0.9, 0.8]).unwrap();
        assert!((expected_accuracy_incremental(&base, 0.7).unwrap() - 0.902).abs() < 1e-12);
        let empty = WorkerSetAccuracy::new();
        assert_eq!(expected_accuracy_incremental(&empty, 0.8).unwrap(), 0.8);
        let perfect = WorkerSetAccuracy::from_accuracies(&[1.0, 1.0]).unwrap();
        assert_eq!(expected_accuracy_incremental(&perfect, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn cache_tracks_direct_value() {
        let mut set = WorkerSetAccuracy::new();
        assert!(set.probability().is_err());
        for (i, a) in [0.9, 0.55, 0.7, 0.99, 0.6].iter().enumerate() {
            set.push(*a).unwrap();
            if i % 2 == 0 {
                let direct = expected_accuracy_majority(set.accuracies()).unwrap();
                assert!((set.probability().unwrap() - direct).abs() < 1e-12);
            } else {
                assert!(set.probability().is_err());
                assert!(!set.meets(0.0));
            }
        }
    }

    #[test]
    fn multichoice_examples() {
        assert!((expected_accuracy_multichoice_majority(&[0.8], 3).unwrap() - 0.8).abs() < 1e-12);
        assert!(
            (expected_accuracy_multichoice_majority(&[0.7, 0.7, 0.7], 2).unwrap() - 0.784).abs()
                < 1e-12
        );
        assert_eq!(
            expected_accuracy_multichoice_majority(&[0.8], 1),
            Err(Error::BadChoiceCount(1))
        );
        assert!(expected_accuracy_multichoice_majority(&[0.3], 3).is_err());
    }

    #[test]
    fn aggregate_majority_and_half() {
        let v = |c| Vote { choice: Choice::Pick(c), accuracy: 0.8 };
        let r = aggregate(&[v(1), v(1), v(0)], 2, Scheme::Majority).unwrap();
        assert_eq!(r.winner, Some(1));
        assert!((r.support - 2.0 / 3.0).abs() < 1e-12);

        let r = aggregate(&[v(0), v(1), v(2)], 3, Scheme::Half).unwrap();
        assert_eq!(r.winner, None);
        assert!((r.support - 1.0 / 3.0).abs() < 1e-12);

        let r = aggregate(&[], 2, Scheme::Majority).unwrap();
        assert_eq!(r, Aggregate { winner: None, support: 0.0 });

        let skip = Vote { choice: Choice::Skip, accuracy: 0.9 };
        let r = aggregate(&[skip, v(0)], 2, Scheme::Half).unwrap();
        assert_eq!(r.winner, Some(0));
    }

    #[test]
    fn aggregate_weighted() {
        let votes = [
            Vote { choice: Choice::Pick(0), accuracy: 0.95 },
            Vote { choice: Choice::Pick(1), accuracy: 0.6 },
            Vote { choice: Choice::Pick(1), accuracy: 0.3 },
        ];
        let r = aggregate(&votes, 2, Scheme::WeightedMajority).unwrap();
        assert_eq!(r.winner, Some(0));
        assert!((r.support - 0.95 / 1.85).abs() < 1e-12);
        let tie = [
            Vote { choice: Choice::Pick(0), accuracy: 0.7 },
            Vote { choice: Choice::Pick(1), accuracy: 0.7 },
        ];
        assert_eq!(aggregate(&tie, 2, Scheme::WeightedMajority).unwrap().winner, None);
    }

    #[test]
    fn aggregate_bayesian() {
        let votes = [Vote { choice: Choice::Pick(1), accuracy: 0.9 }];
        let r = aggregate(&votes, 2, Scheme::Bayesian { priors: &[0.5, 0.5] }).unwrap();
        assert_eq!(r.winner, Some(1));
        assert!((r.support - 0.45).abs() < 1e-12);
        assert_eq!(
            aggregate(&votes, 2, Scheme::Bayesian { priors: &[0.5] }),
            Err(Error::BadPrior)
        );
        assert_eq!(
            aggregate(&votes, 2, Scheme::Bayesian { priors: &[-0.5, 1.5] }),
            Err(Error::BadPrior)
        );
        assert_eq!(
            aggregate(&votes, 2, Scheme::Bayesian { priors: &[0.0, 0.0] }),
            Err(Error::BadPrior)
        );
    }
}
