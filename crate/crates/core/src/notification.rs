//! Worker availability prediction and invitation selection.
//!
//! Activity timestamps are folded onto a one-week circle. Each worker's
//! availability is a mixture of adaptive-bandwidth kernel density estimates built
//! from progressively wider event sets (the worker, the worker plus friends, the
//! whole population); the mixture weights are fitted by EM on the worker's latest
//! events. Offline workers are then ranked by how many peers they dominate.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;

use crate::model::{Seconds, WorkerId};

pub const WEEK: Seconds = 604_800.0;
/// Bandwidth used when a sample set has fewer than two points or no spread.
pub const FALLBACK_BANDWIDTH: Seconds = 3600.0;
/// Lower bound on per-sample bandwidths.
pub const MIN_BANDWIDTH: Seconds = 300.0;
pub const DEFAULT_KNN_RATIO: f64 = 0.1;
/// Response window turning a density into an acceptance probability.
pub const ACCEPTANCE_WINDOW: Seconds = 900.0;
pub const EM_TOLERANCE: f64 = 1e-6;
pub const EM_MAX_ITERATIONS: usize = 200;

/// Kernel support in bandwidths; the Gaussian tail beyond it is below 1e-14.
const REACH: f64 = 8.0;
/// Window size up to which per-sample spread is computed directly.
const DIRECT_SPREAD_LIMIT: usize = 256;

pub fn wrap_week(ts: Seconds) -> Seconds {
    let w = libm::fmod(ts, WEEK);
    if w < 0.0 {
        w + WEEK
    } else {
        w
    }
}

/// Signed shortest distance `a - b` on the week circle, in `[-WEEK/2, WEEK/2)`.
pub fn circular_diff(a: Seconds, b: Seconds) -> Seconds {
    wrap_week(a - b + WEEK / 2.0) - WEEK / 2.0
}

fn gaussian(u: f64) -> f64 {
    libm::exp(-0.5 * u * u) / libm::sqrt(2.0 * PI)
}

/// One worker's activity timestamps, wrapped and sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct EventLog {
    pub worker: WorkerId,
    timestamps: Vec<Seconds>,
}

impl EventLog {
    pub fn new(worker: WorkerId, raw: impl IntoIterator<Item = Seconds>) -> Self {
        let mut timestamps: Vec<Seconds> = raw.into_iter().map(wrap_week).collect();
        timestamps.sort_by(f64::total_cmp);
        EventLog { worker, timestamps }
    }

    pub fn timestamps(&self) -> &[Seconds] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Undirected friendship graph.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FriendGraph {
    adjacency: BTreeMap<WorkerId, BTreeSet<WorkerId>>,
}

impl FriendGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_edge(&mut self, a: WorkerId, b: WorkerId) {
        if a == b {
            return;
        }
        self.adjacency.entry(a).or_default().insert(b);
        self.adjacency.entry(b).or_default().insert(a);
    }

    pub fn friends(&self, w: WorkerId) -> impl Iterator<Item = WorkerId> + '_ {
        self.adjacency.get(&w).into_iter().flatten().copied()
    }

    /// Workers within `steps` hops of `w`, excluding `w`.
    pub fn neighborhood(&self, w: WorkerId, steps: usize) -> BTreeSet<WorkerId> {
        let mut seen = BTreeSet::new();
        seen.insert(w);
        let mut frontier = vec![w];
        for _ in 0..steps {
            let mut next = Vec::new();
            for f in frontier {
                for n in self.friends(f) {
                    if seen.insert(n) {
                        next.push(n);
                    }
                }
            }
            frontier = next;
        }
        seen.remove(&w);
        seen
    }

    pub fn is_symmetric(&self) -> bool {
        self.adjacency
            .iter()
            .all(|(a, ns)| ns.iter().all(|b| self.adjacency.get(b).is_some_and(|m| m.contains(a))))
    }

    pub fn edges(&self) -> impl Iterator<Item = (WorkerId, WorkerId)> + '_ {
        self.adjacency
            .iter()
            .flat_map(|(a, ns)| ns.iter().filter(move |b| a < *b).map(move |b| (*a, *b)))
    }
}

/// `1.06 · σ̂ · n^(-1/5)` with the sample standard deviation; falls back to
/// [`FALLBACK_BANDWIDTH`] for fewer than two samples or zero spread.
pub fn rule_of_thumb_bandwidth(samples: &[f64]) -> Seconds {
    let n = samples.len();
    if n < 2 {
        return FALLBACK_BANDWIDTH;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    bandwidth_from_spread(ss, n)
}

fn bandwidth_from_spread(sum_sq: f64, n: usize) -> Seconds {
    let var = sum_sq / (n - 1) as f64;
    if var.is_nan() || var <= 0.0 {
        return FALLBACK_BANDWIDTH;
    }
    1.06 * libm::sqrt(var) * libm::pow(n as f64, -0.2)
}

/// Kernel density estimate on the week circle with one bandwidth per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveKde {
    samples: Vec<Seconds>,
    bandwidths: Vec<Seconds>,
    max_bandwidth: Seconds,
}

impl AdaptiveKde {
    /// Each sample's bandwidth is the rule-of-thumb bandwidth of itself and its
    /// `⌈ratio·n⌉` temporally nearest neighbours, floored at [`MIN_BANDWIDTH`].
    pub fn fit(timestamps: &[Seconds], knn_ratio: f64) -> Self {
        let mut samples: Vec<Seconds> = timestamps.iter().map(|&t| wrap_week(t)).collect();
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        if n == 0 {
            return AdaptiveKde { samples, bandwidths: Vec::new(), max_bandwidth: 0.0 };
        }
        let k = (libm::ceil(knn_ratio * n as f64) as usize).min(n - 1);
        let bandwidths: Vec<Seconds> = if n == 1 {
            vec![FALLBACK_BANDWIDTH]
        } else {
            neighbour_bandwidths(&samples, k)
        };
        let max_bandwidth = bandwidths.iter().copied().fold(0.0, f64::max);
        AdaptiveKde { samples, bandwidths, max_bandwidth }
    }

    /// Builds from explicit per-sample bandwidths. Non-positive or non-finite
    /// bandwidths are replaced by [`FALLBACK_BANDWIDTH`].
    pub fn with_bandwidths(timestamps: &[Seconds], bandwidths: &[Seconds]) -> Self {
        debug_assert_eq!(timestamps.len(), bandwidths.len());
        let mut pairs: Vec<(Seconds, Seconds)> = timestamps
            .iter()
            .zip(bandwidths)
            .map(|(&t, &h)| {
                let h = if h > 0.0 && h.is_finite() { h } else { FALLBACK_BANDWIDTH };
                (wrap_week(t), h)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let max_bandwidth = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
        AdaptiveKde {
            samples: pairs.iter().map(|p| p.0).collect(),
            bandwidths: pairs.iter().map(|p| p.1).collect(),
            max_bandwidth,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Seconds] {
        &self.samples
    }

    pub fn bandwidths(&self) -> &[Seconds] {
        &self.bandwidths
    }

    /// Density per second at `ts`; zero for an empty sample set.
    pub fn density(&self, ts: Seconds) -> f64 {
        let n = self.samples.len();
        if n == 0 {
            return 0.0;
        }
        let ts = wrap_week(ts);
        let reach = REACH * self.max_bandwidth;
        let mut total = 0.0;
        if 2.0 * reach >= WEEK {
            let images = libm::ceil(reach / WEEK) as i32;
            for (&s, &h) in self.samples.iter().zip(&self.bandwidths) {
                let d = circular_diff(ts, s);
                for j in -images..=images {
                    total += gaussian((d + j as f64 * WEEK) / h) / h;
                }
            }
        } else {
            let mut add = |lo: f64, hi: f64| {
                let a = self.samples.partition_point(|&s| s < lo);
                let b = self.samples.partition_point(|&s| s <= hi);
                for i in a..b {
                    let h = self.bandwidths[i];
                    total += gaussian(circular_diff(ts, self.samples[i]) / h) / h;
                }
            };
            let (lo, hi) = (ts - reach, ts + reach);
            if lo < 0.0 {
                add(0.0, hi);
                add(lo + WEEK, WEEK);
            } else if hi >= WEEK {
                add(lo, WEEK);
                add(0.0, hi - WEEK);
            } else {
                add(lo, hi);
            }
        }
        total / n as f64
    }
}

/// Bandwidth per sorted sample from the contiguous circular window holding it and
/// its `k` nearest neighbours.
fn neighbour_bandwidths(sorted: &[Seconds], k: usize) -> Vec<Seconds> {
    let n = sorted.len();
    // unrolled coordinates: three copies so every window is contiguous
    let ext: Vec<f64> = (0..3 * n).map(|j| sorted[j % n] + (j / n) as f64 * WEEK - WEEK).collect();
    let width = k + 1;
    let (mut pre, mut pre_sq) = (vec![0.0; 3 * n + 1], vec![0.0; 3 * n + 1]);
    if width > DIRECT_SPREAD_LIMIT {
        for j in 0..3 * n {
            pre[j + 1] = pre[j] + ext[j];
            pre_sq[j + 1] = pre_sq[j] + ext[j] * ext[j];
        }
    }
    let mut out = Vec::with_capacity(n);
    // window start (in ext) for sample i (at ext index n + i); never moves backwards
    let mut start = n - k;
    for i in 0..n {
        let centre = n + i;
        let x = ext[centre];
        if start + k < centre {
            start = centre - k;
        }
        while start < centre && ext[start + k + 1] - x < x - ext[start] {
            start += 1;
        }
        let win = &ext[start..start + width];
        let ss = if width > DIRECT_SPREAD_LIMIT {
            let s = pre[start + width] - pre[start];
            let s2 = pre_sq[start + width] - pre_sq[start];
            (s2 - s * s / width as f64).max(0.0)
        } else {
            let m = win.iter().sum::<f64>() / width as f64;
            win.iter().map(|v| (v - m) * (v - m)).sum()
        };
        out.push(bandwidth_from_spread(ss, width).max(MIN_BANDWIDTH));
    }
    out
}

/// Result of fitting mixture weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EmFit {
    pub weights: Vec<f64>,
    /// Validation log-likelihood before the first update and after every update.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    /// Validation points with zero density under every scale.
    pub dropped: usize,
}

/// Fits mixture weights over fixed component densities by EM.
///
/// `densities[k][s]` is the density of validation point `k` under component `s`.
/// Weights start uniform and the update is the closed-form mixture-weight
/// maximizer `α_s ← mean_k Q_k(s)`. Iteration stops once the weights move by less
/// than [`EM_TOLERANCE`], or as soon as an update would lower the likelihood.
pub fn em_mixture_weights(densities: &[Vec<f64>], components: usize) -> EmFit {
    let uniform = vec![1.0 / components.max(1) as f64; components];
    if components <= 1 {
        return EmFit { weights: vec![1.0; components], log_likelihoods: Vec::new(), iterations: 0, dropped: 0 };
    }
    let rows: Vec<&Vec<f64>> = densities
        .iter()
        .filter(|r| r.len() == components && r.iter().any(|d| *d > 0.0))
        .collect();
    let dropped = densities.len() - rows.len();
    if dropped > 0 {
        log::warn!("dropping {dropped} validation points with zero density under all scales");
    }
    if rows.is_empty() {
        return EmFit { weights: uniform, log_likelihoods: Vec::new(), iterations: 0, dropped };
    }
    let log_likelihood = |w: &[f64]| -> f64 {
        rows.iter()
            .map(|r| libm::log(r.iter().zip(w).map(|(d, a)| d * a).sum::<f64>()))
            .sum()
    };

    let mut weights = uniform;
    let mut lls = vec![log_likelihood(&weights)];
    let mut iterations = 0;
    while iterations < EM_MAX_ITERATIONS {
        iterations += 1;
        let mut next = vec![0.0; components];
        for r in &rows {
            let mix: f64 = r.iter().zip(&weights).map(|(d, a)| d * a).sum();
            for (s, slot) in next.iter_mut().enumerate() {
                *slot += weights[s] * r[s] / mix;
            }
        }
        let norm: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= norm;
        }
        let ll = log_likelihood(&next);
        if ll < lls[lls.len() - 1] {
            // at the fixed point only rounding is left to move the weights
            break;
        }
        let delta = next.iter().zip(&weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        weights = next;
        lls.push(ll);
        if delta < EM_TOLERANCE {
            break;
        }
    }
    EmFit { weights, log_likelihoods: lls, iterations, dropped }
}

/// Smooth availability model: weighted mixture of per-scale densities.
#[derive(Clone, Debug, PartialEq)]
pub struct AvailabilityModel {
    pub scales: Vec<Arc<AdaptiveKde>>,
    pub weights: Vec<f64>,
    pub knn_ratio: f64,
}

impl AvailabilityModel {
    /// Unfitted model with uniform weights.
    pub fn new(scales: Vec<Arc<AdaptiveKde>>, knn_ratio: f64) -> Self {
        let s = scales.len();
        AvailabilityModel { scales, weights: vec![1.0 / s.max(1) as f64; s], knn_ratio }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), self.scales.len());
        self.weights = weights;
        self
    }

    /// Fits the weights on validation timestamps and returns the fit trace.
    pub fn em_fit(&mut self, validation: &[Seconds]) -> EmFit {
        let densities: Vec<Vec<f64>> = validation
            .iter()
            .map(|&ts| self.scales.iter().map(|s| s.density(ts)).collect())
            .collect();
        let fit = em_mixture_weights(&densities, self.scales.len());
        self.weights.clone_from(&fit.weights);
        fit
    }

    /// Mixture density `Σ α_s f_s(ts)` (per second, not a probability).
    pub fn availability(&self, ts: Seconds) -> f64 {
        self.scales.iter().zip(&self.weights).map(|(s, a)| a * s.density(ts)).sum()
    }
}

/// Event sets for one worker's scales: self, self plus `steps`-hop friends,
/// and (optionally) the shared population density.
pub fn worker_scales(
    worker: WorkerId,
    history: &BTreeMap<WorkerId, Vec<Seconds>>,
    graph: &FriendGraph,
    steps: usize,
    knn_ratio: f64,
    population: Option<Arc<AdaptiveKde>>,
) -> Vec<Arc<AdaptiveKde>> {
    let own = history.get(&worker).cloned().unwrap_or_default();
    let mut social = own.clone();
    for f in graph.neighborhood(worker, steps) {
        if let Some(ev) = history.get(&f) {
            social.extend_from_slice(ev);
        }
    }
    let mut scales = vec![
        Arc::new(AdaptiveKde::fit(&own, knn_ratio)),
        Arc::new(AdaptiveKde::fit(&social, knn_ratio)),
    ];
    if let Some(p) = population {
        scales.push(p);
    }
    scales
}

/// A worker considered for an invitation, evaluated at one timestamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub worker: WorkerId,
    /// Availability density at the timestamp.
    pub availability: f64,
    /// Mean accuracy over subscribed categories.
    pub accuracy: f64,
    /// Mean response time over subscribed categories.
    pub response: Seconds,
}

/// `x` is strictly more available, at least as accurate and at least as fast as `y`.
pub fn dominates(x: &Candidate, y: &Candidate) -> bool {
    x.availability > y.availability && x.accuracy >= y.accuracy && x.response <= y.response
}

/// Number of cohort members dominated by `worker`.
pub fn ranking_score(worker: &Candidate, cohort: &[Candidate]) -> usize {
    cohort.iter().filter(|y| dominates(worker, y)).count()
}

pub fn ranking_scores(cohort: &[Candidate]) -> Vec<usize> {
    cohort.iter().map(|c| ranking_score(c, cohort)).collect()
}

/// Probability of accepting an invitation within [`ACCEPTANCE_WINDOW`].
pub fn acceptance_probability(density: f64) -> f64 {
    (density * ACCEPTANCE_WINDOW).clamp(0.0, 1.0)
}

/// Picks offline workers by ranking score (ties: higher availability, then id)
/// until their summed acceptance probabilities cover `u` or the pool is exhausted.
pub fn worker_notify(offline: &[Candidate], u: f64) -> Vec<WorkerId> {
    let scores = ranking_scores(offline);
    let mut order: Vec<usize> = (0..offline.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .cmp(&scores[a])
            .then_with(|| {
                offline[b]
                    .availability
                    .partial_cmp(&offline[a].availability)
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| offline[a].worker.cmp(&offline[b].worker))
    });
    let mut remaining = u;
    let mut picked = Vec::new();
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        picked.push(offline[i].worker);
        remaining -= acceptance_probability(offline[i].availability);
    }
    picked
}
