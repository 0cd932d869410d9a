use std::collections::BTreeMap;
use std::sync::Arc;

use frog_core::model::WorkerId;
use frog_core::notification::{
    acceptance_probability, dominates, em_mixture_weights, ranking_scores, worker_notify, worker_scales,
    AdaptiveKde, AvailabilityModel, Candidate, FriendGraph, DEFAULT_KNN_RATIO, WEEK,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const HOUR: f64 = 3600.0;
const DAY: f64 = 86_400.0;

fn integrate(kde: &AdaptiveKde) -> f64 {
    (0..(WEEK / 60.0) as usize).map(|m| kde.density(m as f64 * 60.0 + 30.0) * 60.0).sum()
}

/// Daily habits around a few hours of the day, plus occasional random events.
fn habit_log(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let hours: Vec<f64> = (0..rng.random_range(1..4)).map(|_| rng.random_range(0.0..24.0)).collect();
    let jitter = Normal::new(0.0, rng.random_range(60.0..2.0 * HOUR)).unwrap();
    (0..n)
        .map(|_| {
            if rng.random_bool(0.1) {
                rng.random_range(0.0..WEEK)
            } else {
                let day = rng.random_range(0..7) as f64;
                let h = hours[rng.random_range(0..hours.len())];
                day * DAY + h * HOUR + jitter.sample(rng)
            }
        })
        .collect()
}

/// Draws from the kernel mixture defined by a fitted scale.
fn draw_from(kde: &AdaptiveKde, rng: &mut ChaCha8Rng) -> f64 {
    let i = rng.random_range(0..kde.len());
    let noise = Normal::new(0.0, kde.bandwidths()[i]).unwrap().sample(rng);
    kde.samples()[i] + noise
}

#[test]
fn fitted_scales_integrate_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1usize, 2, 3, 10, 57, 400, 3000] {
        let kde = AdaptiveKde::fit(&habit_log(&mut rng, n), DEFAULT_KNN_RATIO);
        let mass = integrate(&kde);
        assert!((mass - 1.0).abs() < 0.01, "n={n}: {mass}");
    }
    // a burst of identical timestamps still integrates
    let kde = AdaptiveKde::fit(&[5000.0; 40], DEFAULT_KNN_RATIO);
    assert!((integrate(&kde) - 1.0).abs() < 0.01);
}

#[test]
fn em_recovers_known_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let jitter = Normal::new(0.0, 1200.0).unwrap();
    let morning: Vec<f64> = (0..70).map(|i| (i % 7) as f64 * DAY + 9.0 * HOUR + jitter.sample(&mut rng)).collect();
    let anytime: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..WEEK)).collect();
    let scales = [AdaptiveKde::fit(&morning, 0.1), AdaptiveKde::fit(&anytime, 0.1)];
    for _ in 0..10 {
        let validation: Vec<f64> = (0..500)
            .map(|_| draw_from(&scales[if rng.random_bool(0.7) { 0 } else { 1 }], &mut rng))
            .collect();
        let rows: Vec<Vec<f64>> = validation.iter().map(|&t| scales.iter().map(|s| s.density(t)).collect()).collect();
        let fit = em_mixture_weights(&rows, 2);
        assert!((fit.weights[0] - 0.7).abs() < 0.05, "{:?}", fit.weights);
        assert!(fit.log_likelihoods.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn friends_fill_a_cold_start() {
    let mut history = BTreeMap::new();
    let evening: Vec<f64> = (0..7).map(|d| d as f64 * DAY + 20.0 * HOUR).collect();
    history.insert(WorkerId(1), evening.clone());
    history.insert(WorkerId(2), evening);
    history.insert(WorkerId(0), vec![3.0 * DAY + 4.0 * HOUR]);
    let mut graph = FriendGraph::new();
    graph.add_edge(WorkerId(0), WorkerId(1));
    graph.add_edge(WorkerId(0), WorkerId(2));
    let scales = worker_scales(WorkerId(0), &history, &graph, 1, DEFAULT_KNN_RATIO, None);
    let self_only = AvailabilityModel::new(scales.clone(), DEFAULT_KNN_RATIO).with_weights(vec![1.0, 0.0]);
    let mixed = AvailabilityModel::new(scales, DEFAULT_KNN_RATIO);
    let ts = 20.0 * HOUR;
    assert!(mixed.availability(ts) > self_only.availability(ts));
    assert_eq!(self_only.availability(ts), self_only.scales[0].density(ts));
}

#[test]
fn identical_scales_mix_to_the_same_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kde = Arc::new(AdaptiveKde::fit(&habit_log(&mut rng, 80), 0.1));
    let model = AvailabilityModel::new(vec![kde.clone(), kde.clone(), kde.clone()], 0.1);
    for ts in [0.0, 1e4, 3e5] {
        assert!((model.availability(ts) - kde.density(ts)).abs() < 1e-15);
    }
}

fn candidate() -> impl Strategy<Value = Candidate> {
    (0u32..1000, 0.0f64..0.003, 0.5f64..1.0, 1.0f64..30.0).prop_map(|(w, p, a, r)| Candidate {
        worker: WorkerId(w),
        // coarse values so ties in every coordinate actually occur
        availability: (p * 1e4).round() / 1e4,
        accuracy: (a * 10.0).round() / 10.0,
        response: r.round(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn em_likelihood_never_drops(seed in any::<u64>(), scales in 2usize..5, points in 5usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kdes: Vec<AdaptiveKde> = (0..scales)
            .map(|_| {
                let n = rng.random_range(1..60);
                AdaptiveKde::fit(&habit_log(&mut rng, n), DEFAULT_KNN_RATIO)
            })
            .collect();
        let validation = habit_log(&mut rng, points);
        let rows: Vec<Vec<f64>> = validation.iter().map(|&t| kdes.iter().map(|k| k.density(t)).collect()).collect();
        let fit = em_mixture_weights(&rows, scales);
        for w in fit.log_likelihoods.windows(2) {
            prop_assert!(w[1] >= w[0], "{} after {}", w[1], w[0]);
        }
        prop_assert!((fit.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(fit.weights.iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn dominance_is_a_strict_order(cohort in prop::collection::vec(candidate(), 1..40)) {
        let mut pairs = 0;
        for x in &cohort {
            prop_assert!(!dominates(x, x));
            for y in &cohort {
                if dominates(x, y) {
                    pairs += 1;
                    prop_assert!(!dominates(y, x));
                }
            }
        }
        prop_assert_eq!(ranking_scores(&cohort).iter().sum::<usize>(), pairs);
    }

    #[test]
    fn notify_stops_as_soon_as_covered(cohort in prop::collection::vec(candidate(), 0..40), u in 0.01f64..6.0) {
        let cohort: Vec<Candidate> = cohort
            .into_iter()
            .enumerate()
            .map(|(i, c)| Candidate { worker: WorkerId(i as u32), ..c })
            .collect();
        let picked = worker_notify(&cohort, u);
        let p = |w: &WorkerId| {
            let c = cohort.iter().find(|c| c.worker == *w).unwrap();
            acceptance_probability(c.availability)
        };
        let total: f64 = picked.iter().map(p).sum();
        if total < u {
            prop_assert_eq!(picked.len(), cohort.len());
        }
        if let Some((_, head)) = picked.split_last() {
            prop_assert!(u - head.iter().map(p).sum::<f64>() > 0.0);
        }
    }
}
