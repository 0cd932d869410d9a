//! Offline evaluation of availability predictors on an activity log.
//!
//! The log is split in time. Models are fitted on the earlier part. Then, at
//! hourly timestamps in the later part, each method names its top `N` workers.
//! A named worker is a hit if it shows any activity within the next 15 minutes.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use frog_core::model::WorkerId;
use frog_core::notification::{
    wrap_week, worker_scales, AdaptiveKde, AvailabilityModel, FriendGraph, ACCEPTANCE_WINDOW,
    DEFAULT_KNN_RATIO,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::formats::Activity;

const DAY: f64 = 86_400.0;

/// Share of each worker's training events held out to fit the mixture weights.
const VALIDATION_SHARE: f64 = 0.2;
/// Workers with fewer training events keep uniform mixture weights.
const MIN_EVENTS_FOR_EM: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Skde,
    Kde,
    Nwp,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Skde, Method::Kde, Method::Nwp, Method::Random];

    pub fn label(self) -> &'static str {
        match self {
            Method::Skde => "SKDE",
            Method::Kde => "KDE",
            Method::Nwp => "NWP",
            Method::Random => "Random",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "skde" => Ok(Method::Skde),
            "kde" => Ok(Method::Kde),
            "nwp" => Ok(Method::Nwp),
            "random" => Ok(Method::Random),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    /// Share of the population each method may name, e.g. `0.05`.
    pub fractions: Vec<f64>,
    pub methods: Vec<Method>,
    /// Share of the log's time span used for fitting.
    pub train_fraction: f64,
    /// Spacing of the evaluation timestamps.
    pub step: f64,
    pub friend_steps: usize,
    pub knn_ratio: f64,
    pub seed: u64,
    /// Fixed SKDE weights over (self, friends, everyone); fitted by EM when absent.
    pub skde_weights: Option<Vec<f64>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            fractions: vec![0.05, 0.06, 0.07, 0.08, 0.09, 0.10],
            methods: Method::ALL.to_vec(),
            train_fraction: 0.75,
            step: 3600.0,
            friend_steps: 1,
            knn_ratio: DEFAULT_KNN_RATIO,
            seed: 0,
            skde_weights: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub fraction: f64,
    /// Workers named per timestamp.
    pub predicted: usize,
    pub timestamps: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Macro-averaged precision `N_c/N_t` and recall `N_c/N_a` over timestamps.
/// Timestamps where nobody was active do not count towards recall.
pub fn precision_recall(predicted: &[Vec<WorkerId>], active: &[BTreeSet<WorkerId>]) -> (f64, f64) {
    assert_eq!(predicted.len(), active.len());
    let (mut p_sum, mut p_n, mut r_sum, mut r_n) = (0.0, 0usize, 0.0, 0usize);
    for (pred, act) in predicted.iter().zip(active) {
        let hits = pred.iter().filter(|w| act.contains(w)).count() as f64;
        if !pred.is_empty() {
            p_sum += hits / pred.len() as f64;
            p_n += 1;
        }
        if !act.is_empty() {
            r_sum += hits / act.len() as f64;
            r_n += 1;
        }
    }
    let avg = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    (avg(p_sum, p_n), avg(r_sum, r_n))
}

/// Highest scores first, ties to the smaller id.
fn top(scores: &[(WorkerId, f64)], n: usize) -> Vec<WorkerId> {
    let mut order: Vec<&(WorkerId, f64)> = scores.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().take(n).map(|&(w, _)| w).collect()
}

fn group(events: impl IntoIterator<Item = Activity>) -> BTreeMap<WorkerId, Vec<f64>> {
    let mut by: BTreeMap<WorkerId, Vec<f64>> = BTreeMap::new();
    for e in events {
        by.entry(e.worker).or_default().push(e.at);
    }
    for v in by.values_mut() {
        v.sort_by(f64::total_cmp);
    }
    by
}

fn wrapped(by: &BTreeMap<WorkerId, Vec<f64>>) -> BTreeMap<WorkerId, Vec<f64>> {
    by.iter().map(|(w, ts)| (*w, ts.iter().map(|&t| wrap_week(t)).collect())).collect()
}

/// SKDE models for every worker, weights fitted on each worker's latest events.
fn skde_models(
    population: &[WorkerId],
    train: &BTreeMap<WorkerId, Vec<f64>>,
    graph: &FriendGraph,
    opts: &EvalOptions,
) -> Vec<AvailabilityModel> {
    let all: Vec<f64> = train.values().flatten().map(|&t| wrap_week(t)).collect();
    let global = Arc::new(AdaptiveKde::fit(&all, opts.knn_ratio));
    let history = wrapped(train);
    population
        .iter()
        .map(|&w| {
            let scales = worker_scales(w, &history, graph, opts.friend_steps, opts.knn_ratio, Some(global.clone()));
            let model = AvailabilityModel::new(scales, opts.knn_ratio);
            if let Some(weights) = &opts.skde_weights {
                return model.with_weights(weights.clone());
            }
            let own = train.get(&w).map_or(&[][..], Vec::as_slice);
            if own.len() < MIN_EVENTS_FOR_EM {
                return model;
            }
            let held = ((own.len() as f64 * VALIDATION_SHARE).ceil() as usize).max(1);
            let cutoff = own[own.len() - held];
            let earlier: BTreeMap<WorkerId, Vec<f64>> = train
                .iter()
                .map(|(k, ts)| (*k, ts.iter().filter(|&&t| t < cutoff).map(|&t| wrap_week(t)).collect()))
                .collect();
            let validation: Vec<f64> = own[own.len() - held..].iter().map(|&t| wrap_week(t)).collect();
            let fit_scales = worker_scales(w, &earlier, graph, opts.friend_steps, opts.knn_ratio, Some(global.clone()));
            let mut fitted = AvailabilityModel::new(fit_scales, opts.knn_ratio);
            fitted.em_fit(&validation);
            model.with_weights(fitted.weights)
        })
        .collect()
}

/// Number of training events within ±15 minutes of `ts`'s time of day.
fn nwp_score(events: &[f64], ts: f64) -> f64 {
    let tod = ts.rem_euclid(DAY);
    events
        .iter()
        .filter(|&&e| {
            let d = (e.rem_euclid(DAY) - tod).abs();
            d.min(DAY - d) <= ACCEPTANCE_WINDOW
        })
        .count() as f64
}

pub fn run_notification_eval(
    events: &[Activity],
    graph: &FriendGraph,
    opts: &EvalOptions,
) -> Result<Vec<EvalRow>, ConfigError> {
    if events.is_empty() {
        return Err(ConfigError::format("event log", "no events"));
    }
    if !(opts.train_fraction > 0.0 && opts.train_fraction < 1.0) {
        return Err(ConfigError::invalid("train_fraction", "must lie in (0, 1)"));
    }
    if opts.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(ConfigError::invalid("fraction", "must lie in (0, 1]"));
    }
    if opts.step.is_nan() || opts.step <= 0.0 {
        return Err(ConfigError::invalid("step", "must be positive"));
    }
    let t0 = events.iter().map(|e| e.at).fold(f64::INFINITY, f64::min);
    let t1 = events.iter().map(|e| e.at).fold(f64::NEG_INFINITY, f64::max);
    let split = t0 + opts.train_fraction * (t1 - t0);
    let stamps: Vec<f64> = (0..)
        .map(|k| split + k as f64 * opts.step)
        .take_while(|&ts| ts + ACCEPTANCE_WINDOW <= t1)
        .collect();
    if stamps.is_empty() {
        return Err(ConfigError::format("event log", "held-out span is shorter than one acceptance window"));
    }

    let train = group(events.iter().copied().filter(|e| e.at < split));
    let all = group(events.iter().copied());
    let mut population: BTreeSet<WorkerId> = all.keys().copied().collect();
    for (a, b) in graph.edges() {
        population.insert(a);
        population.insert(b);
    }
    let population: Vec<WorkerId> = population.into_iter().collect();

    let active: Vec<BTreeSet<WorkerId>> = stamps
        .iter()
        .map(|&ts| {
            all.iter()
                .filter(|(_, ev)| {
                    let i = ev.partition_point(|&t| t < ts);
                    ev.get(i).is_some_and(|&t| t < ts + ACCEPTANCE_WINDOW)
                })
                .map(|(w, _)| *w)
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    for &method in &opts.methods {
        let scores: Option<Vec<Vec<(WorkerId, f64)>>> = match method {
            Method::Random => None,
            Method::Nwp => Some(
                stamps
                    .iter()
                    .map(|&ts| {
                        population
                            .iter()
                            .map(|w| (*w, train.get(w).map_or(0.0, |ev| nwp_score(ev, ts))))
                            .collect()
                    })
                    .collect(),
            ),
            Method::Kde => {
                let history = wrapped(&train);
                let kdes: Vec<AdaptiveKde> = population
                    .iter()
                    .map(|w| AdaptiveKde::fit(history.get(w).map_or(&[][..], Vec::as_slice), opts.knn_ratio))
                    .collect();
                Some(
                    stamps
                        .iter()
                        .map(|&ts| {
                            let x = wrap_week(ts);
                            population.iter().zip(&kdes).map(|(w, k)| (*w, k.density(x))).collect()
                        })
                        .collect(),
                )
            }
            Method::Skde => {
                let models = skde_models(&population, &train, graph, opts);
                Some(
                    stamps
                        .iter()
                        .map(|&ts| {
                            let x = wrap_week(ts);
                            population.iter().zip(&models).map(|(w, m)| (*w, m.availability(x))).collect()
                        })
                        .collect(),
                )
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for &fraction in &opts.fractions {
            let n = ((fraction * population.len() as f64).ceil() as usize).min(population.len());
            let predicted: Vec<Vec<WorkerId>> = match &scores {
                Some(s) => s.iter().map(|per_ts| top(per_ts, n)).collect(),
                None => stamps
                    .iter()
                    .map(|_| {
                        rand::seq::index::sample(&mut rng, population.len(), n)
                            .into_iter()
                            .map(|i| population[i])
                            .collect()
                    })
                    .collect(),
            };
            let (precision, recall) = precision_recall(&predicted, &active);
            rows.push(EvalRow {
                method: method.label().into(),
                fraction,
                predicted: n,
                timestamps: stamps.len(),
                precision,
                recall,
            });
        }
    }
    Ok(rows)
}

/// Parameters of [`synthetic_social_log`].
#[derive(Clone, Debug, PartialEq)]
pub struct SocialLogConfig {
    /// Friend groups; each group is a clique with one shared daily peak.
    pub groups: usize,
    pub group_size: usize,
    pub days: usize,
    /// Events per active day, spread around the group's peak.
    pub events_per_day: usize,
    /// Standard deviation of event times around the peak, in seconds.
    pub spread: f64,
    /// Probability that a worker is active on a given day.
    pub daily_presence: f64,
    /// Share of each group that only joins after `join_day`.
    pub cold_fraction: f64,
    pub join_day: usize,
}

impl Default for SocialLogConfig {
    fn default() -> Self {
        SocialLogConfig {
            groups: 10,
            group_size: 8,
            days: 28,
            events_per_day: 1,
            spread: 900.0,
            daily_presence: 0.5,
            cold_fraction: 0.25,
            join_day: 21,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SocialLog {
    pub events: Vec<Activity>,
    pub friends: FriendGraph,
    /// Workers with no activity before `join_day`.
    pub cold: Vec<WorkerId>,
}

/// Groups of friends sharing a daily routine. Cold-start members behave like
/// their friends but have no early history.
pub fn synthetic_social_log(cfg: &SocialLogConfig, seed: u64) -> SocialLog {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, cfg.spread).expect("finite spread");
    let cold_per_group = (cfg.cold_fraction * cfg.group_size as f64).round() as usize;
    let mut events = Vec::new();
    let mut friends = FriendGraph::new();
    let mut cold = Vec::new();
    for g in 0..cfg.groups {
        let peak = (g as f64 + 0.5) * DAY / cfg.groups as f64;
        let members: Vec<WorkerId> = (0..cfg.group_size).map(|i| WorkerId((g * cfg.group_size + i) as u32)).collect();
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                friends.add_edge(a, b);
            }
        }
        for (i, &w) in members.iter().enumerate() {
            let is_cold = i < cold_per_group;
            if is_cold {
                cold.push(w);
            }
            let first = if is_cold { cfg.join_day } else { 0 };
            for day in first..cfg.days {
                if !rng.random_bool(cfg.daily_presence) {
                    continue;
                }
                for _ in 0..cfg.events_per_day {
                    let at = day as f64 * DAY + peak + jitter.sample(&mut rng);
                    events.push(Activity { worker: w, at: at.max(0.0) });
                }
            }
        }
    }
    events.sort_by(|a, b| a.at.total_cmp(&b.at).then(a.worker.cmp(&b.worker)));
    SocialLog { events, friends, cold }
}
