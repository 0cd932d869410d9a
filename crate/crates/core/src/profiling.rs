//! Worker and task profiles: category accuracy from qualification tests and live
//! answers, response-time prediction, and task difficulty from answer entropy.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{clamp_accuracy, Accuracy, CategoryId, Seconds, Task, WorkerId};

/// Base difficulty `ε` added to every task.
pub const BASE_DIFFICULTY: f64 = 0.01;

/// Floor for predicted response times.
pub const MIN_RESPONSE: Seconds = 1e-3;

/// Window used to pick recent responses and recent aggregated results.
pub const RECENT_WINDOW: Seconds = 15.0 * 60.0;
pub const MIN_RECENT_POINTS: usize = 3;
pub const MAX_RECENT_POINTS: usize = 50;

pub const CALIBRATION_TOLERANCE: f64 = 1e-6;
pub const CALIBRATION_MAX_ITERATIONS: usize = 100;

/// One worker's answers to the qualification test of a category.
#[derive(Clone, Debug, PartialEq)]
pub struct QualificationRecord {
    pub worker: WorkerId,
    pub category: CategoryId,
    pub answers: Vec<usize>,
    pub ground_truth: Vec<usize>,
    /// Per test task difficulty `β_i`; uniform when unknown.
    pub difficulties: Vec<f64>,
}

impl QualificationRecord {
    pub fn new(
        worker: WorkerId,
        category: CategoryId,
        answers: Vec<usize>,
        ground_truth: Vec<usize>,
    ) -> Self {
        let difficulties = vec![1.0; answers.len()];
        QualificationRecord { worker, category, answers, ground_truth, difficulties }
    }

    fn validate(&self) -> Result<()> {
        if self.answers.is_empty() {
            return Err(Error::EmptyTest);
        }
        if self.answers.len() != self.ground_truth.len() {
            return Err(Error::LengthMismatch {
                expected: self.ground_truth.len(),
                found: self.answers.len(),
            });
        }
        if self.difficulties.len() != self.answers.len() {
            return Err(Error::LengthMismatch {
                expected: self.answers.len(),
                found: self.difficulties.len(),
            });
        }
        Ok(())
    }

    fn correct(&self) -> impl Iterator<Item = bool> + '_ {
        self.answers.iter().zip(&self.ground_truth).map(|(a, g)| a == g)
    }
}

fn raw_initial_accuracy(record: &QualificationRecord) -> Result<f64> {
    record.validate()?;
    let correct = record.correct().filter(|c| *c).count();
    Ok(correct as f64 / record.answers.len() as f64)
}

fn raw_weighted_accuracy(record: &QualificationRecord) -> Result<f64> {
    record.validate()?;
    let total: f64 = record.difficulties.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let hit: f64 = record
        .correct()
        .zip(&record.difficulties)
        .filter(|(c, _)| *c)
        .map(|(_, b)| *b)
        .sum();
    Ok(hit / total)
}

/// Fraction of qualification tasks answered correctly, clamped above one half.
pub fn initial_accuracy(record: &QualificationRecord) -> Result<Accuracy> {
    clamp_accuracy(raw_initial_accuracy(record)?)
}

/// Difficulty-weighted fraction of correct qualification answers, clamped.
pub fn weighted_accuracy(record: &QualificationRecord) -> Result<Accuracy> {
    clamp_accuracy(raw_weighted_accuracy(record)?)
}

/// Accuracy-weighted share of wrong answers on one test task.
pub fn testing_task_difficulty(accuracies: &[f64], wrong: &[bool]) -> Result<f64> {
    if accuracies.is_empty() {
        return Err(Error::EmptyCohort);
    }
    if accuracies.len() != wrong.len() {
        return Err(Error::LengthMismatch { expected: accuracies.len(), found: wrong.len() });
    }
    if let Some(&bad) = accuracies.iter().find(|a| !(**a >= 0.0 && **a <= 1.0)) {
        return Err(Error::BadAccuracy(bad));
    }
    let total: f64 = accuracies.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let missed: f64 = accuracies.iter().zip(wrong).filter(|(_, w)| **w).map(|(a, _)| *a).sum();
    Ok((missed / total).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibratedWorker {
    pub worker: WorkerId,
    pub category: CategoryId,
    /// Unclamped weighted accuracy at the fixed point.
    pub raw: f64,
    pub accuracy: Accuracy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub workers: Vec<CalibratedWorker>,
    /// Test-task difficulties per category, in test order.
    pub difficulties: BTreeMap<CategoryId, Vec<f64>>,
    pub iterations: usize,
    /// False if some category hit the pass limit without settling. Small cohorts
    /// can cycle: once every difficulty reaches zero the accuracies fall back to
    /// plain fractions and the alternation starts over.
    pub converged: bool,
}

/// Alternates weighted worker accuracy and test-task difficulty from uniform
/// difficulties until neither moves by more than `1e-6` (at most 100 passes).
pub fn calibrate_cohort(records: &[QualificationRecord]) -> Result<Calibration> {
    if records.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let mut by_category: BTreeMap<CategoryId, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        r.validate()?;
        by_category.entry(r.category).or_default().push(i);
    }

    let mut raw = vec![0.0; records.len()];
    let mut difficulties = BTreeMap::new();
    let mut iterations = 0;
    let mut converged = true;
    for (&category, members) in &by_category {
        let tests = records[members[0]].answers.len();
        for &m in members {
            if records[m].answers.len() != tests {
                return Err(Error::LengthMismatch { expected: tests, found: records[m].answers.len() });
            }
        }
        let mut beta = vec![1.0; tests];
        let mut alpha: Vec<f64> = vec![f64::NAN; members.len()];
        let mut passes = 0;
        loop {
            passes += 1;
            let mut change: f64 = 0.0;
            for (slot, &m) in alpha.iter_mut().zip(members) {
                let mut rec = records[m].clone();
                rec.difficulties.clone_from(&beta);
                let next = match raw_weighted_accuracy(&rec) {
                    Err(Error::DegenerateWeights) => raw_initial_accuracy(&rec)?,
                    other => other?,
                };
                change = change.max(if slot.is_nan() { f64::INFINITY } else { (next - *slot).abs() });
                *slot = next;
            }
            for (i, b) in beta.iter_mut().enumerate() {
                let wrong: Vec<bool> = members
                    .iter()
                    .map(|&m| records[m].answers[i] != records[m].ground_truth[i])
                    .collect();
                let next = match testing_task_difficulty(&alpha, &wrong) {
                    Err(Error::DegenerateWeights) => {
                        wrong.iter().filter(|w| **w).count() as f64 / wrong.len() as f64
                    }
                    other => other?,
                };
                change = change.max((next - *b).abs());
                *b = next;
            }
            if change < CALIBRATION_TOLERANCE {
                break;
            }
            if passes >= CALIBRATION_MAX_ITERATIONS {
                log::warn!("calibration of category {} did not settle in {passes} passes", category.0);
                converged = false;
                break;
            }
        }
        iterations = iterations.max(passes);
        for (a, &m) in alpha.iter().zip(members) {
            raw[m] = *a;
        }
        difficulties.insert(category, beta);
    }

    let workers = records
        .iter()
        .zip(&raw)
        .map(|(r, &a)| {
            Ok(CalibratedWorker {
                worker: r.worker,
                category: r.category,
                raw: a,
                accuracy: clamp_accuracy(a)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Calibration { workers, difficulties, iterations, converged })
}

/// Blends the qualification accuracy with the agreement rate on recent real tasks,
/// before clamping. `recent` holds `(worker answer, aggregated result)` pairs.
pub fn blend_accuracy(qualified: f64, cohort_size: usize, recent: &[(usize, usize)]) -> f64 {
    let k = recent.len();
    if k == 0 {
        return qualified;
    }
    let theta = cohort_size as f64 / (cohort_size + k) as f64;
    let agree = recent.iter().filter(|(a, g)| a == g).count() as f64 / k as f64;
    theta * qualified + (1.0 - theta) * agree
}

/// Updated category accuracy, clamped above one half.
pub fn update_accuracy(
    qualified: f64,
    cohort_size: usize,
    recent: &[(usize, usize)],
) -> Result<Accuracy> {
    clamp_accuracy(blend_accuracy(qualified, cohort_size, recent))
}

/// Number of latest responses to use at time `now`: those inside the recent window,
/// bounded to `[MIN_RECENT_POINTS, MAX_RECENT_POINTS]`.
pub fn recent_window(history: &[(Seconds, Seconds)], now: Seconds) -> usize {
    let inside = history.iter().rev().take_while(|(t, _)| now - t <= RECENT_WINDOW).count();
    inside.clamp(MIN_RECENT_POINTS, MAX_RECENT_POINTS).min(history.len())
}

/// Least-squares line through the `eta` latest `(timestamp, seconds)` points,
/// evaluated at `at` and floored at [`MIN_RESPONSE`].
pub fn predict_response_time(history: &[(Seconds, Seconds)], eta: usize, at: Seconds) -> Result<Seconds> {
    if history.is_empty() {
        return Err(Error::NoHistory);
    }
    let eta = eta.clamp(1, history.len());
    let pts = &history[history.len() - eta..];
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_r = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.0 - mean_t)).sum();
    let prediction = if pts.len() < 2 || sxx <= f64::EPSILON * (1.0 + mean_t * mean_t) * n {
        mean_r
    } else {
        let sxy: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_r)).sum();
        let slope = sxy / sxx;
        mean_r + slope * (at - mean_t)
    };
    Ok(prediction.max(MIN_RESPONSE))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DifficultyEstimate {
    pub task: crate::model::TaskId,
    pub difficulty: f64,
    pub entropy: f64,
    pub skips: u32,
    pub answered: usize,
    pub responders: usize,
}

/// Accuracy-weighted entropy of the answer distribution (natural log).
pub fn answer_entropy(choices: &[(usize, f64)], choice_count: usize) -> f64 {
    let total: f64 = choices.iter().map(|(_, a)| a).sum();
    if choices.is_empty() || total <= 0.0 {
        return 0.0;
    }
    let mut mass = vec![0.0; choice_count];
    for &(c, a) in choices {
        if c < choice_count {
            mass[c] += a;
        }
    }
    mass.iter()
        .filter(|m| **m > 0.0)
        .map(|m| {
            let p = m / total;
            -p * libm::log(p)
        })
        .sum()
}

/// Difficulty `d_i = γ/|W| + (|Ω|/|W|)·H/log R + ε`, clamped into `(0, 1]`.
///
/// `|W|` counts workers who responded, so `|Ω| + γ = |W|`.
pub fn task_difficulty(task: &Task, accuracy_of: impl Fn(WorkerId) -> f64) -> Result<DifficultyEstimate> {
    let skips = task.skip_count();
    let choices: Vec<(usize, f64)> = task
        .received()
        .filter_map(|a| a.choice.pick().map(|c| (c, accuracy_of(a.worker))))
        .collect();
    let answered = choices.len();
    let responders = answered + skips as usize;
    if responders == 0 {
        return Err(Error::NoAssignees);
    }
    let entropy = answer_entropy(&choices, task.choice_count);
    let max_entropy = libm::log(task.choice_count as f64);
    let w = responders as f64;
    let d = skips as f64 / w + (answered as f64 / w) * (entropy / max_entropy) + BASE_DIFFICULTY;
    Ok(DifficultyEstimate {
        task: task.id,
        difficulty: d.clamp(BASE_DIFFICULTY, 1.0),
        entropy,
        skips,
        answered,
        responders,
    })
}
