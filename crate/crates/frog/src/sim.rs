//! Discrete-event simulation of a crowdsourcing platform under one scheduling policy.
//!
//! Workers stay online for the whole run. A worker who finishes an answer is
//! immediately free again. Request-based policies (RBS, RANDOM) hand a free
//! worker one task at a time. Batch policies (BBS, fGreedy, iCrowd) plan every `Δ`
//! seconds and append to per-worker queues.
//!
//! A task completes as soon as the workers who have actually answered form an odd
//! set whose expected majority accuracy reaches the task's threshold. Answers
//! that arrive later are discarded, and queued assignments for a completed task
//! are dropped.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use frog_core::model::{Answer, Choice, Task, TaskId, Worker, WorkerId};
use frog_core::profiling::{predict_response_time, recent_window, task_difficulty, update_accuracy};
use frog_core::scheduling::{assigned_set, greedy_request, lapse, plan_round, random_schedule, SchedContext, SetRule};
use frog_core::voting::{aggregate, expected_accuracy_majority, Scheme, Vote};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, Policy, SimConfig};
use crate::population::{generate_population, truncated_response, ArchetypeTable, Population, TrueProfile};
use crate::report::{Conservation, MetricsReport, MetricsRow, TaskRecord};

/// Observations per category before the running mean replaces the generator mean.
const CATEGORY_WARMUP: usize = 5;
/// Aggregated results older than this no longer count towards accuracy refresh.
const REFRESH_WINDOW: f64 = 900.0;

/// Loads the configured archetype table and runs one simulation.
pub fn run(cfg: &SimConfig) -> Result<MetricsReport, ConfigError> {
    cfg.validate()?;
    let table = match &cfg.archetypes {
        Some(path) => ArchetypeTable::load(path)?,
        None => ArchetypeTable::builtin(),
    };
    Ok(run_with_table(cfg, &table))
}

pub fn run_with_table(cfg: &SimConfig, table: &ArchetypeTable) -> MetricsReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let population = generate_population(cfg, table, &mut rng);
    let mut run_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run_rng.set_stream(1);
    Sim::new(cfg, population, run_rng).run()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Arrive(usize),
    Finish(usize),
    Round,
}

#[derive(Clone, Copy, Debug)]
struct Event {
    at: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed so the max-heap pops the earliest event, then the earliest scheduled
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.total_cmp(&self.at).then(other.seq.cmp(&self.seq))
    }
}

struct Job {
    task: usize,
    duration: f64,
    predicted_end: f64,
}

#[derive(Default)]
struct WorkerState {
    job: Option<Job>,
    queue: VecDeque<usize>,
}

#[derive(Clone, Default)]
struct TaskMeta {
    arrived: bool,
    /// The in-flight set already reaches the threshold; request policies skip it.
    closed: bool,
    /// Issued assignments not yet answered, discarded or cancelled.
    pending: usize,
    expected: Option<f64>,
    result: Option<usize>,
    answer_set: Option<Vec<f64>>,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    now: f64,
    seq: u64,
    heap: BinaryHeap<Event>,
    tasks: Vec<Task>,
    meta: Vec<TaskMeta>,
    roster: Vec<Worker>,
    truth: Vec<Vec<Option<TrueProfile>>>,
    workers: Vec<WorkerState>,
    idle: Vec<bool>,
    seed_means: Vec<f64>,
    observed: Vec<(f64, usize)>,
    mean_response: Vec<f64>,
    recent: Vec<Vec<VecDeque<(f64, usize, usize)>>>,
    cohort: Vec<usize>,
    rng: ChaCha8Rng,
    counts: Conservation,
    open: usize,
    starved_warned: bool,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, p: Population, rng: ChaCha8Rng) -> Self {
        let l = cfg.categories;
        let n = p.roster.len();
        let cohort = (0..l)
            .map(|c| p.roster.iter().filter(|w| w.is_subscribed(frog_core::CategoryId(c as u32))).count())
            .collect();
        Sim {
            cfg,
            now: 0.0,
            seq: 0,
            heap: BinaryHeap::new(),
            meta: vec![TaskMeta::default(); p.tasks.len()],
            open: p.tasks.len(),
            tasks: p.tasks,
            roster: p.roster,
            truth: p.truth,
            workers: (0..n).map(|_| WorkerState::default()).collect(),
            idle: vec![true; n],
            mean_response: p.category_means.clone(),
            seed_means: p.category_means,
            observed: vec![(0.0, 0); l],
            recent: (0..n).map(|_| vec![VecDeque::new(); l]).collect(),
            cohort,
            rng,
            counts: Conservation::default(),
            starved_warned: false,
        }
    }

    fn push(&mut self, at: f64, kind: Kind) {
        self.seq += 1;
        self.heap.push(Event { at, seq: self.seq, kind });
    }

    fn run(mut self) -> MetricsReport {
        for i in 0..self.tasks.len() {
            self.push(self.tasks[i].start_time, Kind::Arrive(i));
        }
        if self.cfg.policy.is_batch() && !self.tasks.is_empty() {
            self.push(0.0, Kind::Round);
        }
        while self.open > 0 {
            let Some(ev) = self.heap.pop() else { break };
            if ev.at > self.cfg.horizon {
                break;
            }
            self.now = ev.at;
            match ev.kind {
                Kind::Arrive(t) => {
                    self.meta[t].arrived = true;
                    let more_now = self
                        .heap
                        .peek()
                        .is_some_and(|e| e.at == self.now && matches!(e.kind, Kind::Arrive(_)));
                    if !self.cfg.policy.is_batch() && !more_now {
                        self.dispatch_idle();
                    }
                }
                Kind::Finish(w) => self.finish(w),
                Kind::Round => {
                    self.round();
                    if self.open > 0 {
                        self.push(self.now + self.cfg.round_interval, Kind::Round);
                    }
                }
            }
        }
        self.report()
    }

    fn category_of(&self, t: usize) -> frog_core::CategoryId {
        self.tasks[t].category
    }

    fn assign(&mut self, t: usize, w: usize) {
        self.tasks[t].assign(WorkerId(w as u32));
        self.meta[t].pending += 1;
        self.counts.issued += 1;
    }

    fn start(&mut self, w: usize, t: usize) {
        let c = self.category_of(t);
        let profile = self.truth[w][c.index()].expect("assigned workers are subscribed");
        let duration = truncated_response(&mut self.rng, profile.mean_response, profile.variance);
        let predicted = self.roster[w].predicted_response(c).expect("subscribed");
        self.workers[w].job = Some(Job { task: t, duration, predicted_end: self.now + predicted });
        self.idle[w] = false;
        self.push(self.now + duration, Kind::Finish(w));
    }

    /// Arrived, open tasks a requesting worker may be handed. Only RBS leaves out
    /// tasks whose in-flight set already reaches the threshold.
    fn request_pool(&self) -> Vec<usize> {
        let honour_closed = self.cfg.policy == Policy::Rbs;
        (0..self.tasks.len())
            .filter(|&t| self.meta[t].arrived && self.tasks[t].is_open() && !(honour_closed && self.meta[t].closed))
            .collect()
    }

    /// Gives worker `w` a task under a request policy; false if none fits.
    fn request(&mut self, w: usize) -> bool {
        let pool = self.request_pool();
        if pool.is_empty() {
            return false;
        }
        let chosen = match self.cfg.policy {
            Policy::Random => {
                let tasks = pool.iter().map(|&t| &self.tasks[t]);
                random_schedule(&self.roster[w], tasks, &mut self.rng).map(|id| id.index())
            }
            _ => {
                let max_lapse = pool.iter().map(|&t| lapse(&self.tasks[t], self.now)).fold(0.0, f64::max);
                let ctx = SchedContext { now: self.now, max_lapse, mean_response: &self.mean_response };
                let tasks = pool.iter().map(|&t| &self.tasks[t]);
                greedy_request(&self.roster[w], tasks, &self.roster, &ctx)
                    .expect("scheduler inputs are valid")
                    .map(|d| d.task.index())
            }
        };
        let Some(t) = chosen else { return false };
        self.assign(t, w);
        self.refresh_closed(t);
        self.start(w, t);
        true
    }

    fn dispatch_idle(&mut self) {
        for w in 0..self.workers.len() {
            if self.idle[w] && self.workers[w].job.is_none() && !self.request(w) {
                // nothing this worker can take; later workers may still match other categories
                continue;
            }
        }
    }

    fn refresh_closed(&mut self, t: usize) -> bool {
        let was = self.meta[t].closed;
        let now = assigned_set(&self.tasks[t], &self.roster).meets(self.tasks[t].quality_threshold);
        self.meta[t].closed = now;
        was && !now
    }

    fn start_next(&mut self, w: usize) {
        while let Some(t) = self.workers[w].queue.pop_front() {
            if self.tasks[t].is_open() {
                self.start(w, t);
                return;
            }
            self.counts.cancelled += 1;
            self.meta[t].pending -= 1;
        }
        self.idle[w] = true;
    }

    fn observe_response(&mut self, w: usize, t: usize, duration: f64) {
        let c = self.category_of(t);
        let now = self.now;
        let profile = self.roster[w].profile_mut(c).expect("subscribed");
        if profile.record_response(now, duration) {
            let eta = recent_window(profile.history(), now);
            if let Ok(r) = predict_response_time(profile.history(), eta, now) {
                profile.set_predicted_response(r);
            }
        }
        let (sum, count) = &mut self.observed[c.index()];
        *sum += duration;
        *count += 1;
        self.mean_response[c.index()] =
            if *count >= CATEGORY_WARMUP { *sum / *count as f64 } else { self.seed_means[c.index()] };
    }

    fn sample_choice(&mut self, w: usize, t: usize) -> Choice {
        let task = &self.tasks[t];
        let r = task.choice_count;
        let truth = task.ground_truth.expect("simulated tasks carry ground truth");
        let accuracy = self.truth[w][task.category.index()].expect("subscribed").accuracy;
        if self.cfg.skip_probability > 0.0 && self.rng.random_bool(self.cfg.skip_probability) {
            return Choice::Skip;
        }
        if self.rng.random_bool(accuracy) {
            Choice::Pick(truth)
        } else {
            let k = self.rng.random_range(0..r - 1);
            Choice::Pick(if k >= truth { k + 1 } else { k })
        }
    }

    fn finish(&mut self, w: usize) {
        let job = self.workers[w].job.take().expect("finish event for a busy worker");
        let t = job.task;
        self.meta[t].pending -= 1;
        self.observe_response(w, t, job.duration);

        if !self.tasks[t].is_open() {
            self.counts.discarded += 1;
        } else {
            let choice = self.sample_choice(w, t);
            let answer = Answer {
                worker: WorkerId(w as u32),
                task: TaskId(t as u32),
                choice,
                submit_time: self.now,
                latency: job.duration,
            };
            self.tasks[t].record_answer(answer).expect("valid answer");
            if choice.is_skip() {
                self.counts.skipped += 1;
            } else {
                self.counts.answered += 1;
            }
            let roster = &self.roster;
            let category = self.tasks[t].category;
            if let Ok(est) = task_difficulty(&self.tasks[t], |id| roster[id.index()].accuracy(category).unwrap_or(0.5))
            {
                self.tasks[t].difficulty = est.difficulty;
            }
            if !self.try_complete(t) {
                let reopened = self.refresh_closed(t);
                if reopened && !self.cfg.policy.is_batch() {
                    self.dispatch_idle();
                }
            }
        }

        if self.cfg.policy.is_batch() {
            self.start_next(w);
        } else if !self.request(w) {
            self.idle[w] = true;
        }
    }

    /// Completes `t` if its answered set is odd and reaches the threshold.
    fn try_complete(&mut self, t: usize) -> bool {
        let task = &self.tasks[t];
        let c = task.category;
        let answered: Vec<(usize, usize)> = task
            .received()
            .filter_map(|a| a.choice.pick().map(|x| (a.worker.index(), x)))
            .collect();
        if answered.len().is_multiple_of(2) {
            return false;
        }
        let accs: Vec<f64> = answered.iter().map(|&(w, _)| self.roster[w].accuracy(c).expect("subscribed")).collect();
        let p = expected_accuracy_majority(&accs).expect("odd set of stored accuracies");
        if p < task.quality_threshold {
            return false;
        }
        let r = task.choice_count;
        let votes: Vec<Vote> = answered
            .iter()
            .zip(&accs)
            .map(|(&(w, x), &a)| {
                let stored = self.roster[w].profile(c).expect("subscribed").accuracy;
                Vote { choice: Choice::Pick(stored.effective_choice(x, r)), accuracy: a }
            })
            .collect();
        let result = aggregate(&votes, r, Scheme::Majority).expect("valid votes").winner;
        self.tasks[t].complete(self.now);
        self.meta[t].expected = Some(p);
        self.meta[t].result = result;
        self.meta[t].answer_set = Some(accs.clone());
        self.open -= 1;

        if self.cfg.accuracy_refresh {
            if let Some(res) = result {
                for (&(w, _), v) in answered.iter().zip(&votes) {
                    let pairs = &mut self.recent[w][c.index()];
                    pairs.push_back((self.now, v.choice.pick().expect("vote"), res));
                    while pairs.front().is_some_and(|p| self.now - p.0 > REFRESH_WINDOW) {
                        pairs.pop_front();
                    }
                    let pairs: Vec<(usize, usize)> = pairs.iter().map(|&(_, a, g)| (a, g)).collect();
                    let profile = self.roster[w].profile_mut(c).expect("subscribed");
                    if let Ok(acc) = update_accuracy(profile.qualified, self.cohort[c.index()], &pairs) {
                        profile.accuracy = acc;
                    }
                }
            }
        }
        true
    }

    fn round(&mut self) {
        let icrowd = self.cfg.policy == Policy::Icrowd;
        let eligible: Vec<usize> = (0..self.tasks.len())
            .filter(|&t| {
                let task = &self.tasks[t];
                self.meta[t].arrived
                    && task.is_open()
                    && if icrowd {
                        self.meta[t].pending == 0
                    } else {
                        !assigned_set(task, &self.roster).meets(task.quality_threshold)
                    }
            })
            .collect();
        if eligible.is_empty() || self.workers.is_empty() {
            return;
        }
        let delta = self.cfg.round_interval;
        let budgets: Vec<(WorkerId, f64)> = (0..self.workers.len())
            .filter(|&w| self.roster[w].online)
            .map(|w| (WorkerId(w as u32), (delta - self.backlog(w)).max(0.0)))
            .collect();
        let max_lapse = eligible.iter().map(|&t| lapse(&self.tasks[t], self.now)).fold(0.0, f64::max);
        let ctx = SchedContext { now: self.now, max_lapse, mean_response: &self.mean_response };
        let rule = match self.cfg.policy {
            Policy::Fgreedy => SetRule::Fastest,
            Policy::Icrowd => SetRule::TopK(self.cfg.icrowd_k),
            _ => SetRule::MostAccurate,
        };
        let refs: Vec<&Task> = eligible.iter().map(|&t| &self.tasks[t]).collect();
        let plan = plan_round(rule, &refs, &self.roster, &budgets, delta, &ctx).expect("scheduler inputs are valid");
        if plan.assignment.is_empty() && !self.starved_warned && self.workers.iter().all(|s| s.job.is_none()) {
            log::warn!(
                "round at t={} assigned nothing although every worker is idle; Δ={delta} may be shorter than all predicted response times",
                self.now
            );
            self.starved_warned = true;
        }
        for &(t, w) in plan.assignment.pairs() {
            self.assign(t.index(), w.index());
            self.workers[w.index()].queue.push_back(t.index());
        }
        for w in 0..self.workers.len() {
            if self.workers[w].job.is_none() && !self.workers[w].queue.is_empty() {
                self.start_next(w);
            }
        }
    }

    /// Predicted seconds of work already committed to `w`.
    fn backlog(&self, w: usize) -> f64 {
        let state = &self.workers[w];
        let current = state.job.as_ref().map_or(0.0, |j| (j.predicted_end - self.now).max(0.0));
        let queued: f64 = state
            .queue
            .iter()
            .filter(|&&t| self.tasks[t].is_open())
            .map(|&t| self.roster[w].predicted_response(self.category_of(t)).unwrap_or(0.0))
            .sum();
        current + queued
    }

    fn report(mut self) -> MetricsReport {
        let horizon = self.cfg.horizon;
        let end_time = if self.open == 0 { self.now } else { horizon };
        self.counts.in_flight = self.workers.iter().filter(|w| w.job.is_some()).count() as u64;
        self.counts.queued = self.workers.iter().map(|w| w.queue.len() as u64).sum();

        let records: Vec<TaskRecord> = self
            .tasks
            .iter()
            .zip(&self.meta)
            .map(|(t, m)| {
                let answers = t.received().filter(|a| !a.choice.is_skip()).count();
                TaskRecord {
                    task: t.id.0,
                    category: t.category.0,
                    quality: t.quality_threshold,
                    start: t.start_time,
                    finish: t.finish_time(),
                    latency: t.latency(),
                    answers,
                    skips: t.skip_count(),
                    assigned: t.assignees().len(),
                    expected_accuracy: m.expected,
                    result: m.result,
                    ground_truth: t.ground_truth,
                    correct: t.finish_time().map(|_| m.result.is_some() && m.result == t.ground_truth),
                }
            })
            .collect();
        let completed = records.iter().filter(|r| r.finish.is_some()).count();
        let correct = records.iter().filter(|r| r.correct == Some(true)).count();
        let max_latency = records
            .iter()
            .map(|r| r.latency.unwrap_or((horizon - r.start).max(0.0)))
            .fold(0.0, f64::max);
        let throughput = if end_time > 0.0 { completed as f64 / (end_time / 3600.0) } else { 0.0 };
        let [qlo, qhi] = self.cfg.quality_range;
        MetricsReport {
            metrics: MetricsRow {
                seed: self.cfg.seed,
                policy: self.cfg.label(),
                m: self.cfg.tasks,
                n: self.cfg.workers,
                categories: self.cfg.categories,
                qlo,
                qhi,
                max_latency,
                avg_accuracy: if completed > 0 { correct as f64 / completed as f64 } else { 0.0 },
                throughput,
            },
            completed,
            unfinished: records.len() - completed,
            end_time,
            counts: self.counts,
            tasks: records,
            answer_sets: self.meta.into_iter().map(|m| m.answer_set).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(policy: Policy) -> SimConfig {
        SimConfig { tasks: 120, workers: 15, categories: 4, policy, ..SimConfig::default() }
    }

    #[test]
    fn every_policy_finishes_a_small_batch() {
        for policy in Policy::ALL {
            let r = run(&small(policy)).unwrap();
            assert_eq!(r.unfinished, 0, "{policy:?}");
            assert!(r.counts.balanced(), "{policy:?}: {:?}", r.counts);
            assert!(r.metrics.avg_accuracy > 0.7, "{policy:?}");
        }
    }

    #[test]
    fn perfect_workers_are_always_right() {
        let table = ArchetypeTable::from_csv(
            "archetype,column,label,accuracy,mean_response,variance\n1,0,X,1.0,10,4\n".as_bytes(),
            "t",
        )
        .unwrap();
        for policy in Policy::ALL {
            let r = run_with_table(&small(policy), &table);
            assert_eq!(r.metrics.avg_accuracy, 1.0, "{policy:?}");
            assert_eq!(r.unfinished, 0);
        }
    }

    #[test]
    fn no_workers_means_nothing_completes() {
        for policy in [Policy::Bbs, Policy::Rbs] {
            let cfg = SimConfig { workers: 0, horizon: 3600.0, ..small(policy) };
            let r = run(&cfg).unwrap();
            assert_eq!(r.completed, 0);
            assert_eq!(r.metrics.max_latency, 3600.0);
        }
    }

    #[test]
    fn skips_are_accounted_for() {
        for policy in Policy::ALL {
            let cfg = SimConfig { skip_probability: 0.3, ..small(policy) };
            let r = run(&cfg).unwrap();
            assert!(r.counts.skipped > 0);
            assert!(r.counts.balanced(), "{policy:?}: {:?}", r.counts);
            assert_eq!(r.unfinished, 0, "{policy:?}");
        }
    }

    #[test]
    fn poisson_arrivals_and_refresh() {
        for policy in Policy::ALL {
            let cfg = SimConfig {
                arrival: crate::config::Arrival::Poisson { rate: 0.5 },
                accuracy_refresh: true,
                ..small(policy)
            };
            let r = run(&cfg).unwrap();
            assert_eq!(r.unfinished, 0, "{policy:?}");
            assert!(r.tasks.iter().all(|t| t.latency.is_none_or(|l| l >= 0.0)));
        }
    }
}
