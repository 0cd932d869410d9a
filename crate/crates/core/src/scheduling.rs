//! Delay-probability scoring and the task scheduling policies.
//!
//! Policies read a roster of workers indexed by [`WorkerId::index`]: the worker with
//! id `w` must sit at `roster[w.index()]`.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Assignment, Seconds, Task, TaskId, Worker, WorkerId};
use crate::voting::{expected_accuracy_incremental, WorkerSetAccuracy};

/// Default number of workers per task for the iCrowd-style baseline.
pub const DEFAULT_ICROWD_K: usize = 3;

/// Round interval used by the batch policies unless configured otherwise.
pub const DEFAULT_ROUND_INTERVAL: Seconds = 30.0;

/// Urgency of an open task: `(d·q)^⌈(ε_max − ε)/r̄⌉`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayScore {
    pub task: TaskId,
    pub score: f64,
    /// `exponent · ln(d·q)`; ranking uses this so long waits never underflow to ties.
    pub log_score: f64,
    pub exponent: u64,
    pub difficulty: f64,
    pub quality: f64,
    pub lapse: Seconds,
    pub max_lapse: Seconds,
    pub mean_response: Seconds,
}

/// Time lapse `ε_i`: waiting time of an open task, latency of a completed one.
pub fn lapse(task: &Task, now: Seconds) -> Seconds {
    let waited = (now - task.start_time).max(0.0);
    match task.latency() {
        Some(l) => waited.min(l),
        None => waited,
    }
}

/// Largest lapse over a set of tasks, `0` for an empty set.
pub fn max_lapse<'t>(tasks: impl IntoIterator<Item = &'t Task>, now: Seconds) -> Seconds {
    tasks.into_iter().map(|t| lapse(t, now)).fold(0.0, f64::max)
}

pub fn delay_score(task: &Task, now: Seconds, max_lapse: Seconds, mean_response: Seconds) -> Result<DelayScore> {
    if mean_response.is_nan() || mean_response <= 0.0 || !mean_response.is_finite() {
        return Err(Error::BadCategoryStats(mean_response));
    }
    let eps = lapse(task, now);
    let rounds = (max_lapse - eps) / mean_response;
    // guard against 2.0000000001 style rounding before the ceiling
    let exponent = if rounds <= 0.0 { 0 } else { libm::ceil(rounds - 1e-9).max(0.0) as u64 };
    let base = (task.difficulty * task.quality_threshold).clamp(f64::MIN_POSITIVE, 1.0);
    let log_score = if exponent == 0 { 0.0 } else { exponent as f64 * libm::log(base) };
    Ok(DelayScore {
        task: task.id,
        score: libm::exp(log_score),
        log_score,
        exponent,
        difficulty: task.difficulty,
        quality: task.quality_threshold,
        lapse: eps,
        max_lapse,
        mean_response,
    })
}

/// Per-decision inputs shared by every policy.
#[derive(Clone, Copy, Debug)]
pub struct SchedContext<'a> {
    pub now: Seconds,
    /// Frozen `ε_max` for this decision or round.
    pub max_lapse: Seconds,
    /// Mean observed response time per category (`r̄_l`), indexed by category.
    pub mean_response: &'a [Seconds],
}

impl SchedContext<'_> {
    fn score(&self, task: &Task) -> Result<DelayScore> {
        let r = self
            .mean_response
            .get(task.category.index())
            .copied()
            .unwrap_or(f64::NAN);
        delay_score(task, self.now, self.max_lapse, r)
    }
}

/// Highest urgency first; ties go to the earlier task, then the smaller id.
fn urgency_order(a: (&DelayScore, &Task), b: (&DelayScore, &Task)) -> Ordering {
    b.0.log_score
        .partial_cmp(&a.0.log_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.1.start_time.partial_cmp(&b.1.start_time).unwrap_or(Ordering::Equal))
        .then_with(|| a.1.id.cmp(&b.1.id))
}

/// Accuracies of the workers assigned to `task` who have not skipped it.
pub fn assigned_set(task: &Task, roster: &[Worker]) -> WorkerSetAccuracy {
    let mut set = WorkerSetAccuracy::new();
    for w in task.active_assignees() {
        if let Some(a) = roster.get(w.index()).and_then(|w| w.accuracy(task.category)) {
            // accuracies are stored clamped above one half
            set.push(a).expect("stored accuracy in (0.5, 1]");
        }
    }
    set
}

fn eligible_for(worker: &Worker, task: &Task) -> bool {
    task.is_open() && worker.is_subscribed(task.category) && !task.is_assigned_to(worker.id)
}

/// Outcome of a request-based decision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RequestDecision {
    pub task: TaskId,
    /// The in-flight set including the requester already reaches the quality
    /// threshold, so the task leaves the pool once this answer is in.
    pub closes: bool,
    pub score: DelayScore,
}

/// Request-based scheduling: hand the requesting worker the most urgent eligible task.
pub fn greedy_request<'t>(
    worker: &Worker,
    tasks: impl IntoIterator<Item = &'t Task>,
    roster: &[Worker],
    ctx: &SchedContext<'_>,
) -> Result<Option<RequestDecision>> {
    let mut best: Option<(DelayScore, &Task)> = None;
    for task in tasks {
        if !eligible_for(worker, task) {
            continue;
        }
        let s = ctx.score(task)?;
        let better = match &best {
            None => true,
            Some((bs, bt)) => urgency_order((&s, task), (bs, bt)) == Ordering::Less,
        };
        if better {
            best = Some((s, task));
        }
    }
    let Some((score, task)) = best else { return Ok(None) };
    let mut set = assigned_set(task, roster);
    let alpha = worker.accuracy(task.category).expect("eligible worker is subscribed");
    set.push(alpha)?;
    Ok(Some(RequestDecision { task: task.id, closes: set.meets(task.quality_threshold), score }))
}

/// RANDOM baseline: a uniformly chosen eligible task.
pub fn random_schedule<'t, R: Rng + ?Sized>(
    worker: &Worker,
    tasks: impl IntoIterator<Item = &'t Task>,
    rng: &mut R,
) -> Option<TaskId> {
    let eligible: Vec<TaskId> = tasks.into_iter().filter(|t| eligible_for(worker, t)).map(|t| t.id).collect();
    if eligible.is_empty() {
        None
    } else {
        Some(eligible[rng.random_range(0..eligible.len())])
    }
}

/// Adds the most accurate available workers until the majority accuracy of the
/// assigned set reaches `q_i` at an odd size. Returns only the new workers, or an
/// empty list when the pool cannot reach the threshold.
pub fn min_worker_set_selection(task: &Task, available: &[&Worker], already: &WorkerSetAccuracy) -> Vec<WorkerId> {
    let mut pool = candidates(task, available);
    pool.sort_by(|a, b| by_accuracy(task, a, b));
    grow_until_met(task, &pool, already)
}

fn candidates<'w>(task: &Task, available: &[&'w Worker]) -> Vec<&'w Worker> {
    available.iter().copied().filter(|w| eligible_for(w, task)).collect()
}

fn by_accuracy(task: &Task, a: &Worker, b: &Worker) -> Ordering {
    let (x, y) = (a.accuracy(task.category).unwrap_or(0.0), b.accuracy(task.category).unwrap_or(0.0));
    y.partial_cmp(&x).unwrap_or(Ordering::Equal).then_with(|| a.id.cmp(&b.id))
}

fn by_speed(task: &Task, a: &Worker, b: &Worker) -> Ordering {
    let (x, y) = (
        a.predicted_response(task.category).unwrap_or(f64::INFINITY),
        b.predicted_response(task.category).unwrap_or(f64::INFINITY),
    );
    x.partial_cmp(&y).unwrap_or(Ordering::Equal).then_with(|| by_accuracy(task, a, b))
}

fn grow_until_met(task: &Task, ordered: &[&Worker], already: &WorkerSetAccuracy) -> Vec<WorkerId> {
    let q = task.quality_threshold;
    let mut set = already.clone();
    if set.meets(q) {
        return Vec::new();
    }
    let mut added = Vec::new();
    for w in ordered {
        let alpha = w.accuracy(task.category).expect("candidate is subscribed");
        let reaches = (set.len() + 1) % 2 == 1
            && expected_accuracy_incremental(&set, alpha).is_ok_and(|p| p >= q);
        set.push(alpha).expect("stored accuracy in (0.5, 1]");
        added.push(w.id);
        if reaches {
            return added;
        }
    }
    Vec::new()
}

/// How a batch policy picks the workers for one task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetRule {
    /// Fewest workers: most accurate first until the threshold is met (BBS).
    MostAccurate,
    /// Fastest predicted workers first until the threshold is met (fGreedy).
    Fastest,
    /// Exactly `k` workers with the highest accuracy, ignoring the threshold (iCrowd).
    TopK(usize),
}

impl SetRule {
    fn select(self, task: &Task, available: &[&Worker], already: &WorkerSetAccuracy) -> Vec<WorkerId> {
        match self {
            SetRule::MostAccurate => min_worker_set_selection(task, available, already),
            SetRule::Fastest => {
                let mut pool = candidates(task, available);
                pool.sort_by(|a, b| by_speed(task, a, b));
                grow_until_met(task, &pool, already)
            }
            SetRule::TopK(k) => {
                let mut pool = candidates(task, available);
                if k == 0 || pool.len() < k {
                    return Vec::new();
                }
                pool.sort_by(|a, b| by_accuracy(task, a, b));
                pool.iter().take(k).map(|w| w.id).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkerBudget {
    pub worker: WorkerId,
    pub initial: Seconds,
    pub remaining: Seconds,
}

/// Result of one batch round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundPlan {
    pub interval: Seconds,
    pub budgets: Vec<WorkerBudget>,
    pub assignment: Assignment,
}

impl RoundPlan {
    /// Predicted work given to `worker` this round.
    pub fn committed(&self, worker: WorkerId) -> Seconds {
        self.budgets
            .iter()
            .find(|b| b.worker == worker)
            .map_or(0.0, |b| b.initial - b.remaining)
    }
}

/// Batch-based scheduling with the default rule and a full `Δ` budget for every
/// online worker.
pub fn greedy_batch(
    tasks: &[&Task],
    roster: &[Worker],
    online: &[WorkerId],
    interval: Seconds,
    ctx: &SchedContext<'_>,
) -> Result<RoundPlan> {
    let budgets: Vec<(WorkerId, Seconds)> = online.iter().map(|&w| (w, interval)).collect();
    plan_round(SetRule::MostAccurate, tasks, roster, &budgets, interval, ctx)
}

/// fGreedy baseline: batch rounds that staff each task with the fastest workers.
pub fn fgreedy_schedule(
    tasks: &[&Task],
    roster: &[Worker],
    online: &[WorkerId],
    interval: Seconds,
    ctx: &SchedContext<'_>,
) -> Result<RoundPlan> {
    let budgets: Vec<(WorkerId, Seconds)> = online.iter().map(|&w| (w, interval)).collect();
    plan_round(SetRule::Fastest, tasks, roster, &budgets, interval, ctx)
}

/// iCrowd-style baseline: `k` most accurate workers per task, most urgent task first.
pub fn icrowd_k_schedule(
    tasks: &[&Task],
    roster: &[Worker],
    online: &[WorkerId],
    interval: Seconds,
    k: usize,
    ctx: &SchedContext<'_>,
) -> Result<RoundPlan> {
    let budgets: Vec<(WorkerId, Seconds)> = online.iter().map(|&w| (w, interval)).collect();
    plan_round(SetRule::TopK(k), tasks, roster, &budgets, interval, ctx)
}

/// One batch round: visit tasks by urgency and staff each with `rule`, using only
/// workers whose remaining budget covers their predicted response time for the
/// task's category. Budgets start at the given values (at most `interval`).
pub fn plan_round(
    rule: SetRule,
    tasks: &[&Task],
    roster: &[Worker],
    budgets: &[(WorkerId, Seconds)],
    interval: Seconds,
    ctx: &SchedContext<'_>,
) -> Result<RoundPlan> {
    let mut scored = Vec::with_capacity(tasks.len());
    for &t in tasks.iter().filter(|t| t.is_open()) {
        scored.push((ctx.score(t)?, t));
    }
    scored.sort_by(|a, b| urgency_order((&a.0, a.1), (&b.0, b.1)));

    let mut ledger: Vec<WorkerBudget> = budgets
        .iter()
        .map(|&(worker, b)| {
            let b = b.clamp(0.0, interval);
            WorkerBudget { worker, initial: b, remaining: b }
        })
        .collect();
    let mut slot: Vec<Option<usize>> = vec![None; roster.len()];
    for (i, b) in ledger.iter().enumerate() {
        slot[b.worker.index()] = Some(i);
    }
    let mut active: Vec<usize> = (0..ledger.len())
        .filter(|&i| can_take_more(&roster[ledger[i].worker.index()], ledger[i].remaining))
        .collect();
    let mut assignment = Assignment::new(None);

    for (_, task) in scored {
        if active.is_empty() {
            break;
        }
        let available: Vec<&Worker> = active
            .iter()
            .filter(|&&i| {
                roster[ledger[i].worker.index()]
                    .predicted_response(task.category)
                    .is_some_and(|r| r <= ledger[i].remaining)
            })
            .map(|&i| &roster[ledger[i].worker.index()])
            .collect();
        if available.is_empty() {
            continue;
        }
        let already = assigned_set(task, roster);
        let chosen = rule.select(task, &available, &already);
        for w in chosen {
            assignment.insert(task.id, w);
            let i = slot[w.index()].expect("worker in ledger");
            let r = roster[w.index()].predicted_response(task.category).expect("subscribed");
            ledger[i].remaining -= r;
            if !can_take_more(&roster[w.index()], ledger[i].remaining) {
                active.retain(|&a| a != i);
            }
        }
    }
    Ok(RoundPlan { interval, budgets: ledger, assignment })
}

fn can_take_more(worker: &Worker, remaining: Seconds) -> bool {
    worker
        .subscriptions()
        .filter_map(|c| worker.predicted_response(c))
        .any(|r| r <= remaining)
}
