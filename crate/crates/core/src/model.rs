//! Domain types shared by the scheduler, the quality estimators and the simulator.
//!
//! All times are simulation-relative seconds stored as `f64`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Simulation-relative time or duration in seconds.
pub type Seconds = f64;

/// Offset above one half given to a worker whose raw accuracy is exactly 0.5.
pub const ACCURACY_NUDGE: f64 = 1e-6;

/// Dense category index, `0..L` within one engine instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CategoryId(pub u32);

impl CategoryId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub u32);

impl TaskId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WorkerId(pub u32);

impl WorkerId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Category {
    pub name: String,
    pub id: CategoryId,
}

/// A category accuracy kept strictly above one half.
///
/// A worker who is wrong more often than right on a binary task is just as
/// informative once their answers are inverted, so such workers are stored with
/// the complementary accuracy and `flipped` set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accuracy {
    value: f64,
    flipped: bool,
}

impl Accuracy {
    pub fn value(self) -> f64 {
        self.value
    }

    pub fn flipped(self) -> bool {
        self.flipped
    }

    /// Maps a worker's reported choice to the choice used for aggregation.
    pub fn effective_choice(self, choice: usize, choice_count: usize) -> usize {
        if self.flipped && choice_count == 2 {
            1 - choice
        } else {
            choice
        }
    }
}

/// Stores a binary-task accuracy in `(0.5, 1]`, inverting workers below one half.
pub fn clamp_accuracy(raw: f64) -> Result<Accuracy> {
    if !(0.0..=1.0).contains(&raw) {
        return Err(Error::BadAccuracy(raw));
    }
    let acc = if raw > 0.5 {
        Accuracy { value: raw, flipped: false }
    } else if raw < 0.5 {
        Accuracy { value: 1.0 - raw, flipped: true }
    } else {
        Accuracy { value: 0.5 + ACCURACY_NUDGE, flipped: false }
    };
    Ok(acc)
}

/// Multi-choice variant: inversion is meaningless for `R > 2`, so accuracies at or
/// below `1/R` make the worker unusable for the category.
pub fn clamp_accuracy_multichoice(raw: f64, choices: usize) -> Result<Accuracy> {
    if choices < 2 {
        return Err(Error::BadChoiceCount(choices));
    }
    if choices == 2 {
        return clamp_accuracy(raw);
    }
    if !(0.0..=1.0).contains(&raw) {
        return Err(Error::BadAccuracy(raw));
    }
    if raw <= 1.0 / choices as f64 {
        return Err(Error::UnusableWorker { accuracy: raw, choices });
    }
    Ok(Accuracy { value: raw, flipped: false })
}

/// A worker's answer to a task; `Skip` keeps the record so skip counts can be rebuilt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Choice {
    Pick(usize),
    Skip,
}

impl Choice {
    pub fn pick(self) -> Option<usize> {
        match self {
            Choice::Pick(c) => Some(c),
            Choice::Skip => None,
        }
    }

    pub fn is_skip(self) -> bool {
        matches!(self, Choice::Skip)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Answer {
    pub worker: WorkerId,
    pub task: TaskId,
    pub choice: Choice,
    pub submit_time: Seconds,
    pub latency: Seconds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskState {
    Open,
    Completed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub id: TaskId,
    pub category: CategoryId,
    /// Required expected accuracy `q_i` in `(0.5, 1)`.
    pub quality_threshold: f64,
    pub start_time: Seconds,
    finish_time: Option<Seconds>,
    pub choice_count: usize,
    pub ground_truth: Option<usize>,
    answers: Vec<Answer>,
    skip_count: u32,
    /// Latest difficulty estimate `d_i`.
    pub difficulty: f64,
    /// Every worker ever assigned to this task, in assignment order.
    assignees: Vec<WorkerId>,
}

impl Task {
    pub fn new(
        id: TaskId,
        category: CategoryId,
        quality_threshold: f64,
        start_time: Seconds,
        choice_count: usize,
    ) -> Result<Self> {
        if !(quality_threshold > 0.5 && quality_threshold < 1.0) {
            return Err(Error::BadAccuracy(quality_threshold));
        }
        if choice_count < 2 {
            return Err(Error::BadChoiceCount(choice_count));
        }
        Ok(Task {
            id,
            category,
            quality_threshold,
            start_time,
            finish_time: None,
            choice_count,
            ground_truth: None,
            answers: Vec::new(),
            skip_count: 0,
            difficulty: crate::profiling::BASE_DIFFICULTY,
            assignees: Vec::new(),
        })
    }

    pub fn with_ground_truth(mut self, truth: usize) -> Self {
        debug_assert!(truth < self.choice_count);
        self.ground_truth = Some(truth);
        self
    }

    pub fn state(&self) -> TaskState {
        if self.finish_time.is_some() {
            TaskState::Completed
        } else {
            TaskState::Open
        }
    }

    pub fn is_open(&self) -> bool {
        self.finish_time.is_none()
    }

    pub fn finish_time(&self) -> Option<Seconds> {
        self.finish_time
    }

    pub fn latency(&self) -> Option<Seconds> {
        self.finish_time.map(|f| f - self.start_time)
    }

    /// Marks the task completed. Completion earlier than the start time is clamped to it.
    pub fn complete(&mut self, at: Seconds) {
        if self.finish_time.is_none() {
            self.finish_time = Some(at.max(self.start_time));
        }
    }

    pub fn answers(&self) -> &[Answer] {
        &self.answers
    }

    pub fn skip_count(&self) -> u32 {
        self.skip_count
    }

    pub fn assignees(&self) -> &[WorkerId] {
        &self.assignees
    }

    pub fn is_assigned_to(&self, worker: WorkerId) -> bool {
        self.assignees.contains(&worker)
    }

    /// Registers an assignment; returns `false` if the worker already had this task.
    pub fn assign(&mut self, worker: WorkerId) -> bool {
        if self.is_assigned_to(worker) {
            return false;
        }
        self.assignees.push(worker);
        true
    }

    /// Workers assigned and not known to have skipped.
    pub fn active_assignees(&self) -> impl Iterator<Item = WorkerId> + '_ {
        self.assignees.iter().copied().filter(move |w| {
            !self
                .answers
                .iter()
                .any(|a| a.worker == *w && a.choice.is_skip())
        })
    }

    /// Appends an answer. Choices outside `[0, R)` are rejected.
    pub fn record_answer(&mut self, answer: Answer) -> Result<()> {
        if let Choice::Pick(c) = answer.choice {
            if c >= self.choice_count {
                return Err(Error::BadChoiceCount(c));
            }
        } else {
            self.skip_count += 1;
        }
        self.answers.push(answer);
        Ok(())
    }

    /// Answers carrying an actual choice (`Ω_i`).
    pub fn received(&self) -> impl Iterator<Item = &Answer> + '_ {
        self.answers.iter().filter(|a| !a.choice.is_skip())
    }
}

/// Per-category state of a subscribed worker.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryProfile {
    /// Current accuracy `α_jl`.
    pub accuracy: Accuracy,
    /// Accuracy from the qualification test (`ᾱ_jl`), the anchor for live updates.
    pub qualified: f64,
    history: Vec<(Seconds, Seconds)>,
    predicted_response: Seconds,
}

impl CategoryProfile {
    pub fn new(accuracy: Accuracy, predicted_response: Seconds) -> Self {
        CategoryProfile {
            accuracy,
            qualified: accuracy.value(),
            history: Vec::new(),
            predicted_response: predicted_response.max(crate::profiling::MIN_RESPONSE),
        }
    }

    pub fn history(&self) -> &[(Seconds, Seconds)] {
        &self.history
    }

    pub fn predicted_response(&self) -> Seconds {
        self.predicted_response
    }

    pub fn set_predicted_response(&mut self, secs: Seconds) {
        self.predicted_response = secs.max(crate::profiling::MIN_RESPONSE);
    }

    /// Appends a `(timestamp, response time)` pair; timestamps must strictly increase.
    pub fn record_response(&mut self, at: Seconds, secs: Seconds) -> bool {
        if let Some(&(last, _)) = self.history.last() {
            if at <= last {
                return false;
            }
        }
        self.history.push((at, secs));
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Worker {
    pub id: WorkerId,
    profiles: Vec<Option<CategoryProfile>>,
    pub online: bool,
}

impl Worker {
    pub fn new(id: WorkerId) -> Self {
        Worker { id, profiles: Vec::new(), online: true }
    }

    pub fn subscribe(&mut self, category: CategoryId, profile: CategoryProfile) {
        let idx = category.index();
        if self.profiles.len() <= idx {
            self.profiles.resize(idx + 1, None);
        }
        self.profiles[idx] = Some(profile);
    }

    pub fn with_category(mut self, category: CategoryId, accuracy: f64, response: Seconds) -> Self {
        let acc = clamp_accuracy(accuracy).expect("accuracy in [0, 1]");
        self.subscribe(category, CategoryProfile::new(acc, response));
        self
    }

    pub fn is_subscribed(&self, category: CategoryId) -> bool {
        self.profile(category).is_some()
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = CategoryId> + '_ {
        self.profiles
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_some())
            .map(|(i, _)| CategoryId(i as u32))
    }

    pub fn profile(&self, category: CategoryId) -> Option<&CategoryProfile> {
        self.profiles.get(category.index()).and_then(Option::as_ref)
    }

    pub fn profile_mut(&mut self, category: CategoryId) -> Option<&mut CategoryProfile> {
        self.profiles.get_mut(category.index()).and_then(Option::as_mut)
    }

    pub fn accuracy(&self, category: CategoryId) -> Option<f64> {
        self.profile(category).map(|p| p.accuracy.value())
    }

    pub fn predicted_response(&self, category: CategoryId) -> Option<Seconds> {
        self.profile(category).map(|p| p.predicted_response)
    }

    /// Mean accuracy over subscribed categories (0 when unsubscribed everywhere).
    pub fn mean_accuracy(&self) -> f64 {
        mean(self.profiles.iter().flatten().map(|p| p.accuracy.value()))
    }

    pub fn mean_response(&self) -> Seconds {
        mean(self.profiles.iter().flatten().map(|p| p.predicted_response))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Task-worker pairs produced by one scheduling decision or round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignment {
    pairs: Vec<(TaskId, WorkerId)>,
    pub round: Option<u32>,
}

impl Assignment {
    pub fn new(round: Option<u32>) -> Self {
        Assignment { pairs: Vec::new(), round }
    }

    /// Adds a pair unless it is already present.
    pub fn insert(&mut self, task: TaskId, worker: WorkerId) -> bool {
        if self.pairs.contains(&(task, worker)) {
            return false;
        }
        self.pairs.push((task, worker));
        true
    }

    pub fn pairs(&self) -> &[(TaskId, WorkerId)] {
        &self.pairs
    }

    pub fn workers_for(&self, task: TaskId) -> impl Iterator<Item = WorkerId> + '_ {
        self.pairs.iter().filter(move |(t, _)| *t == task).map(|(_, w)| *w)
    }

    pub fn tasks_for(&self, worker: WorkerId) -> impl Iterator<Item = TaskId> + '_ {
        self.pairs.iter().filter(move |(_, w)| *w == worker).map(|(t, _)| *t)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_accuracy(0.8).unwrap(), Accuracy { value: 0.8, flipped: false });
        let a = clamp_accuracy(0.3).unwrap();
        assert!((a.value() - 0.7).abs() < 1e-15);
        assert!(a.flipped());
        let half = clamp_accuracy(0.5).unwrap();
        assert_eq!(half.value(), 0.500001);
        assert!(!half.flipped());
        let p = crate::voting::expected_accuracy_majority(&[half.value()]).unwrap();
        assert!(p.is_finite() && p > 0.5);
    }

    #[test]
    fn clamp_rejects_out_of_range() {
        assert!(clamp_accuracy(1.2).is_err());
        assert!(clamp_accuracy(f64::NAN).is_err());
    }

    #[test]
    fn multichoice_clamp() {
        assert!(matches!(
            clamp_accuracy_multichoice(0.3, 3),
            Err(Error::UnusableWorker { .. })
        ));
        assert_eq!(clamp_accuracy_multichoice(0.5, 3).unwrap().value(), 0.5);
        assert!(clamp_accuracy_multichoice(0.3, 2).unwrap().flipped());
    }

    #[test]
    fn flipped_choice_inverts_binary_only() {
        let a = clamp_accuracy(0.2).unwrap();
        assert_eq!(a.effective_choice(0, 2), 1);
        assert_eq!(a.effective_choice(2, 3), 2);
    }

    #[test]
    fn task_lifecycle() {
        let mut t = Task::new(TaskId(0), CategoryId(0), 0.8, 10.0, 2).unwrap();
        assert_eq!(t.state(), TaskState::Open);
        assert!(t.assign(WorkerId(1)));
        assert!(!t.assign(WorkerId(1)));
        t.record_answer(Answer {
            worker: WorkerId(1),
            task: TaskId(0),
            choice: Choice::Skip,
            submit_time: 12.0,
            latency: 2.0,
        })
        .unwrap();
        assert_eq!(t.skip_count(), 1);
        assert_eq!(t.active_assignees().count(), 0);
        assert!(t
            .record_answer(Answer {
                worker: WorkerId(2),
                task: TaskId(0),
                choice: Choice::Pick(2),
                submit_time: 12.0,
                latency: 2.0,
            })
            .is_err());
        t.complete(15.0);
        assert_eq!(t.state(), TaskState::Completed);
        assert_eq!(t.latency(), Some(5.0));
    }

    #[test]
    fn task_rejects_bad_threshold() {
        assert!(Task::new(TaskId(0), CategoryId(0), 0.5, 0.0, 2).is_err());
        assert!(Task::new(TaskId(0), CategoryId(0), 1.0, 0.0, 2).is_err());
        assert!(Task::new(TaskId(0), CategoryId(0), 0.8, 0.0, 1).is_err());
    }

    #[test]
    fn response_history_is_strictly_increasing() {
        let mut p = CategoryProfile::new(clamp_accuracy(0.9).unwrap(), 10.0);
        assert!(p.record_response(1.0, 5.0));
        assert!(!p.record_response(1.0, 6.0));
        assert!(p.record_response(2.0, 6.0));
        assert_eq!(p.history().len(), 2);
    }

    #[test]
    fn assignment_rejects_duplicates() {
        let mut a = Assignment::new(Some(3));
        assert!(a.insert(TaskId(1), WorkerId(2)));
        assert!(!a.insert(TaskId(1), WorkerId(2)));
        assert_eq!(a.workers_for(TaskId(1)).collect::<Vec<_>>(), [WorkerId(2)]);
    }
}
