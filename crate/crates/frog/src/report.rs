//! Simulation results and their CSV forms.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

/// One line of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub policy: String,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub categories: usize,
    pub qlo: f64,
    pub qhi: f64,
    pub max_latency: f64,
    pub avg_accuracy: f64,
    /// Completed tasks per simulated hour.
    pub throughput: f64,
}

/// Per-task outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: u32,
    pub category: u32,
    pub quality: f64,
    pub start: f64,
    pub finish: Option<f64>,
    pub latency: Option<f64>,
    pub answers: usize,
    pub skips: u32,
    pub assigned: usize,
    /// Expected majority accuracy of the answering set when the task completed.
    pub expected_accuracy: Option<f64>,
    pub result: Option<usize>,
    pub ground_truth: Option<usize>,
    pub correct: Option<bool>,
}

/// Accounting of every issued assignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conservation {
    pub issued: u64,
    pub answered: u64,
    pub skipped: u64,
    /// Answers that arrived after their task had already completed.
    pub discarded: u64,
    /// Queued assignments dropped because the task completed first.
    pub cancelled: u64,
    pub in_flight: u64,
    pub queued: u64,
}

impl Conservation {
    pub fn balanced(&self) -> bool {
        self.issued
            == self.answered + self.skipped + self.discarded + self.cancelled + self.in_flight + self.queued
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub metrics: MetricsRow,
    pub completed: usize,
    pub unfinished: usize,
    /// Time of the last completion, or the horizon if tasks were left open.
    pub end_time: f64,
    pub counts: Conservation,
    pub tasks: Vec<TaskRecord>,
    /// Stored accuracies of the answering workers when each task completed.
    pub answer_sets: Vec<Option<Vec<f64>>>,
}

pub fn write_metrics<'a>(rows: impl IntoIterator<Item = &'a MetricsRow>, out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(input: impl Read) -> csv::Result<Vec<MetricsRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn write_trace<'a>(records: impl IntoIterator<Item = &'a TaskRecord>, out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(input: impl Read) -> csv::Result<Vec<TaskRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
