//! Scheduling and quality-control core for fast crowdsourcing.
//!
//! Everything here is `no_std` with `alloc`: the data model, majority-vote
//! quality estimation, worker profiling, task scheduling policies, and the
//! availability model used to decide which offline workers to notify.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod model;
pub mod notification;
pub mod profiling;
pub mod scheduling;
pub mod voting;

pub use error::{Error, Result};
pub use model::{
    clamp_accuracy, clamp_accuracy_multichoice, Accuracy, Answer, Assignment, Category, CategoryId,
    CategoryProfile, Choice, Seconds, Task, TaskId, TaskState, Worker, WorkerId,
};
