//! Input and output CSV files other than the simulation reports.
//!
//! Event logs and friend lists come from activity datasets that usually ship
//! without a header, so a header line is accepted but optional. The first line
//! counts as a header when its first field is not a number.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use frog_core::model::{CategoryId, WorkerId};
use frog_core::notification::FriendGraph;
use frog_core::profiling::{Calibration, QualificationRecord};
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;

/// One activity: a worker was online at an epoch timestamp.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Activity {
    pub worker: WorkerId,
    pub at: f64,
}

fn open(path: &Path) -> Result<std::fs::File, ConfigError> {
    std::fs::File::open(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })
}

/// Rows of the file as trimmed string fields, skipping a leading header.
fn records(input: impl Read, origin: &str, width: usize) -> Result<Vec<(usize, Vec<String>)>, ConfigError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ConfigError::format(origin, e.to_string()))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() < width {
            return Err(ConfigError::format(origin, format!("line {line}: expected {width} fields, found {}", rec.len())));
        }
        rows.push((line, rec.iter().take(width).map(str::to_owned).collect()));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(origin: &str, line: usize, name: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse().map_err(|_| ConfigError::format(origin, format!("line {line}: bad {name} {raw:?}")))
}

/// `worker_id,timestamp_epoch_seconds`, one row per activity.
pub fn parse_events(input: impl Read, origin: &str) -> Result<Vec<Activity>, ConfigError> {
    let mut out = Vec::new();
    for (line, f) in records(input, origin, 2)? {
        let worker = WorkerId(field(origin, line, "worker_id", &f[0])?);
        let at: f64 = field(origin, line, "timestamp", &f[1])?;
        if !at.is_finite() {
            return Err(ConfigError::format(origin, format!("line {line}: timestamp must be finite")));
        }
        out.push(Activity { worker, at });
    }
    if out.is_empty() {
        return Err(ConfigError::format(origin, "event log is empty"));
    }
    Ok(out)
}

pub fn read_events(path: &Path) -> Result<Vec<Activity>, ConfigError> {
    parse_events(open(path)?, &path.display().to_string())
}

/// `worker_id_a,worker_id_b`, undirected.
pub fn parse_friends(input: impl Read, origin: &str) -> Result<FriendGraph, ConfigError> {
    let mut graph = FriendGraph::new();
    for (line, f) in records(input, origin, 2)? {
        let a = WorkerId(field(origin, line, "worker_id_a", &f[0])?);
        let b = WorkerId(field(origin, line, "worker_id_b", &f[1])?);
        if a != b {
            graph.add_edge(a, b);
        }
    }
    Ok(graph)
}

pub fn read_friends(path: &Path) -> Result<FriendGraph, ConfigError> {
    parse_friends(open(path)?, &path.display().to_string())
}

/// `worker_id,category,task_index,answer,ground_truth`; rows of one worker and
/// category form one record, ordered by task index.
pub fn parse_qualification(input: impl Read, origin: &str) -> Result<Vec<QualificationRecord>, ConfigError> {
    let mut grouped: BTreeMap<(u32, u32), BTreeMap<usize, (usize, usize)>> = BTreeMap::new();
    for (line, f) in records(input, origin, 5)? {
        let worker = field(origin, line, "worker_id", &f[0])?;
        let category = field(origin, line, "category", &f[1])?;
        let task: usize = field(origin, line, "task_index", &f[2])?;
        let answer = field(origin, line, "answer", &f[3])?;
        let truth = field(origin, line, "ground_truth", &f[4])?;
        if grouped.entry((worker, category)).or_default().insert(task, (answer, truth)).is_some() {
            return Err(ConfigError::format(
                origin,
                format!("line {line}: worker {worker} answered task {task} of category {category} twice"),
            ));
        }
    }
    if grouped.is_empty() {
        return Err(ConfigError::format(origin, "no qualification answers"));
    }
    Ok(grouped
        .into_iter()
        .map(|((w, c), tasks)| {
            let (answers, truth) = tasks.into_values().unzip();
            QualificationRecord::new(WorkerId(w), CategoryId(c), answers, truth)
        })
        .collect())
}

pub fn read_qualification(path: &Path) -> Result<Vec<QualificationRecord>, ConfigError> {
    parse_qualification(open(path)?, &path.display().to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub worker: u32,
    pub category: u32,
    pub raw_accuracy: f64,
    pub accuracy: f64,
    pub flipped: bool,
}

pub fn calibration_rows(cal: &Calibration) -> Vec<CalibrationRow> {
    cal.workers
        .iter()
        .map(|w| CalibrationRow {
            worker: w.worker.0,
            category: w.category.0,
            raw_accuracy: w.raw,
            accuracy: w.accuracy.value(),
            flipped: w.accuracy.flipped(),
        })
        .collect()
}

pub fn write_rows<T: Serialize>(rows: &[T], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_with_and_without_header() {
        let a = parse_events("worker_id,timestamp_epoch_seconds\n1,100\n2, 250.5\n".as_bytes(), "t").unwrap();
        let b = parse_events("1,100\n2,250.5\n".as_bytes(), "t").unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1], Activity { worker: WorkerId(2), at: 250.5 });
    }

    #[test]
    fn malformed_events_name_the_line() {
        let err = parse_events("1,100\n2,soon\n".as_bytes(), "log.csv").unwrap_err().to_string();
        assert!(err.contains("log.csv") && err.contains("line 2"), "{err}");
        assert!(parse_events("".as_bytes(), "t").is_err());
        assert!(parse_events("1\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn friends_are_symmetric() {
        let g = parse_friends("a,b\n1,2\n2,3\n3,3\n".as_bytes(), "t").unwrap();
        assert!(g.is_symmetric());
        assert_eq!(g.friends(WorkerId(2)).collect::<Vec<_>>(), vec![WorkerId(1), WorkerId(3)]);
        assert_eq!(g.friends(WorkerId(3)).count(), 1);
    }

    #[test]
    fn qualification_rows_group_by_worker_and_category() {
        let csv = "worker_id,category,task_index,answer,ground_truth\n\
                   1,0,1,1,0\n1,0,0,1,1\n2,0,0,0,1\n1,3,0,1,1\n";
        let recs = parse_qualification(csv.as_bytes(), "t").unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!((recs[0].worker, recs[0].category), (WorkerId(1), CategoryId(0)));
        assert_eq!(recs[0].answers, vec![1, 1]);
        assert_eq!(recs[0].ground_truth, vec![1, 0]);
        let dup = "1,0,0,1,1\n1,0,0,0,1\n";
        assert!(parse_qualification(dup.as_bytes(), "t").is_err());
    }
}
