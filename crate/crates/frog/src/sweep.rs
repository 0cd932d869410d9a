//! One-parameter sweeps over a base configuration.

use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::config::{ConfigError, Policy, SimConfig};
use crate::population::ArchetypeTable;
use crate::report::MetricsRow;
use crate::sim::run_with_table;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Param {
    Tasks,
    Workers,
    Categories,
    QualityRange,
}

impl FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "m" => Ok(Param::Tasks),
            "n" => Ok(Param::Workers),
            "L" | "l" => Ok(Param::Categories),
            "q" | "q-range" => Ok(Param::QualityRange),
            other => Err(format!("unknown sweep parameter {other:?}; expected one of m, n, L, q-range")),
        }
    }
}

/// A value for [`Param`]: an integer, or `lo:hi` for the quality range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Count(usize),
    Range(f64, f64),
}

impl Param {
    pub fn parse_value(self, raw: &str) -> Result<Value, ConfigError> {
        let raw = raw.trim();
        let bad = || ConfigError::invalid("values", format!("cannot read {raw:?} as a value of {self:?}"));
        match self {
            Param::QualityRange => {
                let (lo, hi) = raw.split_once(':').ok_or_else(bad)?;
                Ok(Value::Range(lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
            }
            _ => raw.parse().map(Value::Count).map_err(|_| bad()),
        }
    }

    pub fn apply(self, base: &SimConfig, value: Value) -> Result<SimConfig, ConfigError> {
        let mut cfg = base.clone();
        match (self, value) {
            (Param::Tasks, Value::Count(v)) => cfg.tasks = v,
            (Param::Workers, Value::Count(v)) => cfg.workers = v,
            (Param::Categories, Value::Count(v)) => cfg.categories = v,
            (Param::QualityRange, Value::Range(lo, hi)) => cfg.quality_range = [lo, hi],
            _ => return Err(ConfigError::invalid("values", format!("{value:?} does not fit parameter {self:?}"))),
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs every `(value, policy, seed)` combination. Rows come back in that
/// nesting order whatever the thread count.
pub fn sweep(
    param: Param,
    values: &[Value],
    base: &SimConfig,
    policies: &[Policy],
    seeds: &[u64],
    table: &ArchetypeTable,
    threads: usize,
) -> Result<Vec<MetricsRow>, ConfigError> {
    let mut jobs = Vec::with_capacity(values.len() * policies.len() * seeds.len());
    for &v in values {
        let cfg = param.apply(base, v)?;
        for &policy in policies {
            for &seed in seeds {
                jobs.push(SimConfig { policy, seed, ..cfg.clone() });
            }
        }
    }
    let results: Mutex<Vec<Option<MetricsRow>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..threads.max(1).min(jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = jobs.get(i) else { break };
                let row = run_with_table(cfg, table).metrics;
                results.lock().expect("no worker panicked")[i] = Some(row);
            });
        }
    });
    Ok(results.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every job ran")).collect())
}
