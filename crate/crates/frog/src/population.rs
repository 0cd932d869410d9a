//! Synthetic workers and tasks drawn from a table of real worker archetypes.

use std::collections::BTreeMap;
use std::path::Path;

use frog_core::model::{CategoryId, Task, TaskId, Worker, WorkerId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{Arrival, ConfigError, SimConfig};

/// Response times are never shorter than this.
pub const MIN_RESPONSE_DRAW: f64 = 0.5;

const DEFAULT_TABLE: &str = include_str!("../data/archetypes.csv");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeRow {
    pub archetype: u32,
    pub column: usize,
    #[serde(default)]
    pub label: String,
    pub accuracy: f64,
    pub mean_response: f64,
    pub variance: f64,
}

/// Per-category behaviour of one archetype.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Behaviour {
    pub accuracy: f64,
    pub mean_response: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Archetype {
    pub id: u32,
    pub columns: Vec<Behaviour>,
}

/// Archetypes sharing the same number of behaviour columns. Category `l` uses
/// column `l mod columns`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchetypeTable {
    pub archetypes: Vec<Archetype>,
    pub labels: Vec<String>,
}

impl ArchetypeTable {
    pub fn builtin() -> Self {
        Self::from_csv(DEFAULT_TABLE.as_bytes(), "built-in archetypes").expect("built-in table parses")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let file = std::fs::File::open(path)
            .map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::from_csv(file, &path.display().to_string())
    }

    pub fn from_csv(reader: impl std::io::Read, origin: &str) -> Result<Self, ConfigError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut grouped: BTreeMap<u32, BTreeMap<usize, ArchetypeRow>> = BTreeMap::new();
        for (line, row) in rdr.deserialize::<ArchetypeRow>().enumerate() {
            let row = row.map_err(|e| ConfigError::format(origin, format!("row {}: {e}", line + 1)))?;
            if !(row.accuracy > 0.5 && row.accuracy <= 1.0) {
                return Err(ConfigError::format(origin, format!("row {}: accuracy must lie in (0.5, 1]", line + 1)));
            }
            if !(row.mean_response > 0.0 && row.variance >= 0.0) {
                return Err(ConfigError::format(
                    origin,
                    format!("row {}: need positive mean response and non-negative variance", line + 1),
                ));
            }
            let (a, c) = (row.archetype, row.column);
            if grouped.entry(a).or_default().insert(c, row).is_some() {
                return Err(ConfigError::format(origin, format!("archetype {a} repeats column {c}")));
            }
        }
        let width = match grouped.values().next() {
            Some(cols) => cols.len(),
            None => return Err(ConfigError::format(origin, "no archetypes")),
        };
        let mut labels = vec![String::new(); width];
        let mut archetypes = Vec::with_capacity(grouped.len());
        for (id, cols) in grouped {
            if cols.len() != width || cols.keys().copied().ne(0..width) {
                return Err(ConfigError::format(origin, format!("archetype {id} must define columns 0..{width}")));
            }
            let columns = cols
                .into_values()
                .map(|r| {
                    if labels[r.column].is_empty() {
                        labels[r.column].clone_from(&r.label);
                    }
                    Behaviour { accuracy: r.accuracy, mean_response: r.mean_response, variance: r.variance }
                })
                .collect();
            archetypes.push(Archetype { id, columns });
        }
        Ok(ArchetypeTable { archetypes, labels })
    }

    pub fn width(&self) -> usize {
        self.archetypes[0].columns.len()
    }

    pub fn behaviour(&self, archetype: usize, category: usize) -> Behaviour {
        self.archetypes[archetype].columns[category % self.width()]
    }

    /// Average mean response of a category over all archetypes.
    pub fn category_mean(&self, category: usize) -> f64 {
        let col = category % self.width();
        self.archetypes.iter().map(|a| a.columns[col].mean_response).sum::<f64>() / self.archetypes.len() as f64
    }
}

/// Draws from `N(mean, variance)` conditioned on being at least [`MIN_RESPONSE_DRAW`].
pub fn truncated_response(rng: &mut ChaCha8Rng, mean: f64, variance: f64) -> f64 {
    if variance <= 0.0 {
        return mean.max(MIN_RESPONSE_DRAW);
    }
    let normal = Normal::new(mean, variance.sqrt()).expect("finite parameters");
    for _ in 0..1000 {
        let x = normal.sample(rng);
        if x >= MIN_RESPONSE_DRAW {
            return x;
        }
    }
    MIN_RESPONSE_DRAW
}

/// Ground truth behaviour of a simulated worker in one category.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrueProfile {
    pub accuracy: f64,
    /// Personal mean response time `r'`.
    pub mean_response: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    /// What the platform believes; indexed by worker id.
    pub roster: Vec<Worker>,
    /// How workers actually behave, indexed by worker id then category.
    pub truth: Vec<Vec<Option<TrueProfile>>>,
    pub archetype_of: Vec<usize>,
    pub tasks: Vec<Task>,
    /// Generator mean response per category.
    pub category_means: Vec<f64>,
}

/// Workers first, then tasks, from a single generator; the same seed gives the
/// same population.
pub fn generate_population(cfg: &SimConfig, table: &ArchetypeTable, rng: &mut ChaCha8Rng) -> Population {
    let l = cfg.categories;
    let mut roster = Vec::with_capacity(cfg.workers);
    let mut truth = Vec::with_capacity(cfg.workers);
    let mut archetype_of = Vec::with_capacity(cfg.workers);
    for j in 0..cfg.workers {
        let a = rng.random_range(0..table.archetypes.len());
        let mut subscribed: Vec<bool> = (0..l)
            .map(|_| cfg.subscription_fraction >= 1.0 || rng.random_bool(cfg.subscription_fraction))
            .collect();
        if !subscribed.iter().any(|&s| s) {
            subscribed[rng.random_range(0..l)] = true;
        }
        let mut worker = Worker::new(WorkerId(j as u32));
        let mut profiles = vec![None; l];
        for (c, _) in subscribed.iter().enumerate().filter(|(_, s)| **s) {
            let b = table.behaviour(a, c);
            let personal = truncated_response(rng, b.mean_response, b.variance);
            worker = worker.with_category(CategoryId(c as u32), b.accuracy, b.mean_response);
            profiles[c] = Some(TrueProfile { accuracy: b.accuracy, mean_response: personal, variance: b.variance });
        }
        roster.push(worker);
        truth.push(profiles);
        archetype_of.push(a);
    }

    let [lo, hi] = cfg.quality_range;
    let mut clock = 0.0;
    let gaps = match cfg.arrival {
        Arrival::Batch => None,
        Arrival::Poisson { rate } => Some(Exp::new(rate).expect("validated rate")),
    };
    let mut tasks = Vec::with_capacity(cfg.tasks);
    for i in 0..cfg.tasks {
        let category = CategoryId(rng.random_range(0..l) as u32);
        let q = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let truth = rng.random_range(0..cfg.choices);
        if let Some(g) = &gaps {
            clock += g.sample(rng);
        }
        let task = Task::new(TaskId(i as u32), category, q, clock, cfg.choices)
            .expect("validated quality range")
            .with_ground_truth(truth);
        tasks.push(task);
    }
    let category_means = (0..l).map(|c| table.category_mean(c)).collect();
    Population { roster, truth, archetype_of, tasks, category_means }
}
