use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use frog::config::{config_from_str, SimConfig, OUTPUT_ENV};
use frog::eval::{run_notification_eval, EvalOptions, Method};
use frog::formats::{calibration_rows, read_events, read_friends, read_qualification, write_rows};
use frog::population::ArchetypeTable;
use frog::report::{write_metrics, write_trace};
use frog::sweep::{sweep, Param};
use frog::{parse_config, Policy};
use frog_core::profiling::calibrate_cohort;

#[derive(Parser)]
#[command(name = "frog", version, about = "Crowdsourcing scheduler simulator and worker-notification evaluator")]
struct Cli {
    /// Overrides the seed from the config file and FROG_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation; writes metrics.csv and trace.csv.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vary one parameter over several policies and seeds; writes sweep.csv.
    Sweep {
        /// One of m, n, L, q-range.
        #[arg(long)]
        param: Param,
        /// Comma-separated values; quality ranges are written lo:hi.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "rbs,bbs,random,fgreedy,icrowd")]
        policies: Vec<Policy>,
        /// Number of consecutive seeds, starting from the configured seed.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score availability predictors on an activity log; writes notify_eval.csv.
    NotifyEval {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        friends: PathBuf,
        /// Comma-separated shares of the population to name per timestamp.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.06,0.07,0.08,0.09,0.1")]
        fraction: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "skde,kde,nwp,random")]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 0.75)]
        train_fraction: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate worker accuracies from qualification answers; writes calibration.csv.
    Calibrate {
        #[arg(long)]
        qual: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<SimConfig> {
    let mut cfg = match path {
        Some(p) => parse_config(p)?,
        None => {
            let mut c = config_from_str("{}", "defaults")?;
            c.apply_env(|k| std::env::var(k).ok())?;
            c
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(flag: Option<PathBuf>, configured: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or(configured)
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    log::info!("writing {}", path.display());
    Ok(BufWriter::new(f))
}

fn table_for(cfg: &SimConfig) -> Result<ArchetypeTable> {
    Ok(match &cfg.archetypes {
        Some(p) => ArchetypeTable::load(p)?,
        None => ArchetypeTable::builtin(),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let report = frog::run(&cfg)?;
            let dir = out_dir(out, cfg.output.clone())?;
            write_metrics([&report.metrics], create(&dir, "metrics.csv")?)?;
            write_trace(&report.tasks, create(&dir, "trace.csv")?)?;
            if report.unfinished > 0 {
                log::warn!("{} tasks were still open at the horizon", report.unfinished);
            }
        }
        Command::Sweep { param, values, config, policies, seeds, threads, out } => {
            let base = load_config(config.as_deref(), cli.seed)?;
            let values = values.iter().map(|v| param.parse_value(v)).collect::<Result<Vec<_>, _>>()?;
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let seed_list: Vec<u64> = (0..seeds).map(|i| base.seed.wrapping_add(i)).collect();
            let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let rows = sweep(param, &values, &base, &policies, &seed_list, &table_for(&base)?, threads)?;
            let dir = out_dir(out, base.output.clone())?;
            write_metrics(&rows, create(&dir, "sweep.csv")?)?;
        }
        Command::NotifyEval { events, friends, fraction, methods, train_fraction, out } => {
            let log = read_events(&events)?;
            let graph = read_friends(&friends)?;
            let opts = EvalOptions {
                fractions: fraction,
                methods,
                train_fraction,
                seed: cli.seed.unwrap_or(0),
                ..EvalOptions::default()
            };
            let rows = run_notification_eval(&log, &graph, &opts)?;
            write_rows(&rows, create(&out_dir(out, None)?, "notify_eval.csv")?)?;
        }
        Command::Calibrate { qual, out } => {
            let records = read_qualification(&qual)?;
            let cal = calibrate_cohort(&records).map_err(|e| anyhow::anyhow!("{}: {e}", qual.display()))?;
            if !cal.converged {
                log::warn!("calibration stopped after {} passes without settling", cal.iterations);
            }
            write_rows(&calibration_rows(&cal), create(&out_dir(out, None)?, "calibration.csv")?)?;
        }
    }
    Ok(())
}
