//! Configuration, execution and reporting for the `fedsim` binary.

pub mod config;
pub mod run;
pub mod verify;

pub use config::{AlgorithmConfig, LogisticConfig, ProblemConfig, RunConfig, SchemeConfig, StepsizeChoice};
pub use run::{median_to_target, run, Prepared, RoundRow, RunMetrics, CSV_HEADER};
pub use verify::{run_suite, Report, Suite};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::localsolve::LocalSolver;
use run::error_exit_code;

#[derive(Debug, Parser)]
#[command(name = "fedsim", about = "Federated training simulator with partial participation and compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a configuration; writes seed_<s>.csv and seed_<s>.json per seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        rounds: Option<u64>,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// certified, exact, or steps:<K>
        #[arg(long)]
        local_solver: Option<String>,
        #[arg(long)]
        stop_ratio: Option<f64>,
    },
    /// Run a property suite.
    Verify {
        suite: SuiteArg,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Median budget to reach a distance target, per configuration.
    Compare {
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        /// Relative target on ‖x − x⋆‖².
        #[arg(long)]
        target: f64,
        #[arg(long, value_enum, default_value = "uplink-floats")]
        metric: Metric,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Ab,
    Compressor,
    Gradients,
    Contraction,
    #[value(name = "fixed_point", alias = "fixed-point")]
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    UplinkFloats,
    Rounds,
}

fn parse_solver(s: &str) -> Result<LocalSolver> {
    match s {
        "certified" => Ok(LocalSolver::Certified),
        "exact" => Ok(LocalSolver::Exact),
        _ => s
            .strip_prefix("steps:")
            .and_then(|k| k.parse().ok())
            .map(LocalSolver::FixedSteps)
            .ok_or_else(|| Error::Config(format!("unknown local solver {s:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub config: String,
    pub median: Option<f64>,
    pub censored: usize,
    pub seeds: usize,
}

/// Runs each configuration in memory and reports the median budget to
/// reach `target`, sorted best first.
pub fn compare(configs: &[(String, RunConfig)], target: f64, metric: Metric) -> Result<Vec<CompareRow>> {
    if configs.len() < 2 {
        return Err(Error::Config("compare needs at least two configurations".into()));
    }
    let first = &configs[0].1;
    for (name, c) in configs {
        if c.problem != first.problem || c.seeds != first.seeds {
            return Err(Error::Config(format!("{name}: problem and seeds must match the first configuration")));
        }
    }
    let mut rows = Vec::new();
    for (name, c) in configs {
        let prep = Prepared::new(c)?;
        let runs = c
            .seeds
            .iter()
            .map(|&s| prep.run_seed(s))
            .collect::<Result<Vec<_>>>()?;
        let (median, censored) = median_to_target(&runs, target, metric == Metric::UplinkFloats);
        rows.push(CompareRow {
            config: name.clone(),
            median,
            censored,
            seeds: runs.len(),
        });
    }
    rows.sort_by(|a, b| match (a.median, b.median) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(rows)
}

fn emit_json(value: &impl Serialize, path: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run {
            config,
            rounds,
            seeds,
            output,
            local_solver,
            stop_ratio,
        } => {
            let mut c = RunConfig::load(&config)?;
            if let Some(r) = rounds {
                c.rounds = r;
            }
            if let Some(s) = seeds {
                c.seeds = s;
            }
            if let Some(o) = output {
                c.output = o;
            }
            if let Some(s) = local_solver {
                c.local_solver = parse_solver(&s)?;
            }
            if stop_ratio.is_some() {
                c.stop_ratio = stop_ratio;
            }
            for m in run(&c)? {
                let last = m.rows.last().expect("round 0 row");
                println!(
                    "seed {}: {} rounds, dist_sq {:.3e} -> {:.3e}, uplink {} floats",
                    m.meta.seed, m.meta.rounds_run, m.rows[0].dist_sq, last.dist_sq, last.uplink_floats
                );
            }
            Ok(0)
        }
        Command::Verify { suite, json } => {
            let suite = match suite {
                SuiteArg::Ab => Suite::Ab,
                SuiteArg::Compressor => Suite::Compressor,
                SuiteArg::Gradients => Suite::Gradients,
                SuiteArg::Contraction => Suite::Contraction,
                SuiteArg::FixedPoint => Suite::FixedPoint,
            };
            let report = run_suite(suite)?;
            print!("{}", report.human());
            emit_json(&report, json.as_ref())?;
            Ok(if report.pass { 0 } else { 1 })
        }
        Command::Compare {
            configs,
            target,
            metric,
            json,
        } => {
            if !(target > 0.0) {
                return Err(Error::Config("target must be positive".into()));
            }
            let loaded = configs
                .iter()
                .map(|p| Ok((p.display().to_string(), RunConfig::load(p)?)))
                .collect::<Result<Vec<_>>>()?;
            let rows = compare(&loaded, target, metric)?;
            for (i, r) in rows.iter().enumerate() {
                let med = r.median.map_or("censored".to_string(), |m| format!("{m}"));
                println!("{}. {}: median {med} ({} of {} seeds censored)", i + 1, r.config, r.censored, r.seeds);
            }
            emit_json(&rows, json.as_ref())?;
            Ok(0)
        }
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            error_exit_code(&e)
        }
    }
}
