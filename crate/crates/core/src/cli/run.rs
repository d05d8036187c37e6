//! Executing a configuration and writing its per-seed outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::algo::{reference_optimum, AlgorithmState, Driver, Optimum};
use crate::cli::config::{BuiltProblem, ProblemConfig, RunConfig};
use crate::error::{Error, Result};
use crate::objective::Problem;
use crate::rng::Streams;
use crate::vecops::dist_sq;

pub const CSV_HEADER: &str = "round,uplink_floats,downlink_floats,dist_sq,fgap,lyapunov";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundRow {
    pub round: u64,
    pub uplink_floats: u64,
    pub downlink_floats: u64,
    pub dist_sq: f64,
    pub fgap: f64,
    pub lyapunov: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constants {
    pub dim: usize,
    pub clients: usize,
    pub l_max: f64,
    pub l_bar: f64,
    pub l_min: f64,
    pub mu: f64,
    pub lambda: Option<f64>,
    pub gamma: f64,
    pub tau: Vec<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config_hash: String,
    pub data_source: String,
    pub kappa_interpretation: &'static str,
    pub initial_point: &'static str,
    pub rescale_factors: Option<Vec<f64>>,
    pub constants: Constants,
    pub rounds_run: u64,
    pub certificate_failures: u64,
    pub local_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub rows: Vec<RoundRow>,
    pub meta: RunMetadata,
}

impl RunMetrics {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{:e},{:e},{:e}",
                r.round, r.uplink_floats, r.downlink_floats, r.dist_sq, r.fgap, r.lyapunov
            )
            .expect("write to string");
        }
        s
    }

    /// First row with `dist_sq ≤ ratio · dist_sq⁰`.
    pub fn first_reaching(&self, ratio: f64) -> Option<&RoundRow> {
        let d0 = self.rows.first()?.dist_sq;
        self.rows.iter().find(|r| r.dist_sq <= ratio * d0)
    }
}

/// Everything shared by the seeds of one configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub built: BuiltProblem,
    pub driver: Driver,
    pub optimum: Optimum,
}

impl Prepared {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let built = config.build_problem()?;
        let driver = config.build_driver(&built.problem)?;
        let optimum = reference_optimum(&built.problem, config.optimum_tol)?;
        Ok(Self {
            config: config.clone(),
            built,
            driver,
            optimum,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.built.problem
    }

    pub fn run_seed(&self, seed: u64) -> Result<RunMetrics> {
        let p = self.problem();
        let lyap = self.driver.lyapunov(p)?;
        let streams = Streams::new(seed);
        let mut state = AlgorithmState::zeros(p);
        let row = |t: u64, up: u64, down: u64, s: &AlgorithmState| -> Result<RoundRow> {
            Ok(RoundRow {
                round: t,
                uplink_floats: up,
                downlink_floats: down,
                dist_sq: dist_sq(&s.x, &self.optimum.x),
                fgap: p.value(&s.x)? - self.optimum.f,
                lyapunov: lyap.value(s, &self.optimum),
            })
        };
        let mut rows = vec![row(0, 0, 0, &state)?];
        let target = self.config.stop_ratio.map(|r| r * rows[0].dist_sq);
        let (mut up, mut down, mut failures, mut steps) = (0u64, 0u64, 0u64, 0u64);
        for t in 1..=self.config.rounds {
            if target.is_some_and(|tg| rows.last().expect("nonempty").dist_sq <= tg) {
                break;
            }
            let st = self.driver.round(&mut state, p, &streams)?;
            up += st.uplink_floats as u64;
            down += st.downlink_floats as u64;
            failures += st.certificate_failures as u64;
            steps += st.local_steps as u64;
            rows.push(row(t, up, down, &state)?);
        }
        let kappa_interpretation = match self.config.problem {
            ProblemConfig::Synthetic(_) => "kappa = L_max / mu of the generated quadratics",
            _ => "kappa = L_max / mu with mu = lambda; lambda = L_data,max / (kappa - 1)",
        };
        let meta = RunMetadata {
            seed,
            config_hash: self.config.hash(),
            data_source: self.built.source.clone(),
            kappa_interpretation,
            initial_point: "x0 = 0, u0_m = 0 for all m",
            rescale_factors: self.built.rescale_factors.clone(),
            constants: Constants {
                dim: p.dim(),
                clients: p.num_clients(),
                l_max: p.l_max(),
                l_bar: p.l_bar(),
                l_min: p.l_min(),
                mu: p.mu(),
                lambda: p.lambda(),
                gamma: self.driver.steps.gamma,
                tau: self.driver.steps.tau.clone(),
                rho: lyap.rate(),
            },
            rounds_run: rows.len() as u64 - 1,
            certificate_failures: failures,
            local_steps: steps,
        };
        Ok(RunMetrics { rows, meta })
    }
}

pub fn csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn meta_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.json"))
}

pub fn write_outputs(dir: &Path, metrics: &RunMetrics) -> Result<()> {
    fs::create_dir_all(dir)?;
    let seed = metrics.meta.seed;
    fs::write(csv_path(dir, seed), metrics.to_csv())?;
    let meta = serde_json::to_string_pretty(&metrics.meta)?;
    fs::write(meta_path(dir, seed), meta + "\n")?;
    Ok(())
}

/// Runs every seed and writes `seed_<s>.csv` / `seed_<s>.json` into the
/// configured output directory.
pub fn run(config: &RunConfig) -> Result<Vec<RunMetrics>> {
    let prep = Prepared::new(config)?;
    let mut out = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let m = prep.run_seed(seed)?;
        write_outputs(&config.output, &m)?;
        out.push(m);
    }
    fs::write(config.output.join("config.json"), config.to_json() + "\n")?;
    Ok(out)
}

/// Median over seeds of the rounds or uplink floats needed to hit
/// `ratio`. Seeds that never reach it count as +∞, so the median is `None`
/// once half or more are censored. Also returns the censored count.
pub fn median_to_target(runs: &[RunMetrics], ratio: f64, by_floats: bool) -> (Option<f64>, usize) {
    let mut hits: Vec<f64> = runs
        .iter()
        .map(|r| match r.first_reaching(ratio) {
            Some(row) if by_floats => row.uplink_floats as f64,
            Some(row) => row.round as f64,
            None => f64::INFINITY,
        })
        .collect();
    let censored = hits.iter().filter(|h| h.is_infinite()).count();
    if hits.is_empty() {
        return (None, 0);
    }
    hits.sort_by(f64::total_cmp);
    let n = hits.len();
    let med = if n % 2 == 1 {
        hits[n / 2]
    } else {
        0.5 * (hits[n / 2 - 1] + hits[n / 2])
    };
    (med.is_finite().then_some(med), censored)
}

pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Stepsize(_) | Error::InvalidArgument(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(rounds: u64) -> RunConfig {
        RunConfig::from_json(&format!(
            r#"{{
                "problem": {{"kind": "synthetic", "clients": 4, "dim": 5, "kappa": 20.0,
                            "heterogeneity": 4.0, "seed": 2}},
                "algorithm": {{"kind": "cc", "cohort": 2, "compressor": {{"rand_k": {{"k": 2}}}}}},
                "stepsize": "compressed",
                "rounds": {rounds},
                "seeds": [3]
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn zero_rounds_gives_initial_row() {
        let p = Prepared::new(&cfg(0)).unwrap();
        let m = p.run_seed(3).unwrap();
        assert_eq!(m.rows.len(), 1);
        let r = m.rows[0];
        assert_eq!((r.round, r.uplink_floats, r.downlink_floats), (0, 0, 0));
        assert!((r.dist_sq - crate::vecops::norm_sq(&p.optimum.x)).abs() < 1e-15);
        let lyap = p.driver.lyapunov(p.problem()).unwrap();
        let s0 = AlgorithmState::zeros(p.problem());
        assert_eq!(r.lyapunov, lyap.value(&s0, &p.optimum));
    }

    #[test]
    fn counters_and_csv() {
        let p = Prepared::new(&cfg(3)).unwrap();
        let m = p.run_seed(3).unwrap();
        let up: Vec<u64> = m.rows.iter().map(|r| r.uplink_floats).collect();
        let down: Vec<u64> = m.rows.iter().map(|r| r.downlink_floats).collect();
        assert_eq!(up, vec![0, 4, 8, 12]);
        assert_eq!(down, vec![0, 10, 20, 30]);
        let csv = m.to_csv();
        assert!(csv.starts_with("round,uplink_floats,downlink_floats,dist_sq,fgap,lyapunov\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn stop_ratio_ends_early() {
        let mut c = cfg(100_000);
        c.stop_ratio = Some(1e-2);
        let m = Prepared::new(&c).unwrap().run_seed(3).unwrap();
        let last = m.rows.last().unwrap();
        assert!(last.dist_sq <= 1e-2 * m.rows[0].dist_sq);
        assert!(m.rows[m.rows.len() - 2].dist_sq > 1e-2 * m.rows[0].dist_sq);
        assert_eq!(m.first_reaching(1e-2).unwrap().round, last.round);
    }

    #[test]
    fn medians_with_censoring() {
        let p = Prepared::new(&cfg(50)).unwrap();
        let runs: Vec<_> = [1, 2, 3].iter().map(|&s| p.run_seed(s).unwrap()).collect();
        let (med, cens) = median_to_target(&runs, 1e-300, false);
        assert_eq!((med, cens), (None, 3));
        let (med, cens) = median_to_target(&runs, 1.0, false);
        assert_eq!((med, cens), (Some(0.0), 0));
    }
}
