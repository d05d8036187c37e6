//! Run configuration: one JSON document, validated before any compute.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algo::{Driver, Method, StepsizeConfig};
use crate::compress::{Compressor, CompressorKind};
use crate::dataset::{
    parse_libsvm, partition_clients, synth_onehot_binary, synth_problem, Sample, SynthSpec, ONEHOT_DIM,
};
use crate::error::{Error, Result};
use crate::localsolve::LocalSolver;
use crate::objective::{rescale_smoothness, Problem};
use crate::sampling::{importance_probs_exact, importance_probs_fixed_point, SamplingScheme};

/// Fixed-point tolerance used when the multisampling probabilities come
/// from the self-consistent equations.
pub const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub algorithm: AlgorithmConfig,
    pub stepsize: StepsizeChoice,
    pub rounds: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub local_solver: LocalSolver,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Stop a seed once `‖x − x⋆‖² ≤ stop_ratio · ‖x⁰ − x⋆‖²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_ratio: Option<f64>,
    #[serde(default = "default_optimum_tol")]
    pub optimum_tol: f64,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_optimum_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    /// Logistic regression on a LibSVM file.
    Libsvm {
        path: PathBuf,
        #[serde(flatten)]
        logistic: LogisticConfig,
    },
    /// Logistic regression on generated one-hot binary data.
    Onehot {
        samples: usize,
        data_seed: u64,
        #[serde(flatten)]
        logistic: LogisticConfig,
    },
    /// Quadratic clients.
    Synthetic(SynthSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub clients: usize,
    pub per_client: usize,
    /// `L_max / μ`.
    pub kappa: f64,
    /// Rescale data smoothness to span `[lo, hi]` before fixing κ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescale: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    Cc {
        cohort: usize,
        compressor: CompressorKind,
    },
    Ab {
        scheme: SchemeConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemeConfig {
    Uniform {
        cohort: usize,
    },
    /// Probabilities are derived from the stepsize rule unless given.
    Multisampling {
        cohort: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probs: Option<Vec<f64>>,
    },
    Independent {
        probs: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsizeChoice {
    /// Compressed driver, single `τ`.
    Compressed,
    /// Multisampling, `C = 1`, self-consistent probabilities.
    MultisamplingFixedPoint,
    /// Multisampling, `C = 1`, `p_m ∝ √L_m`.
    MultisamplingSqrtL,
    Independent,
    Uniform,
    Manual { gamma: f64, tau: Vec<f64> },
}

/// A built problem with the provenance recorded in the run metadata.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub problem: Problem,
    pub source: String,
    pub rescale_factors: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(canon.as_bytes()))
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed required".into());
        }
        if !(self.optimum_tol > 0.0) {
            return bad("optimum_tol must be positive".into());
        }
        if let Some(r) = self.stop_ratio {
            if !(r > 0.0) {
                return bad("stop_ratio must be positive".into());
            }
        }
        match &self.problem {
            ProblemConfig::Libsvm { logistic, .. } | ProblemConfig::Onehot { logistic, .. } => {
                if logistic.clients == 0 || logistic.per_client == 0 {
                    return bad("clients and per_client must be positive".into());
                }
                if !(logistic.kappa > 1.0) {
                    return bad("kappa must exceed 1".into());
                }
                if let Some([lo, hi]) = logistic.rescale {
                    if !(lo > 0.0 && hi >= lo) {
                        return bad("rescale needs 0 < lo <= hi".into());
                    }
                }
            }
            ProblemConfig::Synthetic(s) => {
                if s.clients == 0 || s.dim == 0 {
                    return bad("synthetic clients and dim must be positive".into());
                }
            }
        }
        use AlgorithmConfig as A;
        use SchemeConfig as S;
        use StepsizeChoice as T;
        match (&self.algorithm, &self.stepsize) {
            (A::Cc { cohort, .. }, T::Compressed | T::Manual { .. }) => {
                if *cohort == 0 {
                    return bad("cohort must be positive".into());
                }
            }
            (A::Cc { .. }, s) => return bad(format!("stepsize {s:?} does not apply to cc")),
            (A::Ab { scheme }, step) => match (scheme, step) {
                (S::Uniform { cohort }, T::Uniform | T::Manual { .. }) => {
                    if *cohort == 0 {
                        return bad("cohort must be positive".into());
                    }
                }
                (S::Multisampling { cohort, probs }, T::MultisamplingFixedPoint | T::MultisamplingSqrtL) => {
                    if *cohort != 1 {
                        return bad("importance stepsizes need cohort 1".into());
                    }
                    if probs.is_some() {
                        return bad("importance stepsizes choose the probabilities; drop probs".into());
                    }
                }
                (S::Multisampling { probs, .. }, T::Manual { .. }) => {
                    if probs.is_none() {
                        return bad("manual stepsizes with multisampling need probs".into());
                    }
                }
                (S::Independent { .. }, T::Independent | T::Manual { .. }) => {}
                (s, t) => return bad(format!("stepsize {t:?} does not apply to scheme {s:?}")),
            },
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<BuiltProblem> {
        match &self.problem {
            ProblemConfig::Synthetic(spec) => Ok(BuiltProblem {
                problem: Problem::quadratic(&synth_problem(spec)?)?,
                source: format!("synthetic quadratic (seed {})", spec.seed),
                rescale_factors: None,
            }),
            ProblemConfig::Libsvm { path, logistic } => {
                let file = std::fs::File::open(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let parsed = parse_libsvm(std::io::BufReader::new(file))?;
                let source = format!("libsvm {}", path.display());
                build_logistic(&parsed.samples, parsed.dim, logistic, source)
            }
            ProblemConfig::Onehot {
                samples,
                data_seed,
                logistic,
            } => {
                let s = synth_onehot_binary(*samples, *data_seed);
                let source = format!("one-hot surrogate ({samples} samples, seed {data_seed})");
                build_logistic(&s, ONEHOT_DIM, logistic, source)
            }
        }
    }

    pub fn build_driver(&self, problem: &Problem) -> Result<Driver> {
        let m = problem.num_clients();
        let manual = |gamma: f64, tau: &[f64]| -> Result<StepsizeConfig> {
            let tau = match tau.len() {
                1 => vec![tau[0]; m],
                n if n == m => tau.to_vec(),
                n => return Err(Error::Config(format!("manual tau needs 1 or {m} entries, got {n}"))),
            };
            StepsizeConfig::manual(gamma, tau)
        };
        let method = match &self.algorithm {
            AlgorithmConfig::Cc { cohort, compressor } => Method::Compressed {
                compressor: Compressor::new(*compressor, problem.dim())?,
                cohort: *cohort,
            },
            AlgorithmConfig::Ab { scheme } => Method::Sampling {
                scheme: match scheme {
                    SchemeConfig::Uniform { cohort } => SamplingScheme::uniform_nice(m, *cohort)?,
                    SchemeConfig::Independent { probs } => SamplingScheme::independent(probs.clone())?,
                    SchemeConfig::Multisampling { cohort, probs } => {
                        let p = match (probs, &self.stepsize) {
                            (Some(p), _) => p.clone(),
                            (None, StepsizeChoice::MultisamplingSqrtL) => importance_probs_exact(problem)?.0,
                            (None, _) => {
                                importance_probs_fixed_point(problem, FIXED_POINT_TOL, FIXED_POINT_MAX_ITER)?.p
                            }
                        };
                        SamplingScheme::multisampling(p, *cohort)?
                    }
                },
            },
        };
        match &self.stepsize {
            StepsizeChoice::Manual { gamma, tau } => {
                Driver::with_steps(problem, method, manual(*gamma, tau)?, self.local_solver)
            }
            _ => Driver::with_default_steps(problem, method, self.local_solver),
        }
    }
}

fn build_logistic(samples: &[Sample], dim: usize, cfg: &LogisticConfig, source: String) -> Result<BuiltProblem> {
    let mut data = partition_clients(samples, dim, cfg.clients, cfg.per_client)?;
    let rescale_factors = match cfg.rescale {
        Some([lo, hi]) => Some(rescale_smoothness(&mut data, lo, hi)?),
        None => None,
    };
    Ok(BuiltProblem {
        problem: Problem::logistic(&data, cfg.kappa)?,
        source,
        rescale_factors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig::from_json(
            r#"{
                "problem": {"kind": "synthetic", "clients": 4, "dim": 3, "kappa": 10.0,
                            "heterogeneity": 2.0, "seed": 1},
                "algorithm": {"kind": "cc", "cohort": 2, "compressor": {"rand_k": {"k": 1}}},
                "stepsize": "compressed",
                "rounds": 5,
                "seeds": [0]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_and_hash() {
        let c = base();
        c.validate().unwrap();
        let again = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        let mut other = c.clone();
        other.rounds = 6;
        assert_ne!(c.hash(), other.hash());
        assert_eq!(c.local_solver, LocalSolver::Certified);
    }

    #[test]
    fn inconsistent_configs_rejected() {
        let mut c = base();
        c.stepsize = StepsizeChoice::Uniform;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.algorithm = AlgorithmConfig::Ab {
            scheme: SchemeConfig::Multisampling {
                cohort: 1,
                probs: Some(vec![0.25; 4]),
            },
        };
        c.stepsize = StepsizeChoice::MultisamplingSqrtL;
        assert!(c.validate().is_err());
        c.seeds.clear();
        assert!(c.validate().is_err());
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn drivers_build() {
        let c = base();
        let p = c.build_problem().unwrap().problem;
        c.build_driver(&p).unwrap();
        let mut c = base();
        c.algorithm = AlgorithmConfig::Ab {
            scheme: SchemeConfig::Multisampling { cohort: 1, probs: None },
        };
        for s in [StepsizeChoice::MultisamplingFixedPoint, StepsizeChoice::MultisamplingSqrtL] {
            c.stepsize = s;
            c.validate().unwrap();
            c.build_driver(&p).unwrap();
        }
    }
}
