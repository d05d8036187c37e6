//! Property suites behind `verify`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::algo::{
    quadratic_optimum, round_ab, round_cc, stepsizes_ab, stepsizes_cc, AlgorithmState, Driver, Lyapunov, Method,
    Optimum,
};
use crate::compress::{certify_variance, CertifyMode, Compressor};
use crate::dataset::{synth_problem, ClientData, Sample, SynthSpec};
use crate::error::{Error, Result};
use crate::localsolve::{LocalSolver, Subproblem};
use crate::objective::{ClientObjective, Problem};
use crate::rng::{seeded, Streams, StreamRng};
use crate::sampling::{
    importance_probs_exact, importance_probs_fixed_point, independent_variance, multisampling_variance, verify_ab,
    SamplingScheme, VerifyMode,
};
use crate::vecops::{dist_sq, norm, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Ab,
    Compressor,
    Gradients,
    Contraction,
    FixedPoint,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Ab => "ab",
            Suite::Compressor => "compressor",
            Suite::Gradients => "gradients",
            Suite::Contraction => "contraction",
            Suite::FixedPoint => "fixed_point",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Item {
    pub name: String,
    pub pass: bool,
    /// The measured quantity.
    pub value: f64,
    /// The bound it is compared against.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub suite: Suite,
    pub pass: bool,
    pub items: Vec<Item>,
}

impl Report {
    fn new(suite: Suite, items: Vec<Item>) -> Self {
        let pass = items.iter().all(|i| i.pass);
        Self { suite, pass, items }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(|i| !i.pass)
    }

    pub fn human(&self) -> String {
        let mut s = format!(
            "{}: {} ({} checks, {} failed)\n",
            self.suite.name(),
            if self.pass { "PASS" } else { "FAIL" },
            self.items.len(),
            self.failures().count()
        );
        for i in &self.items {
            s.push_str(&format!(
                "  [{}] {}: {:.6e} vs {:.6e}\n",
                if i.pass { "ok" } else { "FAIL" },
                i.name,
                i.value,
                i.bound
            ));
        }
        s
    }
}

pub fn run_suite(suite: Suite) -> Result<Report> {
    match suite {
        Suite::Ab => sampling_identities(20, 1),
        Suite::Compressor => compressor_identities(1),
        Suite::Gradients => gradient_checks(50, 1),
        Suite::Contraction => expected_contraction(&ContractionSetup::default()),
        Suite::FixedPoint => fixed_point_checks(1),
    }
}

fn gauss_vec(rng: &mut StreamRng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn random_probs(rng: &mut StreamRng, m: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..m).map(|_| 0.1 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

const IDENTITY_TOL: f64 = 1e-12;

/// Enumerated estimator variances against the closed forms, and the
/// uniform scheme's AB bound, for every `M ≤ 5`, `C ≤ min(3, M)`.
pub fn sampling_identities(tuples: usize, seed: u64) -> Result<Report> {
    let mut rng = seeded(seed);
    let mut items = Vec::new();
    for m in 1..=5usize {
        for c in 1..=m.min(3) {
            // worst scaled |E‖S − ā‖² − closed form| and worst scaled bias per scheme
            let mut worst = [[0.0f64; 2]; 3];
            for _ in 0..tuples {
                let d = 1 + rng.random_range(0..3usize);
                let a: Vec<Vec<f64>> = (0..m).map(|_| gauss_vec(&mut rng, d)).collect();
                let scale = 1.0 + a.iter().map(|v| norm_sq(v)).sum::<f64>();
                let p = random_probs(&mut rng, m);
                let ms = SamplingScheme::multisampling(p.clone(), c)?;
                let r = verify_ab(&ms, &a, VerifyMode::Enumerate, &mut rng)?;
                let q: Vec<f64> = (0..m).map(|_| 0.05 + 0.95 * rng.random::<f64>()).collect();
                let ind = SamplingScheme::independent(q.clone())?;
                let ri = verify_ab(&ind, &a, VerifyMode::Enumerate, &mut rng)?;
                let un = SamplingScheme::uniform_nice(m, c)?;
                let ru = verify_ab(&un, &a, VerifyMode::Enumerate, &mut rng)?;
                let checks = [
                    (r.lhs, multisampling_variance(&p, c, &a), r.bias),
                    (ri.lhs, independent_variance(&q, &a), ri.bias),
                    (ru.lhs, ru.rhs, ru.bias),
                ];
                for (w, (lhs, rhs, bias)) in worst.iter_mut().zip(checks) {
                    w[0] = w[0].max((lhs - rhs).abs() / scale);
                    w[1] = w[1].max(bias / scale.sqrt());
                }
            }
            for (label, w) in ["multisampling", "independent", "uniform_nice"].iter().zip(worst) {
                for (what, v) in ["variance", "bias"].iter().zip(w) {
                    items.push(Item {
                        name: format!("{label} M={m} C={c} {what}"),
                        pass: v <= IDENTITY_TOL,
                        value: v,
                        bound: IDENTITY_TOL,
                    });
                }
            }
        }
    }
    Ok(Report::new(Suite::Ab, items))
}

/// Rand-k unbiasedness and `E‖Q(x) − x‖² = (d/k − 1)‖x‖²` by enumeration.
pub fn compressor_identities(seed: u64) -> Result<Report> {
    let mut rng = seeded(seed);
    let mut items = Vec::new();
    for d in 1..=8usize {
        let probes: Vec<Vec<f64>> = (0..5).map(|_| gauss_vec(&mut rng, d)).collect();
        for k in 1..=d {
            let c = Compressor::rand_k(k, d)?;
            let cert = certify_variance(&c, CertifyMode::Exact, &probes, &mut rng)?;
            items.push(Item {
                name: format!("rand-{k} d={d} |omega_hat - omega|"),
                pass: cert.pass,
                value: (cert.omega_hat - c.omega()).abs(),
                bound: IDENTITY_TOL * c.omega().max(1.0),
            });
            items.push(Item {
                name: format!("rand-{k} d={d} bias"),
                pass: cert.pass,
                value: cert.bias,
                bound: 0.0,
            });
        }
    }
    Ok(Report::new(Suite::Compressor, items))
}

/// Central differences of a scalar function.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-6;

fn random_logistic_problem(rng: &mut StreamRng, m: usize, n: usize, d: usize) -> Result<Problem> {
    let data: Vec<ClientData> = (0..m)
        .map(|_| {
            let samples = (0..n)
                .map(|_| {
                    let mut feats = Vec::new();
                    for i in 1..=d {
                        if rng.random::<f64>() < 0.5 {
                            feats.push((i, rng.sample::<f64, _>(StandardNormal)));
                        }
                    }
                    let label = if rng.random::<bool>() { 1 } else { -1 };
                    Sample::new(label, feats)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ClientData { samples, dim: d })
        })
        .collect::<Result<_>>()?;
    Problem::logistic_with_lambda(&data, 0.05 + rng.random::<f64>())
}

fn rel_err(g: &[f64], fd: &[f64]) -> f64 {
    dist_sq(g, fd).sqrt() / norm(g).max(norm(fd)).max(1e-3)
}

/// Analytic gradients of `f_m`, `F_m` and `ψ_m` against central
/// differences on random logistic and quadratic instances.
pub fn gradient_checks(instances: usize, seed: u64) -> Result<Report> {
    let mut rng = seeded(seed);
    let mut worst = [0.0f64; 3];
    for i in 0..instances {
        let d = 2 + rng.random_range(0..6usize);
        let problem = if i % 2 == 0 {
            random_logistic_problem(&mut rng, 3, 6, d)?
        } else {
            let specs = synth_problem(&SynthSpec {
                clients: 3,
                dim: d,
                kappa: 5.0 + 50.0 * rng.random::<f64>(),
                heterogeneity: 2.0,
                seed: rng.random(),
            })?;
            Problem::quadratic(&specs)?
        };
        let m = rng.random_range(0..3usize);
        let x = gauss_vec(&mut rng, d);
        let c: &ClientObjective = problem.client(m)?;
        let g = c.grad(&x)?;
        let fd = finite_difference(|y| c.value(y).expect("dim checked"), &x, FD_STEP);
        worst[0] = worst[0].max(rel_err(&g, &fd));

        let g = problem.lifted_grad(m, &x)?;
        let fd = finite_difference(|y| problem.lifted_value(m, y).expect("dim checked"), &x, FD_STEP);
        worst[1] = worst[1].max(rel_err(&g, &fd));

        let tau = 0.1 + rng.random::<f64>();
        let sp = Subproblem::new(&problem, m, gauss_vec(&mut rng, d), gauss_vec(&mut rng, d), tau)?;
        let g = sp.grad(&problem, &x)?;
        let fd = finite_difference(|y| sp.value(&problem, y).expect("dim checked"), &x, FD_STEP);
        worst[2] = worst[2].max(rel_err(&g, &fd));
    }
    let items = ["f_m", "F_m", "psi_m"]
        .iter()
        .zip(worst)
        .map(|(name, w)| Item {
            name: format!("{name} worst relative error over {instances} instances"),
            pass: w <= FD_TOL,
            value: w,
            bound: FD_TOL,
        })
        .collect();
    Ok(Report::new(Suite::Gradients, items))
}

/// The quadratic test problem shared by the contraction and fixed-point
/// checks.
pub fn quadratic_testbed(clients: usize, dim: usize, kappa: f64, heterogeneity: f64, seed: u64) -> Result<Problem> {
    Problem::quadratic(&synth_problem(&SynthSpec {
        clients,
        dim,
        kappa,
        heterogeneity,
        seed,
    })?)
}

/// Named driver configurations with their theoretical stepsizes, covering
/// every driver, scheme and compressor.
pub fn standard_methods(problem: &Problem) -> Result<Vec<(String, Driver)>> {
    let m = problem.num_clients();
    let d = problem.dim();
    let solver = LocalSolver::Exact;
    let mut out = Vec::new();
    let mut add = |name: String, method: Method| -> Result<()> {
        out.push((name, Driver::with_default_steps(problem, method, solver)?));
        Ok(())
    };
    for (c, k) in [(m / 2, d), (m / 2, d / 4), (1, 1), (m, d / 2)] {
        add(
            format!("cc C={c} rand-{k}"),
            Method::Compressed {
                compressor: if k == d { Compressor::identity(d) } else { Compressor::rand_k(k, d)? },
                cohort: c,
            },
        )?;
    }
    for c in [1, m / 2, m] {
        add(
            format!("ab uniform C={c}"),
            Method::Sampling {
                scheme: SamplingScheme::uniform_nice(m, c)?,
            },
        )?;
    }
    let (p, _) = importance_probs_exact(problem)?;
    add(
        "ab multisampling C=1 sqrt-L probabilities".into(),
        Method::Sampling {
            scheme: SamplingScheme::multisampling(p, 1)?,
        },
    )?;
    let fp = importance_probs_fixed_point(problem, 1e-12, 100_000)?;
    add(
        "ab multisampling C=1 fixed-point probabilities".into(),
        Method::Sampling {
            scheme: SamplingScheme::multisampling(fp.p, 1)?,
        },
    )?;
    let q: Vec<f64> = (0..m).map(|i| 0.2 + 0.6 * i as f64 / (m.max(2) - 1) as f64).collect();
    add(
        "ab independent".into(),
        Method::Sampling {
            scheme: SamplingScheme::independent(q)?,
        },
    )?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionSetup {
    pub clients: usize,
    pub dim: usize,
    pub kappa: f64,
    pub heterogeneity: f64,
    pub states: usize,
    pub trials: usize,
    pub slack: f64,
    pub seed: u64,
}

impl Default for ContractionSetup {
    fn default() -> Self {
        Self {
            clients: 10,
            dim: 20,
            kappa: 100.0,
            heterogeneity: 10.0,
            states: 5,
            trials: 500,
            slack: 1.05,
            seed: 1,
        }
    }
}

/// A state at random distance from the optimum.
pub fn random_state(problem: &Problem, opt: &Optimum, rng: &mut StreamRng) -> Result<AlgorithmState> {
    let d = problem.dim();
    let x: Vec<f64> = opt.x.iter().zip(gauss_vec(rng, d)).map(|(a, b)| a + b).collect();
    let scale = problem.mu() / problem.num_clients() as f64;
    let u = opt
        .u
        .iter()
        .map(|um| um.iter().zip(gauss_vec(rng, d)).map(|(a, b)| a + scale * b).collect())
        .collect();
    AlgorithmState::new(x, u)
}

/// Mean one-round ratio `Ψ⁺/Ψ` per starting state, compared with `1 − ρ`.
pub fn expected_contraction(setup: &ContractionSetup) -> Result<Report> {
    let problem = quadratic_testbed(setup.clients, setup.dim, setup.kappa, setup.heterogeneity, setup.seed)?;
    let opt = quadratic_optimum(&problem)?;
    let mut rng = seeded(setup.seed ^ 0xc0_ffee);
    let states: Vec<AlgorithmState> = (0..setup.states)
        .map(|_| random_state(&problem, &opt, &mut rng))
        .collect::<Result<_>>()?;
    let mut items = Vec::new();
    for (name, driver) in standard_methods(&problem)? {
        let lyap = driver.lyapunov(&problem)?;
        let mut worst: f64 = 0.0;
        for (si, s0) in states.iter().enumerate() {
            let psi0 = lyap.value(s0, &opt);
            let mut total = 0.0;
            for trial in 0..setup.trials {
                let streams = Streams::new(((si as u64) << 32) | trial as u64);
                let mut s = s0.clone();
                driver.round(&mut s, &problem, &streams)?;
                total += lyap.value(&s, &opt) / psi0;
            }
            worst = worst.max(total / setup.trials as f64);
        }
        let bound = lyap.factor() * setup.slack;
        items.push(Item {
            name: format!("{name}: worst mean ratio over {} states", setup.states),
            pass: worst <= bound,
            value: worst,
            bound,
        });
    }
    Ok(Report::new(Suite::Contraction, items))
}

/// One exact round from `(x⋆, u⋆)` leaves `Ψ` at round-off level.
pub fn fixed_point_checks(seed: u64) -> Result<Report> {
    let problem = quadratic_testbed(8, 10, 50.0, 5.0, seed)?;
    let opt = quadratic_optimum(&problem)?;
    let at_opt = AlgorithmState::new(opt.x.clone(), opt.u.clone())?;
    let shift = |v: &[f64]| v.iter().map(|a| a + 1.0).collect::<Vec<f64>>();
    let perturbed = AlgorithmState::new(shift(&opt.x), opt.u.iter().map(|u| shift(u)).collect())?;
    let d = problem.dim();
    let mut items = Vec::new();
    let streams = Streams::new(seed);
    for comp in [Compressor::identity(d), Compressor::rand_k(d / 2, d)?] {
        let steps = stepsizes_cc(&problem, 4, comp.omega())?;
        let lyap = Lyapunov::cc(&problem, &steps, 4, comp.omega())?;
        let mut s = at_opt.clone();
        round_cc(&mut s, &problem, &comp, 4, &steps, LocalSolver::Exact, &streams)?;
        let bound = 1e-12 * lyap.value(&perturbed, &opt);
        let v = lyap.value(&s, &opt);
        items.push(Item {
            name: format!("cc omega={}", comp.omega()),
            pass: v <= bound,
            value: v,
            bound,
        });
    }
    let schemes = [
        ("uniform", SamplingScheme::uniform_nice(8, 3)?),
        ("multisampling", SamplingScheme::multisampling(importance_probs_exact(&problem)?.0, 2)?),
        ("independent", SamplingScheme::independent(vec![0.5; 8])?),
    ];
    for (name, scheme) in schemes {
        let steps = stepsizes_ab(&problem, &scheme)?;
        let lyap = Lyapunov::ab(&problem, &steps, &scheme)?;
        let mut s = at_opt.clone();
        round_ab(&mut s, &problem, &scheme, &steps, LocalSolver::Exact, &streams)?;
        let bound = 1e-12 * lyap.value(&perturbed, &opt);
        let v = lyap.value(&s, &opt);
        items.push(Item {
            name: format!("ab {name}"),
            pass: v <= bound,
            value: v,
            bound,
        });
    }
    Ok(Report::new(Suite::FixedPoint, items))
}

pub fn parse_suite(name: &str) -> Result<Suite> {
    Ok(match name {
        "ab" => Suite::Ab,
        "compressor" => Suite::Compressor,
        "gradients" => Suite::Gradients,
        "contraction" => Suite::Contraction,
        "fixed_point" => Suite::FixedPoint,
        other => return Err(Error::Config(format!("unknown suite {other:?}"))),
    })
}
