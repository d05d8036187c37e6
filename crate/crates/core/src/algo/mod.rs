//! The two federated drivers: compressed training with uniform cohorts, and
//! uncompressed training under a general client sampling scheme.
//!
//! Both keep a primal point `x`, per-client duals `u_m` and the server-side
//! sum `v = Σ u_m`. A round computes the anchor `x̂ = (x − γv)/(1 + γμ)`,
//! lets each cohort member approximately minimise
//! `F_m(y) + (τ_m/2)‖y − (x̂ + u_m/τ_m)‖²` and moves the duals towards
//! `ū_m = ∇F_m(y_m)`.

pub mod lyapunov;
pub mod optimum;
pub mod stepsize;

pub use lyapunov::Lyapunov;
pub use optimum::{quadratic_optimum, reference_optimum, Optimum};
pub use stepsize::{check_ab, check_cc, max_gamma, stepsizes_ab, stepsizes_cc, StepsizeConfig, StepsizeSource};

use crate::compress::{decompress, Compressor};
use crate::error::{Error, Result};
use crate::localsolve::{solve, LocalSolver, Subproblem};
use crate::objective::Problem;
use crate::rng::{Lane, Streams};
use crate::sampling::SamplingScheme;
use crate::vecops::{axpy, check_len, dist_sq, norm_sq, sub, sum_all};

/// Rounds between checks that `v` still equals `Σ u_m`.
pub const CONSISTENCY_PERIOD: u64 = 100;
const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmState {
    pub x: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AlgorithmState {
    pub fn new(x: Vec<f64>, u: Vec<Vec<f64>>) -> Result<Self> {
        let d = x.len();
        for um in &u {
            check_len(um, d)?;
        }
        let v = sum_all(&u, d);
        Ok(Self { x, u, v, t: 0 })
    }

    /// `x⁰ = 0`, `u⁰ = 0`.
    pub fn zeros(problem: &Problem) -> Self {
        let d = problem.dim();
        Self {
            x: vec![0.0; d],
            u: vec![vec![0.0; d]; problem.num_clients()],
            v: vec![0.0; d],
            t: 0,
        }
    }

    /// `‖v − Σ u_m‖ ≤ 10⁻⁹ (1 + ‖v‖)`.
    pub fn check_consistency(&self) -> Result<()> {
        let s = sum_all(&self.u, self.x.len());
        let err = dist_sq(&s, &self.v).sqrt();
        let bound = CONSISTENCY_TOL * (1.0 + norm_sq(&self.v).sqrt());
        if err > bound {
            return Err(Error::invalid(format!(
                "round {}: server dual sum drifted from the client duals by {err:e}",
                self.t
            )));
        }
        Ok(())
    }

    fn anchor(&self, gamma: f64, mu: f64) -> Vec<f64> {
        let s = 1.0 / (1.0 + gamma * mu);
        self.x
            .iter()
            .zip(&self.v)
            .map(|(x, v)| s * (x - gamma * v))
            .collect()
    }

    fn finish_round(&mut self) -> Result<()> {
        self.t += 1;
        if self.t.is_multiple_of(CONSISTENCY_PERIOD) {
            self.check_consistency()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundStats {
    /// Clients that trained this round, ascending.
    pub cohort: Vec<usize>,
    pub uplink_floats: usize,
    pub downlink_floats: usize,
    pub local_steps: usize,
    /// Members whose local output failed the accuracy certificate.
    pub certificate_failures: usize,
}

fn local_step(
    problem: &Problem,
    state: &AlgorithmState,
    m: usize,
    anchor: &[f64],
    tau: f64,
    solver: LocalSolver,
    stats: &mut RoundStats,
) -> Result<Vec<f64>> {
    let sp = Subproblem::new(problem, m, anchor.to_vec(), state.u[m].clone(), tau)?;
    let sol = solve(problem, &sp, solver)?;
    stats.local_steps += sol.steps_taken;
    if !sol.certificate.pass {
        stats.certificate_failures += 1;
    }
    // ū_m − u_m
    let ubar = problem.lifted_grad(m, &sol.y)?;
    Ok(sub(&ubar, &state.u[m]))
}

/// One round of the compressed driver with a uniformly drawn cohort of
/// size `C`:
///
/// ```text
/// u_m ← u_m + (1/(1+ω))(C/M) Q(ū_m − u_m)     for m in the cohort
/// v   ← v + Δ,   Δ = Σ of those increments
/// x   ← x̂ − γ (M/C)(1+ω) Δ
/// ```
pub fn round_cc(
    state: &mut AlgorithmState,
    problem: &Problem,
    compressor: &Compressor,
    cohort: usize,
    steps: &StepsizeConfig,
    solver: LocalSolver,
    streams: &Streams,
) -> Result<RoundStats> {
    let (m_count, d) = (problem.num_clients(), problem.dim());
    if compressor.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: compressor.dim(),
        });
    }
    let tau = steps
        .common_tau()
        .ok_or_else(|| Error::Stepsize("compressed driver needs one shared tau".into()))?;
    let scheme = SamplingScheme::uniform_nice(m_count, cohort)?;
    let draw = scheme.draw(&mut streams.stream(state.t, Lane::Cohort));
    let omega = compressor.omega();
    let gamma = steps.gamma;
    let anchor = state.anchor(gamma, problem.mu());
    let coef = cohort as f64 / (m_count as f64 * (1.0 + omega));

    let mut stats = RoundStats {
        cohort: draw.members.clone(),
        ..RoundStats::default()
    };
    let mut delta = vec![0.0; d];
    for &m in &draw.members {
        let diff = local_step(problem, state, m, &anchor, tau, solver, &mut stats)?;
        let msg = compressor.compress(&diff, &mut streams.stream(state.t, Lane::Client(m)))?;
        stats.uplink_floats += msg.payload_floats;
        let q = decompress(&msg, d)?;
        axpy(coef, &q, &mut state.u[m]);
        axpy(coef, &q, &mut delta);
    }
    axpy(1.0, &delta, &mut state.v);
    let step = gamma * (m_count as f64 / cohort as f64) * (1.0 + omega);
    state.x = anchor;
    axpy(-step, &delta, &mut state.x);
    stats.downlink_floats = draw.members.len() * d;
    state.finish_round()?;
    Ok(stats)
}

/// One round of the sampling driver:
///
/// ```text
/// u_m ← ū_m                        for m in the cohort
/// x   ← x̂ − γ M S(ū − u)           S the scheme's unbiased estimator
/// v   ← Σ u_m
/// ```
///
/// A client drawn several times trains once; its difference enters `S`
/// with the combined weight.
pub fn round_ab(
    state: &mut AlgorithmState,
    problem: &Problem,
    scheme: &SamplingScheme,
    steps: &StepsizeConfig,
    solver: LocalSolver,
    streams: &Streams,
) -> Result<RoundStats> {
    let (m_count, d) = (problem.num_clients(), problem.dim());
    if scheme.num_clients() != m_count {
        return Err(Error::invalid("scheme and problem disagree on the number of clients"));
    }
    if steps.tau.len() != m_count {
        return Err(Error::Stepsize("one tau per client required".into()));
    }
    let draw = scheme.draw(&mut streams.stream(state.t, Lane::Cohort));
    let gamma = steps.gamma;
    let anchor = state.anchor(gamma, problem.mu());
    let distinct = draw.distinct();
    let mut stats = RoundStats {
        cohort: distinct.clone(),
        ..RoundStats::default()
    };
    let mut diffs = Vec::with_capacity(distinct.len());
    for &m in &distinct {
        diffs.push(local_step(problem, state, m, &anchor, steps.tau[m], solver, &mut stats)?);
    }
    let mut est = vec![0.0; d];
    for (&m, &w) in draw.members.iter().zip(&draw.weights) {
        let k = distinct.binary_search(&m).expect("distinct covers members");
        axpy(w, &diffs[k], &mut est);
    }
    for (&m, diff) in distinct.iter().zip(&diffs) {
        axpy(1.0, diff, &mut state.u[m]);
    }
    state.v = sum_all(&state.u, d);
    state.x = anchor;
    axpy(-gamma * m_count as f64, &est, &mut state.x);
    stats.uplink_floats = distinct.len() * d;
    stats.downlink_floats = distinct.len() * d;
    state.finish_round()?;
    Ok(stats)
}

/// Either driver with everything a run needs besides the state.
#[derive(Debug, Clone)]
pub enum Method {
    Compressed { compressor: Compressor, cohort: usize },
    Sampling { scheme: SamplingScheme },
}

#[derive(Debug, Clone)]
pub struct Driver {
    pub method: Method,
    pub steps: StepsizeConfig,
    pub solver: LocalSolver,
}

impl Driver {
    /// Pairs the method with its theoretical stepsizes.
    pub fn with_default_steps(problem: &Problem, method: Method, solver: LocalSolver) -> Result<Self> {
        let steps = match &method {
            Method::Compressed { compressor, cohort } => stepsizes_cc(problem, *cohort, compressor.omega())?,
            Method::Sampling { scheme } => stepsizes_ab(problem, scheme)?,
        };
        Ok(Self { method, steps, solver })
    }

    /// Uses `steps` after checking them against the method's conditions.
    pub fn with_steps(problem: &Problem, method: Method, steps: StepsizeConfig, solver: LocalSolver) -> Result<Self> {
        match &method {
            Method::Compressed { compressor, cohort } => check_cc(problem, &steps, *cohort, compressor.omega())?,
            Method::Sampling { scheme } => check_ab(problem, scheme, &steps)?,
        }
        Ok(Self { method, steps, solver })
    }

    pub fn round(&self, state: &mut AlgorithmState, problem: &Problem, streams: &Streams) -> Result<RoundStats> {
        match &self.method {
            Method::Compressed { compressor, cohort } => {
                round_cc(state, problem, compressor, *cohort, &self.steps, self.solver, streams)
            }
            Method::Sampling { scheme } => round_ab(state, problem, scheme, &self.steps, self.solver, streams),
        }
    }

    pub fn lyapunov(&self, problem: &Problem) -> Result<Lyapunov> {
        match &self.method {
            Method::Compressed { compressor, cohort } => {
                Lyapunov::cc(problem, &self.steps, *cohort, compressor.omega())
            }
            Method::Sampling { scheme } => Lyapunov::ab(problem, &self.steps, scheme),
        }
    }
}
