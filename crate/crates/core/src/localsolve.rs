//! Client subproblems
//!
//! ```text
//! ψ_m(y) = F_m(y) + (τ_m/2) ‖y − (x̂ + u_m/τ_m)‖²
//! ```
//!
//! and local solvers whose output is checked against a computable sufficient
//! condition for the local-training accuracy requirement
//!
//! ```text
//! Σ (4/τ_m²)(μ_m L_F,m²/(3M)) ‖y_m − y_m⋆‖² + Σ (L_F,m/τ_m²) ‖∇ψ_m(y_m)‖²
//!     ≤ Σ (μ_m/(6M)) ‖x̂ − y_m⋆‖².
//! ```
//!
//! The exact minimiser `y⋆` is unknown in general, so each client checks
//! the inequality after replacing `‖y − y⋆‖` by its upper bound
//! `‖∇ψ(y)‖/τ` and `‖x̂ − y⋆‖` by its lower bound `‖∇ψ(x̂)‖/(L_F + τ)`.
//! Passing that per-client surrogate implies the summed inequality.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Problem;
use crate::vecops::{axpy, check_len, dist_sq, norm, norm_sq};

const MAX_CERTIFIED_STEPS: usize = 1_000_000;
/// Relative size below which `‖∇ψ(y)‖` is indistinguishable from round-off.
const PRECISION_FLOOR: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub struct Subproblem {
    pub client: usize,
    pub anchor: Vec<f64>,
    pub dual: Vec<f64>,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateStatus {
    pub pass: bool,
    /// Right side minus left side of the surrogate inequality.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    pub y: Vec<f64>,
    pub grad_psi_norm: f64,
    pub steps_taken: usize,
    pub certificate: CertificateStatus,
    /// Certified descent stopped because the gradient reached round-off
    /// level before the certificate could pass.
    pub at_precision_floor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalSolver {
    /// Gradient descent until the surrogate certificate passes.
    #[default]
    Certified,
    /// Gradient descent for a fixed number of steps.
    FixedSteps(usize),
    /// Closed-form solve; quadratic clients only.
    Exact,
}

impl Subproblem {
    pub fn new(problem: &Problem, client: usize, anchor: Vec<f64>, dual: Vec<f64>, tau: f64) -> Result<Self> {
        problem.client(client)?;
        check_len(&anchor, problem.dim())?;
        check_len(&dual, problem.dim())?;
        if !(tau > 0.0) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        Ok(Self {
            client,
            anchor,
            dual,
            tau,
        })
    }

    /// Smoothness constant of ψ: `L_F,m + τ`.
    pub fn smoothness(&self, problem: &Problem) -> f64 {
        problem.l_f(self.client) + self.tau
    }

    pub fn value(&self, problem: &Problem, y: &[f64]) -> Result<f64> {
        check_len(y, problem.dim())?;
        let f = problem.lifted_value(self.client, y)?;
        let shifted: f64 = y
            .iter()
            .zip(self.anchor.iter().zip(&self.dual))
            .map(|(yi, (xi, ui))| {
                let r = yi - (xi + ui / self.tau);
                r * r
            })
            .sum();
        Ok(f + 0.5 * self.tau * shifted)
    }

    /// `∇ψ(y) = ∇F_m(y) + τ(y − x̂) − u_m`.
    pub fn grad(&self, problem: &Problem, y: &[f64]) -> Result<Vec<f64>> {
        check_len(y, problem.dim())?;
        let mut g = vec![0.0; y.len()];
        self.grad_into(problem, y, &mut g);
        Ok(g)
    }

    fn grad_into(&self, problem: &Problem, y: &[f64], out: &mut [f64]) {
        problem.lifted_grad_into(self.client, y, out);
        for ((o, yi), (xi, ui)) in out.iter_mut().zip(y).zip(self.anchor.iter().zip(&self.dual)) {
            *o += self.tau * (yi - xi) - ui;
        }
    }
}

/// `y⋆ = (Q_F + τI)⁻¹ (τ x̂ + u + c_F)` for quadratic clients.
pub fn solve_exact_quadratic(problem: &Problem, sub: &Subproblem) -> Result<Vec<f64>> {
    let (qf, cf) = problem.lifted_quadratic(sub.client)?;
    let d = problem.dim();
    let lhs = qf + DMatrix::identity(d, d) * sub.tau;
    let rhs = DVector::from_fn(d, |i, _| sub.tau * sub.anchor[i] + sub.dual[i] + cf[i]);
    let chol = lhs
        .cholesky()
        .ok_or_else(|| Error::invalid("subproblem matrix is not positive definite"))?;
    Ok(chol.solve(&rhs).as_slice().to_vec())
}

/// Surrogate certificate for one client given `‖∇ψ(y)‖` and `‖∇ψ(x̂)‖`.
pub fn client_certificate(problem: &Problem, sub: &Subproblem, grad_y: f64, grad_anchor: f64) -> CertificateStatus {
    let m = problem.num_clients() as f64;
    let lf = problem.l_f(sub.client);
    let mu_m = problem.clients()[sub.client].strong_convexity();
    let tau = sub.tau;
    let g2 = grad_y * grad_y;
    let lhs = 4.0 / (tau * tau) * (mu_m * lf * lf / (3.0 * m)) * (g2 / (tau * tau)) + lf / (tau * tau) * g2;
    let lower = grad_anchor / (lf + tau);
    let rhs = mu_m / (6.0 * m) * lower * lower;
    let slack = rhs - lhs;
    CertificateStatus {
        pass: slack >= 0.0,
        slack,
    }
}

/// Checks the surrogate for every cohort member; returns the worst slack.
pub fn local_accuracy_certificate(problem: &Problem, subs: &[Subproblem], ys: &[Vec<f64>]) -> Result<CertificateStatus> {
    if subs.len() != ys.len() {
        return Err(Error::Dimension {
            expected: subs.len(),
            got: ys.len(),
        });
    }
    let mut worst = CertificateStatus {
        pass: true,
        slack: f64::INFINITY,
    };
    for (sub, y) in subs.iter().zip(ys) {
        let gy = norm(&sub.grad(problem, y)?);
        let gx = norm(&sub.grad(problem, &sub.anchor)?);
        let c = client_certificate(problem, sub, gy, gx);
        if c.slack < worst.slack {
            worst = c;
        }
    }
    Ok(worst)
}

/// The local-training inequality evaluated with known exact minimisers,
/// returning `rhs − lhs`.
pub fn local_accuracy_literal_slack(
    problem: &Problem,
    subs: &[Subproblem],
    ys: &[Vec<f64>],
    ystars: &[Vec<f64>],
) -> Result<f64> {
    let m = problem.num_clients() as f64;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for ((sub, y), ys_) in subs.iter().zip(ys).zip(ystars) {
        let lf = problem.l_f(sub.client);
        let mu_m = problem.clients()[sub.client].strong_convexity();
        let t2 = sub.tau * sub.tau;
        lhs += 4.0 / t2 * (mu_m * lf * lf / (3.0 * m)) * dist_sq(y, ys_)
            + lf / t2 * norm_sq(&sub.grad(problem, y)?);
        rhs += mu_m / (6.0 * m) * dist_sq(&sub.anchor, ys_);
    }
    Ok(rhs - lhs)
}

/// Gradient descent on ψ with stepsize `1/(L_F,m + τ)` from `y⁰ = x̂`.
///
/// With `max_steps = None` iterates until the surrogate certificate passes
/// or the gradient drops to round-off level relative to
/// `τ(‖y‖ + ‖x̂‖) + 2‖u‖` (erroring after 10⁶ steps); otherwise runs exactly that many steps and
/// reports the certificate at the final point.
pub fn solve_gd(problem: &Problem, sub: &Subproblem, max_steps: Option<usize>) -> Result<LocalSolution> {
    let step = 1.0 / sub.smoothness(problem);
    let mut y = sub.anchor.clone();
    let mut g = vec![0.0; y.len()];
    sub.grad_into(problem, &y, &mut g);
    let g_anchor = norm(&g);
    let fixed_scale = sub.tau * norm(&sub.anchor) + 2.0 * norm(&sub.dual);
    let mut steps = 0;
    loop {
        let gn = norm(&g);
        let cert = client_certificate(problem, sub, gn, g_anchor);
        let floor = max_steps.is_none()
            && !cert.pass
            && gn <= PRECISION_FLOOR * (fixed_scale + sub.tau * norm(&y));
        let done = match max_steps {
            None => cert.pass || floor,
            Some(k) => steps >= k,
        };
        if done {
            return Ok(LocalSolution {
                y,
                grad_psi_norm: gn,
                steps_taken: steps,
                certificate: cert,
                at_precision_floor: floor,
            });
        }
        if max_steps.is_none() && steps >= MAX_CERTIFIED_STEPS {
            return Err(Error::Certificate {
                client: sub.client,
                slack: cert.slack,
            });
        }
        axpy(-step, &g, &mut y);
        sub.grad_into(problem, &y, &mut g);
        steps += 1;
    }
}

/// Runs the configured solver and returns the point `y_m^K`.
pub fn solve(problem: &Problem, sub: &Subproblem, solver: LocalSolver) -> Result<LocalSolution> {
    match solver {
        LocalSolver::Certified => solve_gd(problem, sub, None),
        LocalSolver::FixedSteps(k) => solve_gd(problem, sub, Some(k)),
        LocalSolver::Exact => {
            let y = solve_exact_quadratic(problem, sub)?;
            let gn = norm(&sub.grad(problem, &y)?);
            let ga = norm(&sub.grad(problem, &sub.anchor)?);
            Ok(LocalSolution {
                certificate: client_certificate(problem, sub, gn, ga),
                y,
                grad_psi_norm: gn,
                steps_taken: 0,
                at_precision_floor: false,
            })
        }
    }
}
