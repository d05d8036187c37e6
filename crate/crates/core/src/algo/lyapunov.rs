//! Lyapunov functions and their theoretical contraction factors.

use crate::algo::stepsize::StepsizeConfig;
use crate::algo::{AlgorithmState, Optimum};
use crate::error::{Error, Result};
use crate::objective::Problem;
use crate::sampling::SamplingScheme;
use crate::vecops::dist_sq;

/// `Ψ = (1/γ)‖x − x⋆‖² + Σ_m c_m ‖u_m − u_m⋆‖²` with per-client weights
/// `c_m` fixed by the driver and its stepsizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Lyapunov {
    inv_gamma: f64,
    dual_weights: Vec<f64>,
    /// Theoretical one-round contraction factor `1 − ρ`.
    factor: f64,
}

impl Lyapunov {
    /// Compressed driver: `c_m = (M/C)(ω + 1)(1/τ + 1/L_F,max)` and
    /// `ρ = min{γμ/(1 + γμ), (C/(M(1 + ω))) τ/(L_F,max + τ)}`.
    pub fn cc(problem: &Problem, steps: &StepsizeConfig, cohort: usize, omega: f64) -> Result<Self> {
        let tau = steps
            .common_tau()
            .ok_or_else(|| Error::Stepsize("compressed driver needs one shared tau".into()))?;
        let (m, c) = (problem.num_clients() as f64, cohort as f64);
        let lf = problem.l_f_max();
        // L_F,max = 0 when every f_m is a multiple of ‖x‖²; the weight is then +∞
        let w = (m / c) * (omega + 1.0) * (1.0 / tau + 1.0 / lf);
        let gm = steps.gamma * problem.mu();
        let rho = (gm / (1.0 + gm)).min(c / (m * (1.0 + omega)) * tau / (lf + tau));
        Ok(Self {
            inv_gamma: 1.0 / steps.gamma,
            dual_weights: vec![w; problem.num_clients()],
            factor: 1.0 - rho,
        })
    }

    /// General sampling: `c_m = (1/p̂_m)(1/τ_m + 1/L_F,m)` and factor
    /// `max{1/(1 + γμ), max_m (L_F,m + (1 − p̂_m)τ_m)/(L_F,m + τ_m)}`.
    pub fn ab(problem: &Problem, steps: &StepsizeConfig, scheme: &SamplingScheme) -> Result<Self> {
        let phat = scheme.participation_prob();
        if phat.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::invalid("every client needs positive participation probability"));
        }
        let lf = problem.l_f_vec();
        let dual_weights = phat
            .iter()
            .zip(&steps.tau)
            .zip(&lf)
            .map(|((p, t), l)| (1.0 / p) * (1.0 / t + 1.0 / l))
            .collect();
        let dual_factor = phat
            .iter()
            .zip(&steps.tau)
            .zip(&lf)
            .map(|((p, t), l)| (l + (1.0 - p) * t) / (l + t))
            .fold(0.0, f64::max);
        let factor = (1.0 / (1.0 + steps.gamma * problem.mu())).max(dual_factor);
        Ok(Self {
            inv_gamma: 1.0 / steps.gamma,
            dual_weights,
            factor,
        })
    }

    pub fn value(&self, state: &AlgorithmState, opt: &Optimum) -> f64 {
        let dual: f64 = self
            .dual_weights
            .iter()
            .zip(state.u.iter().zip(&opt.u))
            .map(|(w, (u, us))| weighted(*w, dist_sq(u, us)))
            .sum();
        self.inv_gamma * dist_sq(&state.x, &opt.x) + dual
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn rate(&self) -> f64 {
        1.0 - self.factor
    }

    pub fn dual_weights(&self) -> &[f64] {
        &self.dual_weights
    }
}

/// `w · s`, with a zero distance contributing zero even when `w` is infinite.
fn weighted(w: f64, s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        w * s
    }
}
