//! Primal/dual stepsizes from the convergence theory, with the conditions
//! they must satisfy checked at construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Problem;
use crate::sampling::{SamplingScheme, SchemeKind};

const COND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsizeSource {
    /// Compressed driver, single `τ`.
    Compressed,
    /// Uniform `C`-nice sampling.
    Uniform,
    /// Multisampling with `τ_m ∝ p_m`.
    Multisampling,
    /// Independent sampling.
    Independent,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsizeConfig {
    pub gamma: f64,
    pub tau: Vec<f64>,
    pub source: StepsizeSource,
}

impl StepsizeConfig {
    pub fn manual(gamma: f64, tau: Vec<f64>) -> Result<Self> {
        if !(gamma > 0.0) || tau.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::Stepsize("stepsizes must be positive".into()));
        }
        Ok(Self {
            gamma,
            tau,
            source: StepsizeSource::Manual,
        })
    }

    /// The shared dual stepsize, if all clients use the same one.
    pub fn common_tau(&self) -> Option<f64> {
        let t = *self.tau.first()?;
        self.tau.iter().all(|&x| x == t).then_some(t)
    }
}

/// Compressed driver with uniform cohorts of size `C` and compressor
/// variance `ω`:
///
/// ```text
/// τ = (8/3) √(μ L_max ((ω+1)/C) / (M (1 + ω/C))),   γ = 1 / (2τM(1 + ω/C)).
/// ```
pub fn stepsizes_cc(problem: &Problem, cohort: usize, omega: f64) -> Result<StepsizeConfig> {
    let m = problem.num_clients();
    if cohort == 0 || cohort > m {
        return Err(Error::invalid(format!("cohort size must be in 1..={m}, got {cohort}")));
    }
    if !(omega >= 0.0) {
        return Err(Error::invalid(format!("omega must be >= 0, got {omega}")));
    }
    let (mf, c) = (m as f64, cohort as f64);
    let mu = problem.mu();
    let tau = 8.0 / 3.0 * (mu * problem.l_max() * ((omega + 1.0) / c) / (mf * (1.0 + omega / c))).sqrt();
    let gamma = 1.0 / (2.0 * tau * mf * (1.0 + omega / c));
    let cfg = StepsizeConfig {
        gamma,
        tau: vec![tau; m],
        source: StepsizeSource::Compressed,
    };
    check_cc(problem, &cfg, cohort, omega)?;
    Ok(cfg)
}

/// `1/τ − γ(M + ωM/C) ≥ (4/τ²)(μ/(3M))` and `τ ≥ 8μ/(3M)`.
pub fn check_cc(problem: &Problem, cfg: &StepsizeConfig, cohort: usize, omega: f64) -> Result<()> {
    let tau = cfg
        .common_tau()
        .ok_or_else(|| Error::Stepsize("compressed driver needs one shared tau".into()))?;
    let (mf, c) = (problem.num_clients() as f64, cohort as f64);
    let mu = problem.mu();
    let lhs = 1.0 / tau - cfg.gamma * (mf + omega * mf / c);
    let rhs = 4.0 / (tau * tau) * mu / (3.0 * mf);
    if lhs < rhs * (1.0 - COND_TOL) {
        return Err(Error::Stepsize(format!(
            "1/tau - gamma(M + omega M/C) = {lhs:e} < {rhs:e}"
        )));
    }
    Ok(())
}

/// Dual stepsizes by the scheme's rule and the largest γ allowed for
/// every client:
///
/// - uniform: `τ_m = (8/3) √(L_max μ/(M C))` (the homogeneous rule with
///   `L = L_max`, the smallest `L` bounding every `L_F,m` by `L/M`),
/// - multisampling: `τ_m = (8/3) √(L̄ μ M) p_m`,
/// - independent: `τ_m = (8/3) √(L̄ μ/(M Σ p_j))`,
///
/// and `γ = min_m 1 / (2 τ_m ((1 − B) M + A/w_m))`.
pub fn stepsizes_ab(problem: &Problem, scheme: &SamplingScheme) -> Result<StepsizeConfig> {
    let m = problem.num_clients();
    if scheme.num_clients() != m {
        return Err(Error::invalid("scheme and problem disagree on the number of clients"));
    }
    let mf = m as f64;
    let lmu = problem.l_bar() * problem.mu();
    let (tau, source) = match scheme.kind() {
        SchemeKind::UniformNice => (
            vec![8.0 / 3.0 * (problem.l_max() * problem.mu() / (mf * scheme.cohort())).sqrt(); m],
            StepsizeSource::Uniform,
        ),
        SchemeKind::Multisampling => {
            let s = 8.0 / 3.0 * (lmu * mf).sqrt();
            (
                scheme.probs().iter().map(|p| s * p).collect(),
                StepsizeSource::Multisampling,
            )
        }
        SchemeKind::Independent => (
            vec![8.0 / 3.0 * (lmu / (mf * scheme.cohort())).sqrt(); m],
            StepsizeSource::Independent,
        ),
    };
    let gamma = max_gamma(problem, scheme, &tau)?;
    let cfg = StepsizeConfig { gamma, tau, source };
    check_ab(problem, scheme, &cfg)?;
    Ok(cfg)
}

/// `min_m 1 / (2 τ_m ((1 − B) M + A/w_m))`.
pub fn max_gamma(problem: &Problem, scheme: &SamplingScheme, tau: &[f64]) -> Result<f64> {
    let ab = scheme.ab_constants();
    let mf = problem.num_clients() as f64;
    let gamma = tau
        .iter()
        .zip(&ab.a_over_w)
        .map(|(t, aw)| 1.0 / (2.0 * t * ((1.0 - ab.b) * mf + aw)))
        .fold(f64::INFINITY, f64::min);
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Stepsize(format!("no admissible primal stepsize (gamma = {gamma})")));
    }
    Ok(gamma)
}

/// Per client: `τ_m ≥ 8μ_m/(3M)` and
/// `1/τ_m − γ((1 − B)M + A/w_m) ≥ (4/τ_m²)(μ_m/(3M))`.
pub fn check_ab(problem: &Problem, scheme: &SamplingScheme, cfg: &StepsizeConfig) -> Result<()> {
    let ab = scheme.ab_constants();
    let mf = problem.num_clients() as f64;
    if cfg.tau.len() != problem.num_clients() {
        return Err(Error::Stepsize("one tau per client required".into()));
    }
    for (m, (c, (&tau, aw))) in problem
        .clients()
        .iter()
        .zip(cfg.tau.iter().zip(&ab.a_over_w))
        .enumerate()
    {
        let mu_m = c.strong_convexity();
        let floor = 8.0 * mu_m / (3.0 * mf);
        if tau < floor * (1.0 - COND_TOL) {
            return Err(Error::Stepsize(format!("tau_{m} = {tau:e} below 8 mu_m/(3M) = {floor:e}")));
        }
        let lhs = 1.0 / tau - cfg.gamma * ((1.0 - ab.b) * mf + aw);
        let rhs = 4.0 / (tau * tau) * mu_m / (3.0 * mf);
        if lhs < rhs * (1.0 - COND_TOL) {
            return Err(Error::Stepsize(format!(
                "client {m}: 1/tau - gamma((1-B)M + A/w) = {lhs:e} < {rhs:e}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::QuadraticSpec;
    use crate::sampling::importance_probs_exact;
    use nalgebra::{DMatrix, DVector};

    fn diag_problem(ls: &[f64], mu: f64) -> Problem {
        let specs: Vec<QuadraticSpec> = ls
            .iter()
            .map(|&l| QuadraticSpec {
                q: DMatrix::from_diagonal(&DVector::from_vec(vec![mu, l])),
                c: DVector::zeros(2),
            })
            .collect();
        Problem::quadratic(&specs).unwrap()
    }

    #[test]
    fn cc_hand_evaluation() {
        let p = diag_problem(&[4.0; 4], 1.0);
        let cfg = stepsizes_cc(&p, 2, 1.0).unwrap();
        let expect = 8.0 / 3.0 * (2.0f64 / 3.0).sqrt();
        assert!((cfg.tau[0] - expect).abs() < 1e-14);
        assert!((cfg.gamma * cfg.tau[0] * 4.0 * 1.5 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cc_without_compression_matches_uniform_form() {
        let p = diag_problem(&[9.0, 9.0, 9.0, 9.0, 9.0], 2.0);
        let (m, c) = (5.0, 3.0);
        let cfg = stepsizes_cc(&p, 3, 0.0).unwrap();
        let expect = 8.0 / 3.0 * (p.l_max() * p.mu() / (m * c)).sqrt();
        assert!((cfg.tau[0] - expect).abs() < 1e-14);
        // homogeneous L: the uniform rule gives the same pair
        let u = stepsizes_ab(&p, &SamplingScheme::uniform_nice(5, 3).unwrap()).unwrap();
        assert!((u.tau[0] - cfg.tau[0]).abs() < 1e-14);
        assert!((u.gamma - cfg.gamma).abs() < 1e-15);
    }

    #[test]
    fn uniform_rule_pair() {
        let p = diag_problem(&[50.0; 6], 1.0);
        let cfg = stepsizes_ab(&p, &SamplingScheme::uniform_nice(6, 2).unwrap()).unwrap();
        let l: f64 = 50.0;
        let g = 3.0 / 16.0 * (2.0 / (l * 1.0 * 6.0)).sqrt();
        let t = 8.0 / 3.0 * (l * 1.0 / (6.0 * 2.0)).sqrt();
        assert!((cfg.gamma - g).abs() < 1e-15);
        assert!(cfg.tau.iter().all(|&x| (x - t).abs() < 1e-14));
    }

    #[test]
    fn uniform_rule_uses_largest_smoothness() {
        let p = diag_problem(&[2.0, 10.0, 400.0], 1.0);
        let cfg = stepsizes_ab(&p, &SamplingScheme::uniform_nice(3, 1).unwrap()).unwrap();
        let t = 8.0 / 3.0 * (400.0f64 / 3.0).sqrt();
        assert!(cfg.tau.iter().all(|&x| (x - t).abs() < 1e-12));
        assert!((cfg.gamma - 1.0 / (2.0 * t * 3.0)).abs() < 1e-15);
    }

    #[test]
    fn multisampling_importance_gamma_is_balanced() {
        let p = diag_problem(&[2.0, 10.0, 400.0], 1.0);
        let (probs, tau) = importance_probs_exact(&p).unwrap();
        let s = SamplingScheme::multisampling(probs.clone(), 1).unwrap();
        let cfg = stepsizes_ab(&p, &s).unwrap();
        for (pm, t) in probs.iter().zip(&tau) {
            assert!((pm / (2.0 * t) - cfg.gamma).abs() < 1e-14);
        }
        for (a, b) in cfg.tau.iter().zip(&tau) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn independent_full_participation() {
        let p = diag_problem(&[3.0, 5.0], 1.0);
        let s = SamplingScheme::independent(vec![1.0, 1.0]).unwrap();
        let cfg = stepsizes_ab(&p, &s).unwrap();
        assert!((cfg.gamma - 1.0 / (2.0 * cfg.tau[0] * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn violations_detected() {
        let p = diag_problem(&[3.0, 5.0], 1.0);
        let s = SamplingScheme::uniform_nice(2, 1).unwrap();
        let mut cfg = stepsizes_ab(&p, &s).unwrap();
        cfg.gamma *= 3.0;
        assert!(matches!(check_ab(&p, &s, &cfg), Err(Error::Stepsize(_))));
        let small = StepsizeConfig::manual(1e-6, vec![1e-3; 2]).unwrap();
        assert!(check_ab(&p, &s, &small).is_err());
        let zero = SamplingScheme::multisampling(vec![1.0, 0.0], 1).unwrap();
        assert!(stepsizes_ab(&p, &zero).is_err());
    }
}
