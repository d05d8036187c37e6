//! Client sampling schemes, their unbiased estimators of `ā = (1/M) Σ a_m`,
//! weighted AB variance constants, participation probabilities, and the
//! importance probabilities used with single-client multisampling.
//!
//! Each scheme satisfies
//!
//! ```text
//! E‖S(a) − ā‖² ≤ (A/M²) Σ ‖a_m‖²/w_m − B‖ā‖²
//! ```
//!
//! and for all three schemes here the bound is attained with equality.

use itertools::Itertools;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compress::random_subset;
use crate::error::{Error, Result};
use crate::objective::Problem;
use crate::vecops::{axpy, dist_sq, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Uniformly random `C`-subset without replacement.
    UniformNice,
    /// `C` i.i.d. categorical draws with replacement.
    Multisampling,
    /// Independent Bernoulli(`p_m`) participation.
    Independent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingScheme {
    kind: SchemeKind,
    clients: usize,
    cohort: usize,
    p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ABConstants {
    pub a: f64,
    pub b: f64,
    pub w: Vec<f64>,
    /// `A / w_m`, with clients that participate surely contributing 0.
    pub a_over_w: Vec<f64>,
}

/// One cohort. `members[j]` enters the estimator with coefficient
/// `weights[j]`; multisampling may repeat a member.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortDraw {
    pub members: Vec<usize>,
    pub weights: Vec<f64>,
}

impl CohortDraw {
    pub fn distinct(&self) -> Vec<usize> {
        let mut v = self.members.clone();
        v.dedup();
        v
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

impl SamplingScheme {
    pub fn uniform_nice(clients: usize, cohort: usize) -> Result<Self> {
        if cohort == 0 || cohort > clients {
            return Err(Error::invalid(format!(
                "cohort size must be in 1..={clients}, got {cohort}"
            )));
        }
        Ok(Self {
            kind: SchemeKind::UniformNice,
            clients,
            cohort,
            p: vec![cohort as f64 / clients as f64; clients],
        })
    }

    /// `p` must lie in the simplex. Zero entries are accepted for drawing but
    /// make the AB constants unusable for stepsizes.
    pub fn multisampling(p: Vec<f64>, cohort: usize) -> Result<Self> {
        if p.is_empty() || cohort == 0 {
            return Err(Error::invalid("multisampling needs clients and a positive cohort size"));
        }
        if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("probabilities must be finite and nonnegative"));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities must sum to 1, got {s}")));
        }
        Ok(Self {
            kind: SchemeKind::Multisampling,
            clients: p.len(),
            cohort,
            p,
        })
    }

    pub fn independent(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid("independent sampling needs at least one client"));
        }
        if p.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
            return Err(Error::invalid("independent probabilities must lie in (0, 1]"));
        }
        Ok(Self {
            kind: SchemeKind::Independent,
            clients: p.len(),
            cohort: 0,
            p,
        })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn num_clients(&self) -> usize {
        self.clients
    }

    /// Cohort size; for independent sampling the expected size `Σ p_m`.
    pub fn cohort(&self) -> f64 {
        match self.kind {
            SchemeKind::Independent => self.p.iter().sum(),
            _ => self.cohort as f64,
        }
    }

    pub fn cohort_size(&self) -> usize {
        self.cohort
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn ab_constants(&self) -> ABConstants {
        let m = self.clients;
        match self.kind {
            SchemeKind::UniformNice => {
                let c = self.cohort;
                let a = (m - c) as f64 / (c as f64 * (m.max(2) - 1) as f64);
                let w = vec![1.0 / m as f64; m];
                ABConstants {
                    a,
                    b: a,
                    a_over_w: vec![a * m as f64; m],
                    w,
                }
            }
            SchemeKind::Multisampling => {
                let a = 1.0 / self.cohort as f64;
                ABConstants {
                    a,
                    b: a,
                    a_over_w: self.p.iter().map(|&p| a / p).collect(),
                    w: self.p.clone(),
                }
            }
            SchemeKind::Independent => {
                let odds: Vec<f64> = self
                    .p
                    .iter()
                    .map(|&p| if p < 1.0 { p / (1.0 - p) } else { 0.0 })
                    .collect();
                let total: f64 = odds.iter().sum();
                if total == 0.0 {
                    return ABConstants {
                        a: 0.0,
                        b: 0.0,
                        w: vec![1.0 / m as f64; m],
                        a_over_w: vec![0.0; m],
                    };
                }
                let a = 1.0 / total;
                let w: Vec<f64> = odds.iter().map(|o| o / total).collect();
                // A / w_m = (1 − p_m) / p_m, and 0 for p_m = 1
                let a_over_w = self
                    .p
                    .iter()
                    .map(|&p| if p < 1.0 { (1.0 - p) / p } else { 0.0 })
                    .collect();
                ABConstants { a, b: 0.0, w, a_over_w }
            }
        }
    }

    /// Probability that client `m` appears in the cohort at least once.
    pub fn participation_prob(&self) -> Vec<f64> {
        match self.kind {
            SchemeKind::UniformNice => vec![self.cohort as f64 / self.clients as f64; self.clients],
            SchemeKind::Multisampling => self
                .p
                .iter()
                .map(|&p| 1.0 - (1.0 - p).powi(self.cohort as i32))
                .collect(),
            SchemeKind::Independent => self.p.clone(),
        }
    }

    fn member_weight(&self, m: usize) -> f64 {
        let mm = self.clients as f64;
        match self.kind {
            SchemeKind::UniformNice => 1.0 / self.cohort as f64,
            SchemeKind::Multisampling => 1.0 / (self.cohort as f64 * mm * self.p[m]),
            SchemeKind::Independent => 1.0 / (mm * self.p[m]),
        }
    }

    fn make_draw(&self, mut members: Vec<usize>) -> CohortDraw {
        members.sort_unstable();
        let weights = members.iter().map(|&m| self.member_weight(m)).collect();
        CohortDraw { members, weights }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> CohortDraw {
        let members = match self.kind {
            SchemeKind::UniformNice => random_subset(self.clients, self.cohort, rng),
            SchemeKind::Multisampling => {
                let dist = WeightedIndex::new(&self.p).expect("validated probabilities");
                (0..self.cohort).map(|_| dist.sample(rng)).collect()
            }
            SchemeKind::Independent => (0..self.clients)
                .filter(|&m| rng.random::<f64>() < self.p[m])
                .collect(),
        };
        self.make_draw(members)
    }

    /// `S(a_1, …, a_M)` for a given draw.
    pub fn estimate(&self, draw: &CohortDraw, a: &[Vec<f64>]) -> Result<Vec<f64>> {
        if a.len() != self.clients {
            return Err(Error::Dimension {
                expected: self.clients,
                got: a.len(),
            });
        }
        let d = a[0].len();
        if let Some(v) = a.iter().find(|v| v.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; d];
        for (&m, &w) in draw.members.iter().zip(&draw.weights) {
            axpy(w, &a[m], &mut out);
        }
        Ok(out)
    }

    /// Every cohort with its probability, in lexicographic order.
    pub fn enumerate(&self) -> Result<Vec<(f64, CohortDraw)>> {
        let m = self.clients;
        if m > 6 || (self.kind == SchemeKind::Multisampling && self.cohort > 3) {
            return Err(Error::invalid(
                "enumeration limited to M <= 6 (and C <= 3 for multisampling)",
            ));
        }
        let out = match self.kind {
            SchemeKind::UniformNice => {
                let subsets: Vec<Vec<usize>> = (0..m).combinations(self.cohort).collect();
                let pr = 1.0 / subsets.len() as f64;
                subsets.into_iter().map(|s| (pr, self.make_draw(s))).collect()
            }
            SchemeKind::Multisampling => (0..self.cohort)
                .map(|_| 0..m)
                .multi_cartesian_product()
                .map(|t| {
                    let pr: f64 = t.iter().map(|&i| self.p[i]).product();
                    (pr, self.make_draw(t))
                })
                .filter(|(pr, _)| *pr > 0.0)
                .collect(),
            SchemeKind::Independent => (0..1u32 << m)
                .map(|mask| {
                    let members: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
                    let pr: f64 = (0..m)
                        .map(|i| if mask >> i & 1 == 1 { self.p[i] } else { 1.0 - self.p[i] })
                        .product();
                    (pr, self.make_draw(members))
                })
                .filter(|(pr, _)| *pr > 0.0)
                .sorted_by(|a, b| a.1.members.cmp(&b.1.members))
                .collect(),
        };
        Ok(out)
    }

    /// Right-hand side of the weighted AB inequality.
    pub fn ab_bound(&self, a: &[Vec<f64>]) -> f64 {
        let ab = self.ab_constants();
        let m = self.clients as f64;
        let spread: f64 = a
            .iter()
            .zip(&ab.a_over_w)
            .map(|(v, aw)| if *aw == 0.0 { 0.0 } else { aw * norm_sq(v) })
            .sum();
        spread / (m * m) - ab.b * norm_sq(&mean(a))
    }
}

pub fn mean(a: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; a[0].len()];
    for v in a {
        axpy(1.0 / a.len() as f64, v, &mut out);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyMode {
    Enumerate,
    MonteCarlo { trials: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbReport {
    /// `E‖S(a) − ā‖²` (exact or estimated).
    pub lhs: f64,
    /// `(A/M²) Σ ‖a_m‖²/w_m − B‖ā‖²`.
    pub rhs: f64,
    /// `‖E S(a) − ā‖∞`; estimated in Monte Carlo mode.
    pub bias: f64,
    /// Standard error of `lhs` in Monte Carlo mode, 0 otherwise.
    pub std_err: f64,
    pub pass: bool,
}

const ENUM_TOL: f64 = 1e-12;

/// Checks unbiasedness and the AB identity for the vectors `a`.
pub fn verify_ab<R: Rng + ?Sized>(
    s: &SamplingScheme,
    a: &[Vec<f64>],
    mode: VerifyMode,
    rng: &mut R,
) -> Result<AbReport> {
    if a.len() != s.clients {
        return Err(Error::Dimension {
            expected: s.clients,
            got: a.len(),
        });
    }
    let abar = mean(a);
    let rhs = s.ab_bound(a);
    let scale = 1.0 + rhs.abs() + norm_sq(&abar) + a.iter().map(|v| norm_sq(v)).sum::<f64>();
    match mode {
        VerifyMode::Enumerate => {
            let mut lhs = 0.0;
            let mut expect = vec![0.0; abar.len()];
            for (pr, draw) in s.enumerate()? {
                let est = s.estimate(&draw, a)?;
                lhs += pr * dist_sq(&est, &abar);
                axpy(pr, &est, &mut expect);
            }
            let bias = expect
                .iter()
                .zip(&abar)
                .map(|(e, m)| (e - m).abs())
                .fold(0.0, f64::max);
            let pass = (lhs - rhs).abs() <= ENUM_TOL * scale && bias <= ENUM_TOL * scale.sqrt();
            Ok(AbReport {
                lhs,
                rhs,
                bias,
                std_err: 0.0,
                pass,
            })
        }
        VerifyMode::MonteCarlo { trials } => {
            if trials < 2 {
                return Err(Error::invalid("Monte Carlo verification needs >= 2 trials"));
            }
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut expect = vec![0.0; abar.len()];
            for _ in 0..trials {
                let draw = s.draw(rng);
                let est = s.estimate(&draw, a)?;
                let e = dist_sq(&est, &abar);
                sum += e;
                sum_sq += e * e;
                axpy(1.0 / trials as f64, &est, &mut expect);
            }
            let n = trials as f64;
            let lhs = sum / n;
            let var = ((sum_sq - n * lhs * lhs) / (n - 1.0)).max(0.0);
            let std_err = (var / n).sqrt();
            let bias = expect
                .iter()
                .zip(&abar)
                .map(|(e, m)| (e - m).abs())
                .fold(0.0, f64::max);
            let pass = (lhs - rhs).abs() <= 5.0 * std_err + ENUM_TOL * scale;
            Ok(AbReport {
                lhs,
                rhs,
                bias,
                std_err,
                pass,
            })
        }
    }
}

/// `(1/C) [ (1/M²) Σ ‖a_m‖²/p_m − ‖ā‖² ]`.
pub fn multisampling_variance(p: &[f64], cohort: usize, a: &[Vec<f64>]) -> f64 {
    let m = a.len() as f64;
    let s: f64 = a.iter().zip(p).map(|(v, &pm)| norm_sq(v) / pm).sum();
    (s / (m * m) - norm_sq(&mean(a))) / cohort as f64
}

/// `(1/M²) Σ (1/p_m − 1) ‖a_m‖²`.
pub fn independent_variance(p: &[f64], a: &[Vec<f64>]) -> f64 {
    let m = a.len() as f64;
    a.iter()
        .zip(p)
        .map(|(v, &pm)| (1.0 / pm - 1.0) * norm_sq(v))
        .sum::<f64>()
        / (m * m)
}

/// Importance probabilities and dual stepsizes for `C = 1`:
/// `p_m ∝ √L_m`, `τ_m = (8/3) √(L̄ μ M) p_m`.
pub fn importance_probs_exact(problem: &Problem) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = problem.num_clients() as f64;
    let roots: Vec<f64> = problem.l_vec().iter().map(|&l| (l / m).sqrt()).collect();
    let total: f64 = roots.iter().sum();
    let p: Vec<f64> = roots.iter().map(|r| r / total).collect();
    let scale = 8.0 / 3.0 * (problem.l_bar() * problem.mu() * m).sqrt();
    let tau: Vec<f64> = p.iter().map(|pm| scale * pm).collect();
    check_tau_floor(problem, &tau)?;
    Ok((p, tau))
}

fn check_tau_floor(problem: &Problem, tau: &[f64]) -> Result<()> {
    let m = problem.num_clients() as f64;
    for (i, (c, &t)) in problem.clients().iter().zip(tau).enumerate() {
        let floor = 8.0 * c.strong_convexity() / (3.0 * m);
        if t < floor {
            return Err(Error::Stepsize(format!(
                "tau_{i} = {t:e} is below 8 mu_m / (3M) = {floor:e}"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub p: Vec<f64>,
    pub tau: Vec<f64>,
    pub iterations: usize,
    /// `max_m |p_m − √(L_F,m + τ_m) / Σ √(L_F,j + τ_j)|` at the returned pair.
    pub residual_p: f64,
    /// `max_m |τ_m − (8/3) √(L̄ μ M) p_m|`.
    pub residual_tau: f64,
}

fn normalized_roots(lf: &[f64], tau: &[f64]) -> Vec<f64> {
    let r: Vec<f64> = lf.iter().zip(tau).map(|(l, t)| (l + t).sqrt()).collect();
    if r.iter().all(|&x| x == r[0]) {
        // the summed normaliser can round away from M · r
        return vec![1.0 / r.len() as f64; r.len()];
    }
    let s: f64 = r.iter().sum();
    r.into_iter().map(|x| x / s).collect()
}

/// Solves `p_m = √(L_F,m + τ_m) / Σ_j √(L_F,j + τ_j)`,
/// `τ_m = (8/3) √(L̄ μ M) p_m` by plain fixed-point iteration from uniform `p`.
pub fn importance_probs_fixed_point(problem: &Problem, tol: f64, max_iter: usize) -> Result<FixedPoint> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    let m = problem.num_clients();
    let lf = problem.l_f_vec();
    let scale = 8.0 / 3.0 * (problem.l_bar() * problem.mu() * m as f64).sqrt();
    let mut p = vec![1.0 / m as f64; m];
    let mut diff = f64::INFINITY;
    for it in 1..=max_iter {
        let tau: Vec<f64> = p.iter().map(|x| scale * x).collect();
        let next = normalized_roots(&lf, &tau);
        diff = next
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        p = next;
        if diff <= tol {
            let tau: Vec<f64> = p.iter().map(|x| scale * x).collect();
            let check = normalized_roots(&lf, &tau);
            let residual_p = check
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            check_tau_floor(problem, &tau)?;
            return Ok(FixedPoint {
                p,
                tau,
                iterations: it,
                residual_p,
                residual_tau: 0.0,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "importance fixed point",
        iterations: max_iter,
        residual: diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::QuadraticSpec;
    use crate::rng::seeded;
    use nalgebra::{DMatrix, DVector};

    fn scalars(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn ab_constants_cases() {
        let s = SamplingScheme::multisampling(vec![0.2, 0.3, 0.5], 3).unwrap();
        let ab = s.ab_constants();
        assert!((ab.a - 1.0 / 3.0).abs() < 1e-15 && (ab.b - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(ab.w, vec![0.2, 0.3, 0.5]);

        let s = SamplingScheme::independent(vec![0.5, 0.5]).unwrap();
        let ab = s.ab_constants();
        assert_eq!((ab.a, ab.b), (0.5, 0.0));
        assert_eq!(ab.w, vec![0.5, 0.5]);

        let s = SamplingScheme::uniform_nice(4, 4).unwrap();
        let ab = s.ab_constants();
        assert_eq!((ab.a, ab.b), (0.0, 0.0));
    }

    #[test]
    fn uniform_stepsize_identity() {
        // (1 − B) M + A / w_m = M
        for (m, c) in [(5, 1), (5, 3), (10, 7), (2, 1)] {
            let ab = SamplingScheme::uniform_nice(m, c).unwrap().ab_constants();
            for aw in &ab.a_over_w {
                assert!(((1.0 - ab.b) * m as f64 + aw - m as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn independent_with_sure_clients() {
        let s = SamplingScheme::independent(vec![1.0, 0.5, 0.25]).unwrap();
        let ab = s.ab_constants();
        assert_eq!(ab.a_over_w[0], 0.0);
        assert!((ab.a - 1.0 / (1.0 + 1.0 / 3.0)).abs() < 1e-15);
        assert!((ab.w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let a = vec![vec![3.0], vec![1.0], vec![-2.0]];
        let r = verify_ab(&s, &a, VerifyMode::Enumerate, &mut seeded(0)).unwrap();
        assert!(r.pass, "{r:?}");
        let all = SamplingScheme::independent(vec![1.0; 3]).unwrap();
        assert_eq!(all.ab_constants().a, 0.0);
    }

    #[test]
    fn draws_degenerate_cases() {
        let mut rng = seeded(1);
        let s = SamplingScheme::uniform_nice(4, 4).unwrap();
        assert_eq!(s.draw(&mut rng).members, vec![0, 1, 2, 3]);
        let s = SamplingScheme::multisampling(vec![1.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(s.draw(&mut rng).members, vec![0, 0]);
        let s = SamplingScheme::independent(vec![1.0; 3]).unwrap();
        assert_eq!(s.draw(&mut rng).members, vec![0, 1, 2]);
    }

    #[test]
    fn uniform_estimate_exact_for_constant_inputs() {
        let s = SamplingScheme::uniform_nice(5, 2).unwrap();
        let a = vec![vec![1.5, -2.0]; 5];
        let mut rng = seeded(2);
        for _ in 0..20 {
            let d = s.draw(&mut rng);
            let e = s.estimate(&d, &a).unwrap();
            assert!((e[0] - 1.5).abs() < 1e-15 && (e[1] + 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn multisampling_two_outcomes() {
        let s = SamplingScheme::multisampling(vec![0.5, 0.5], 1).unwrap();
        let a = scalars(&[1.0, 3.0]);
        let outcomes = s.enumerate().unwrap();
        let vals: Vec<(f64, f64)> = outcomes
            .iter()
            .map(|(pr, d)| (*pr, s.estimate(d, &a).unwrap()[0]))
            .collect();
        assert_eq!(vals, vec![(0.5, 1.0), (0.5, 3.0)]);
        let r = verify_ab(&s, &a, VerifyMode::Enumerate, &mut seeded(0)).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-15 && (r.rhs - 1.0).abs() < 1e-15);
    }

    #[test]
    fn independent_four_outcomes() {
        let s = SamplingScheme::independent(vec![0.5, 0.5]).unwrap();
        let a = scalars(&[2.0, 4.0]);
        let mut vals: Vec<(f64, f64)> = s
            .enumerate()
            .unwrap()
            .iter()
            .map(|(pr, d)| (*pr, s.estimate(d, &a).unwrap()[0]))
            .collect();
        vals.sort_by(|x, y| x.1.partial_cmp(&y.1).unwrap());
        assert_eq!(vals, vec![(0.25, 0.0), (0.25, 2.0), (0.25, 4.0), (0.25, 6.0)]);
        let r = verify_ab(&s, &a, VerifyMode::Enumerate, &mut seeded(0)).unwrap();
        assert!((r.lhs - independent_variance(s.probs(), &a)).abs() < 1e-15);
    }

    #[test]
    fn zero_vectors() {
        let a = vec![vec![0.0, 0.0]; 3];
        for s in [
            SamplingScheme::uniform_nice(3, 2).unwrap(),
            SamplingScheme::multisampling(vec![0.2, 0.3, 0.5], 2).unwrap(),
            SamplingScheme::independent(vec![0.2, 0.9, 0.5]).unwrap(),
        ] {
            let r = verify_ab(&s, &a, VerifyMode::Enumerate, &mut seeded(0)).unwrap();
            assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        }
    }

    #[test]
    fn participation_probabilities() {
        let s = SamplingScheme::multisampling(vec![0.1, 0.2, 0.7], 1).unwrap();
        for (a, b) in s.participation_prob().iter().zip([0.1, 0.2, 0.7]) {
            assert!((a - b).abs() < 1e-15);
        }
        let s = SamplingScheme::multisampling(vec![0.5, 0.5], 2).unwrap();
        assert_eq!(s.participation_prob(), vec![0.75, 0.75]);
        let s = SamplingScheme::uniform_nice(3, 3).unwrap();
        assert_eq!(s.participation_prob(), vec![1.0; 3]);
    }

    #[test]
    fn participation_matches_frequency() {
        let schemes = [
            SamplingScheme::uniform_nice(5, 2).unwrap(),
            SamplingScheme::multisampling(vec![0.1, 0.2, 0.3, 0.4], 3).unwrap(),
            SamplingScheme::independent(vec![0.1, 0.5, 0.9]).unwrap(),
        ];
        let n = 100_000;
        let mut rng = seeded(42);
        for s in schemes {
            let mut counts = vec![0usize; s.num_clients()];
            for _ in 0..n {
                for m in s.draw(&mut rng).distinct() {
                    counts[m] += 1;
                }
            }
            for (c, p) in counts.iter().zip(s.participation_prob()) {
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!((*c as f64 / n as f64 - p).abs() <= 5.0 * se, "{c} vs {p}");
            }
        }
    }

    #[test]
    fn monte_carlo_verification() {
        let a = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, -2.0], vec![0.0, 1.0]];
        let mut rng = seeded(7);
        for s in [
            SamplingScheme::uniform_nice(4, 2).unwrap(),
            SamplingScheme::multisampling(vec![0.1, 0.2, 0.3, 0.4], 2).unwrap(),
            SamplingScheme::independent(vec![0.3, 0.6, 0.5, 0.8]).unwrap(),
        ] {
            let r = verify_ab(&s, &a, VerifyMode::MonteCarlo { trials: 20_000 }, &mut rng).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn enumeration_limits() {
        assert!(SamplingScheme::uniform_nice(7, 2).unwrap().enumerate().is_err());
        assert!(SamplingScheme::multisampling(vec![0.25; 4], 4).unwrap().enumerate().is_err());
    }

    fn diag_problem(ls: &[f64]) -> Problem {
        let specs: Vec<QuadraticSpec> = ls
            .iter()
            .map(|&l| QuadraticSpec {
                q: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, l])),
                c: DVector::zeros(2),
            })
            .collect();
        Problem::quadratic(&specs).unwrap()
    }

    #[test]
    fn exact_importance_probs() {
        let (p, tau) = importance_probs_exact(&diag_problem(&[1.0, 4.0, 9.0])).unwrap();
        for (a, b) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let ratio = tau[0] / p[0];
        assert!(tau.iter().zip(&p).all(|(t, q)| (t / q - ratio).abs() < 1e-12 * ratio));
        let (p, _) = importance_probs_exact(&diag_problem(&[5.0; 4])).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let (p, _) = importance_probs_exact(&diag_problem(&[3.0])).unwrap();
        assert_eq!(p, vec![1.0]);
    }

    #[test]
    fn fixed_point_cases() {
        let prob = diag_problem(&[7.0; 5]);
        let fp = importance_probs_fixed_point(&prob, 1e-12, 1000).unwrap();
        assert!(fp.p.iter().all(|&x| x == fp.p[0]));
        assert_eq!(fp.p[0], 0.2);
        let expect_tau = 8.0 / 3.0 * (prob.l_bar() * prob.mu() * 5.0).sqrt() / 5.0;
        assert!((fp.tau[0] - expect_tau).abs() < 1e-12);

        let prob = diag_problem(&[1.0, 1000.0]);
        let fp = importance_probs_fixed_point(&prob, 1e-12, 1000).unwrap();
        assert!(fp.p[1] > fp.p[0]);
        assert!(fp.residual_p <= 1e-11);
        assert!(matches!(
            importance_probs_fixed_point(&prob, 1e-12, 1),
            Err(Error::NoConvergence { .. })
        ));
    }
}
