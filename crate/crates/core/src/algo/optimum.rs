//! High-accuracy reference solutions `(x⋆, u⋆)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::objective::Problem;
use crate::vecops::{norm, sub};

const MAX_ITERS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: Vec<f64>,
    /// `u_m⋆ = ∇F_m(x⋆)`.
    pub u: Vec<Vec<f64>>,
    pub f: f64,
    pub grad_norm: f64,
}

impl Optimum {
    pub fn from_point(problem: &Problem, x: Vec<f64>) -> Result<Self> {
        let u = (0..problem.num_clients())
            .map(|m| problem.lifted_grad(m, &x))
            .collect::<Result<Vec<_>>>()?;
        let f = problem.value(&x)?;
        let grad_norm = norm(&problem.grad(&x)?);
        Ok(Self { x, u, f, grad_norm })
    }
}

/// Accelerated gradient descent with step `1/L_max`, momentum
/// `(√κ − 1)/(√κ + 1)` and gradient-based restarts, stopped once
/// `‖∇f(x)‖ ≤ tol · min(μ, 1)`.
pub fn reference_optimum(problem: &Problem, tol: f64) -> Result<Optimum> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let d = problem.dim();
    let l = problem.l_max();
    let kappa = l / problem.mu();
    let beta = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
    let target = tol * problem.mu().min(1.0);
    let mut x = vec![0.0; d];
    let mut y = x.clone();
    for _ in 0..MAX_ITERS {
        let g = problem.grad(&y)?;
        let x_next: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - gi / l).collect();
        let step = sub(&x_next, &x);
        // restart when the momentum direction opposes descent
        let restart = g.iter().zip(&step).map(|(a, b)| a * b).sum::<f64>() > 0.0;
        y = if restart {
            x_next.clone()
        } else {
            x_next.iter().zip(&step).map(|(xi, si)| xi + beta * si).collect()
        };
        x = x_next;
        let gx = problem.grad(&x)?;
        if norm(&gx) <= target {
            return Optimum::from_point(problem, x);
        }
    }
    let residual = norm(&problem.grad(&x)?);
    Err(Error::NoConvergence {
        what: "reference optimum",
        iterations: MAX_ITERS,
        residual,
    })
}

/// Dense solve of `(Σ Q_m) x = Σ c_m` for quadratic problems.
pub fn quadratic_optimum(problem: &Problem) -> Result<Optimum> {
    let d = problem.dim();
    let mut q = DMatrix::zeros(d, d);
    let mut c = DVector::zeros(d);
    for cl in problem.clients() {
        match cl.loss() {
            crate::objective::Loss::Quadratic { q: qm, c: cm } => {
                q += qm;
                c += cm;
            }
            _ => return Err(Error::invalid("dense optimum needs quadratic clients")),
        }
    }
    let chol = q
        .cholesky()
        .ok_or_else(|| Error::invalid("summed quadratic matrix is not positive definite"))?;
    Optimum::from_point(problem, chol.solve(&c).as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_problem, partition_clients, synth_onehot_binary, SynthSpec};
    use crate::vecops::{dist_sq, sum_all};

    #[test]
    fn agrees_with_dense_solve() {
        let specs = synth_problem(&SynthSpec {
            clients: 5,
            dim: 8,
            kappa: 200.0,
            heterogeneity: 20.0,
            seed: 3,
        })
        .unwrap();
        let p = Problem::quadratic(&specs).unwrap();
        let a = reference_optimum(&p, 1e-12).unwrap();
        let b = quadratic_optimum(&p).unwrap();
        assert!(dist_sq(&a.x, &b.x).sqrt() < 1e-10);
        assert!((a.f - b.f).abs() < 1e-10);
    }

    #[test]
    fn first_order_condition() {
        let s = synth_onehot_binary(200, 1);
        let data = partition_clients(&s, 119, 4, 50).unwrap();
        let p = Problem::logistic(&data, 50.0).unwrap();
        let o = reference_optimum(&p, 1e-10).unwrap();
        let su = sum_all(&o.u, p.dim());
        let r: f64 = o
            .x
            .iter()
            .zip(&su)
            .map(|(x, u)| (p.mu() * x + u).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(r < 1e-9, "residual {r}");
    }
}
