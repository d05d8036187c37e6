//! Client objectives, their smoothness and strong-convexity constants, and
//! the lifted splitting `F_m(x) = (f_m(x) − (μ_m/2)‖x‖²) / M` used by the
//! round drivers.
//!
//! The lifting operator that stacks `M` copies of `x` is never built; every
//! consumer works with per-client `F_m` and sums over clients.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dataset::{ClientData, QuadraticSpec, Sample};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::vecops::{axpy, check_len, dot, norm_sq};

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 100_000;
const POWER_SEED: u64 = 0x5eed_0001;

#[derive(Debug, Clone)]
pub enum Loss {
    /// Mean logistic loss over the client's samples plus `(λ/2)‖x‖²`.
    Logistic {
        samples: Vec<Sample>,
        lambda: f64,
        /// `λ_max(AᵀA) / (4N)`, the data part of the smoothness constant.
        data_smoothness: f64,
    },
    /// `½ xᵀQx − cᵀx`.
    Quadratic { q: DMatrix<f64>, c: DVector<f64> },
}

#[derive(Debug, Clone)]
pub struct ClientObjective {
    loss: Loss,
    dim: usize,
    l: f64,
    mu: f64,
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    (-z.abs()).exp().ln_1p() + z.max(0.0)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Largest eigenvalue of `AᵀA` by power iteration, where the rows of `A`
/// are the samples' feature vectors.
pub fn gram_lambda_max(samples: &[Sample], dim: usize) -> Result<f64> {
    if dim == 0 || samples.iter().all(|s| s.features.iter().all(|&(_, v)| v == 0.0)) {
        return Ok(0.0);
    }
    let mut rng = seeded(POWER_SEED);
    let mut v: Vec<f64> = (0..dim).map(|_| 0.5 + rng.random::<f64>()).collect();
    let n0 = norm_sq(&v).sqrt();
    v.iter_mut().for_each(|x| *x /= n0);
    let mut w = vec![0.0; dim];
    let mut prev = 0.0;
    for _ in 0..POWER_MAX_ITER {
        w.iter_mut().for_each(|x| *x = 0.0);
        let mut rayleigh = 0.0;
        for s in samples {
            let av = s.dot(&v);
            rayleigh += av * av;
            for &(i, a) in &s.features {
                w[i - 1] += a * av;
            }
        }
        let nw = norm_sq(&w).sqrt();
        if nw == 0.0 {
            return Ok(0.0);
        }
        if (rayleigh - prev).abs() <= POWER_TOL * rayleigh {
            return Ok(rayleigh.max(prev));
        }
        prev = rayleigh;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    Err(Error::NoConvergence {
        what: "power iteration",
        iterations: POWER_MAX_ITER,
        residual: prev,
    })
}

/// `λ_max(AᵀA) / (4N)`.
pub fn data_smoothness(data: &ClientData) -> Result<f64> {
    if data.samples.is_empty() {
        return Ok(0.0);
    }
    Ok(gram_lambda_max(&data.samples, data.dim)? / (4.0 * data.samples.len() as f64))
}

impl ClientObjective {
    pub fn logistic(data: &ClientData, lambda: f64) -> Result<Self> {
        if data.samples.is_empty() {
            return Err(Error::invalid("logistic client needs at least one sample"));
        }
        let ds = data_smoothness(data)?;
        Self::logistic_with_smoothness(data, lambda, ds)
    }

    fn logistic_with_smoothness(data: &ClientData, lambda: f64, ds: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self {
            loss: Loss::Logistic {
                samples: data.samples.clone(),
                lambda,
                data_smoothness: ds,
            },
            dim: data.dim,
            l: lambda + ds,
            mu: lambda,
        })
    }

    pub fn quadratic(spec: &QuadraticSpec) -> Result<Self> {
        let d = spec.c.len();
        if spec.q.nrows() != d || spec.q.ncols() != d || d == 0 {
            return Err(Error::Dimension {
                expected: d,
                got: spec.q.nrows(),
            });
        }
        let asym = (&spec.q - spec.q.transpose()).amax();
        if asym > 1e-12 * spec.q.amax().max(1.0) {
            return Err(Error::invalid("quadratic matrix is not symmetric"));
        }
        let eig = spec.q.clone().symmetric_eigen().eigenvalues;
        Ok(Self {
            loss: Loss::Quadratic {
                q: spec.q.clone(),
                c: spec.c.clone(),
            },
            dim: d,
            l: eig.max(),
            mu: eig.min(),
        })
    }

    pub fn loss(&self) -> &Loss {
        &self.loss
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(L_m, μ_m)`.
    pub fn smoothness_constants(&self) -> (f64, f64) {
        (self.l, self.mu)
    }

    pub fn smoothness(&self) -> f64 {
        self.l
    }

    pub fn strong_convexity(&self) -> f64 {
        self.mu
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.loss, Loss::Quadratic { .. })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_len(x, self.dim)?;
        Ok(self.value_unchecked(x))
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.dim)?;
        let mut g = vec![0.0; self.dim];
        self.grad_into(x, &mut g);
        Ok(g)
    }

    pub(crate) fn value_unchecked(&self, x: &[f64]) -> f64 {
        match &self.loss {
            Loss::Logistic {
                samples, lambda, ..
            } => {
                let n = samples.len() as f64;
                let data: f64 = samples
                    .iter()
                    .map(|s| softplus(-(s.label as f64) * s.dot(x)))
                    .sum();
                data / n + 0.5 * lambda * norm_sq(x)
            }
            Loss::Quadratic { .. } => {
                let mut qx = vec![0.0; self.dim];
                self.quad_apply(x, &mut qx);
                0.5 * dot(x, &qx) - self.quad_c_dot(x)
            }
        }
    }

    /// `∇f_m(x)` written into `out`.
    pub(crate) fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        self.data_grad_into(x, out);
        let reg = match &self.loss {
            Loss::Logistic { lambda, .. } => *lambda,
            Loss::Quadratic { .. } => 0.0,
        };
        if reg != 0.0 {
            axpy(reg, x, out);
        }
    }

    /// Gradient without the explicit `λx` term (logistic) or the full
    /// `Qx − c` (quadratic).
    fn data_grad_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.loss {
            Loss::Logistic { samples, .. } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                let inv_n = 1.0 / samples.len() as f64;
                for s in samples {
                    let b = s.label as f64;
                    let coef = -b * sigmoid(-b * s.dot(x)) * inv_n;
                    for &(i, a) in &s.features {
                        out[i - 1] += coef * a;
                    }
                }
            }
            Loss::Quadratic { c, .. } => {
                self.quad_apply(x, out);
                for (o, ci) in out.iter_mut().zip(c.iter()) {
                    *o -= ci;
                }
            }
        }
    }

    /// `∇f_m(x) − shift·x`, computed without forming and cancelling a
    /// `λx` term when `shift` equals the regulariser.
    pub(crate) fn shifted_grad_into(&self, x: &[f64], shift: f64, out: &mut [f64]) {
        self.data_grad_into(x, out);
        let reg = match &self.loss {
            Loss::Logistic { lambda, .. } => *lambda,
            Loss::Quadratic { .. } => 0.0,
        };
        let net = reg - shift;
        if net != 0.0 {
            axpy(net, x, out);
        }
    }

    fn quad_apply(&self, x: &[f64], out: &mut [f64]) {
        if let Loss::Quadratic { q, .. } = &self.loss {
            // symmetric: column i of the column-major storage is row i
            let d = self.dim;
            let data = q.as_slice();
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(&data[i * d..(i + 1) * d], x);
            }
        }
    }

    fn quad_c_dot(&self, x: &[f64]) -> f64 {
        match &self.loss {
            Loss::Quadratic { c, .. } => dot(c.as_slice(), x),
            _ => 0.0,
        }
    }
}

/// `M` client objectives with the constants derived from them.
#[derive(Debug, Clone)]
pub struct Problem {
    clients: Vec<ClientObjective>,
    dim: usize,
}

impl Problem {
    pub fn new(clients: Vec<ClientObjective>) -> Result<Self> {
        let dim = clients
            .first()
            .map(ClientObjective::dim)
            .ok_or_else(|| Error::invalid("problem needs at least one client"))?;
        if let Some(c) = clients.iter().find(|c| c.dim != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: c.dim,
            });
        }
        for (m, c) in clients.iter().enumerate() {
            if !(c.mu > 0.0) || c.l < c.mu {
                return Err(Error::invalid(format!(
                    "client {m} violates 0 < mu <= L (mu = {}, L = {})",
                    c.mu, c.l
                )));
            }
        }
        Ok(Self { clients, dim })
    }

    pub fn quadratic(specs: &[QuadraticSpec]) -> Result<Self> {
        Self::new(specs.iter().map(ClientObjective::quadratic).collect::<Result<_>>()?)
    }

    /// Logistic clients with `λ` chosen so that `L_max / μ = kappa`.
    pub fn logistic(data: &[ClientData], kappa: f64) -> Result<Self> {
        let (lambda, ds) = kappa_lambda(data, kappa)?;
        Self::new(
            data.iter()
                .zip(ds)
                .map(|(c, s)| ClientObjective::logistic_with_smoothness(c, lambda, s))
                .collect::<Result<_>>()?,
        )
    }

    /// Logistic clients with a fixed regulariser.
    pub fn logistic_with_lambda(data: &[ClientData], lambda: f64) -> Result<Self> {
        Self::new(
            data.iter()
                .map(|c| ClientObjective::logistic(c, lambda))
                .collect::<Result<_>>()?,
        )
    }

    /// Resets `λ := L_data,max / (κ − 1)` on every logistic client, so that
    /// `L_max / μ = κ` with `μ = λ`.
    pub fn set_kappa(&mut self, kappa: f64) -> Result<()> {
        if !(kappa > 1.0) {
            return Err(Error::invalid(format!("kappa must exceed 1, got {kappa}")));
        }
        let mut lmax_data: f64 = 0.0;
        for c in &self.clients {
            match &c.loss {
                Loss::Logistic {
                    data_smoothness, ..
                } => lmax_data = lmax_data.max(*data_smoothness),
                Loss::Quadratic { .. } => {
                    return Err(Error::invalid("set_kappa applies to logistic problems only"))
                }
            }
        }
        if !(lmax_data > 0.0) {
            return Err(Error::invalid("data smoothness is zero; kappa is undefined"));
        }
        let lambda = lmax_data / (kappa - 1.0);
        for c in &mut self.clients {
            if let Loss::Logistic {
                lambda: l,
                data_smoothness,
                ..
            } = &mut c.loss
            {
                *l = lambda;
                c.l = lambda + *data_smoothness;
                c.mu = lambda;
            }
        }
        Ok(())
    }

    pub fn clients(&self) -> &[ClientObjective] {
        &self.clients
    }

    pub fn client(&self, m: usize) -> Result<&ClientObjective> {
        self.clients.get(m).ok_or(Error::ClientIndex {
            index: m,
            clients: self.clients.len(),
        })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mean of `μ_m`.
    pub fn mu(&self) -> f64 {
        self.clients.iter().map(|c| c.mu).sum::<f64>() / self.clients.len() as f64
    }

    /// Mean of `L_m`.
    pub fn l_bar(&self) -> f64 {
        self.clients.iter().map(|c| c.l).sum::<f64>() / self.clients.len() as f64
    }

    pub fn l_max(&self) -> f64 {
        self.clients.iter().map(|c| c.l).fold(f64::MIN, f64::max)
    }

    pub fn l_min(&self) -> f64 {
        self.clients.iter().map(|c| c.l).fold(f64::MAX, f64::min)
    }

    pub fn l_vec(&self) -> Vec<f64> {
        self.clients.iter().map(|c| c.l).collect()
    }

    /// `L_{F,m} = (L_m − μ_m) / M`.
    pub fn l_f(&self, m: usize) -> f64 {
        let c = &self.clients[m];
        (c.l - c.mu) / self.clients.len() as f64
    }

    pub fn l_f_vec(&self) -> Vec<f64> {
        (0..self.clients.len()).map(|m| self.l_f(m)).collect()
    }

    pub fn l_f_max(&self) -> f64 {
        self.l_f_vec().into_iter().fold(0.0, f64::max)
    }

    /// Regulariser shared by logistic clients, if any.
    pub fn lambda(&self) -> Option<f64> {
        match self.clients.first().map(|c| &c.loss) {
            Some(Loss::Logistic { lambda, .. }) => Some(*lambda),
            _ => None,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        self.clients.iter().all(ClientObjective::is_quadratic)
    }

    /// `f(x) = (1/M) Σ f_m(x)`.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_len(x, self.dim)?;
        Ok(self.clients.iter().map(|c| c.value_unchecked(x)).sum::<f64>()
            / self.clients.len() as f64)
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.dim)?;
        let mut g = vec![0.0; self.dim];
        let mut buf = vec![0.0; self.dim];
        for c in &self.clients {
            c.grad_into(x, &mut buf);
            axpy(1.0, &buf, &mut g);
        }
        let inv = 1.0 / self.clients.len() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        Ok(g)
    }

    /// `F_m(x)`.
    pub fn lifted_value(&self, m: usize, x: &[f64]) -> Result<f64> {
        let c = self.client(m)?;
        check_len(x, self.dim)?;
        Ok((c.value_unchecked(x) - 0.5 * c.mu * norm_sq(x)) / self.clients.len() as f64)
    }

    /// `∇F_m(x) = (∇f_m(x) − μ_m x) / M`.
    pub fn lifted_grad(&self, m: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.client(m)?;
        check_len(x, self.dim)?;
        let mut g = vec![0.0; self.dim];
        self.lifted_grad_into(m, x, &mut g);
        Ok(g)
    }

    pub(crate) fn lifted_grad_into(&self, m: usize, x: &[f64], out: &mut [f64]) {
        let c = &self.clients[m];
        c.shifted_grad_into(x, c.mu, out);
        let inv = 1.0 / self.clients.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv);
    }

    /// Per-client `(Q_F, c_F)` with `∇F_m(y) = Q_F y − c_F`, for quadratic clients.
    pub fn lifted_quadratic(&self, m: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let c = self.client(m)?;
        match &c.loss {
            Loss::Quadratic { q, c: lin } => {
                let inv = 1.0 / self.clients.len() as f64;
                let qf = (q - DMatrix::identity(self.dim, self.dim) * c.mu) * inv;
                Ok((qf, lin * inv))
            }
            Loss::Logistic { .. } => Err(Error::invalid(format!("client {m} is not quadratic"))),
        }
    }
}

fn kappa_lambda(data: &[ClientData], kappa: f64) -> Result<(f64, Vec<f64>)> {
    if !(kappa > 1.0) {
        return Err(Error::invalid(format!("kappa must exceed 1, got {kappa}")));
    }
    let ds = data.iter().map(data_smoothness).collect::<Result<Vec<_>>>()?;
    let lmax = ds.iter().cloned().fold(0.0, f64::max);
    if !(lmax > 0.0) {
        return Err(Error::invalid("data smoothness is zero; kappa is undefined"));
    }
    Ok((lmax / (kappa - 1.0), ds))
}

/// Scales each client's feature values so that the data smoothness
/// constants become geometrically spaced from `lo` (client 0) to `hi`
/// (client M−1). Returns the per-client multiplicative factors.
pub fn rescale_smoothness(data: &mut [ClientData], lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::invalid("rescale bounds must satisfy 0 < lo <= hi"));
    }
    let m_total = data.len();
    let mut factors = Vec::with_capacity(m_total);
    for (m, client) in data.iter_mut().enumerate() {
        let current = data_smoothness(client)?;
        if !(current > 0.0) {
            return Err(Error::invalid(format!("client {m} has zero data smoothness")));
        }
        let t = if m_total > 1 {
            m as f64 / (m_total - 1) as f64
        } else {
            1.0
        };
        let target = lo * (hi / lo).powf(t);
        let s = (target / current).sqrt();
        for sample in &mut client.samples {
            for f in &mut sample.features {
                f.1 *= s;
            }
        }
        factors.push(s);
    }
    Ok(factors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_onehot_binary, synth_problem, partition_clients, SynthSpec};
    use rand_distr::StandardNormal;

    fn logistic_client(seed: u64, n: usize, d: usize, lambda: f64) -> ClientObjective {
        let mut rng = seeded(seed);
        let samples = (0..n)
            .map(|_| {
                let mut feats = Vec::new();
                for i in 1..=d {
                    if rng.random::<f64>() < 0.6 {
                        feats.push((i, 2.0 * rng.random::<f64>() - 1.0));
                    }
                }
                let label = if rng.random::<bool>() { 1 } else { -1 };
                Sample::new(label, feats).unwrap()
            })
            .collect();
        ClientObjective::logistic(&ClientData { samples, dim: d }, lambda).unwrap()
    }

    fn randvec(rng: &mut impl Rng, d: usize, s: f64) -> Vec<f64> {
        (0..d).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>()
    }

    #[test]
    fn logistic_at_zero() {
        let c = logistic_client(1, 7, 5, 0.3);
        assert!((c.value(&[0.0; 5]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let g = c.grad(&[0.0; 5]).unwrap();
        let Loss::Logistic { samples, .. } = c.loss() else { unreachable!() };
        let mut expect = [0.0; 5];
        for s in samples {
            for &(i, a) in &s.features {
                expect[i - 1] -= s.label as f64 * a / (2.0 * samples.len() as f64);
            }
        }
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(700.0) - 700.0).abs() < 1e-12);
        assert!(softplus(-700.0) > 0.0 && softplus(-700.0) < 1e-300);
        assert!(softplus(800.0).is_finite());
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn quadratic_value_and_grad() {
        let spec = QuadraticSpec {
            q: DMatrix::identity(3, 3),
            c: DVector::zeros(3),
        };
        let c = ClientObjective::quadratic(&spec).unwrap();
        assert_eq!(c.value(&[1.0, 0.0, 0.0]).unwrap(), 0.5);
        let spec = QuadraticSpec {
            q: DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]),
            c: DVector::from_vec(vec![1.0, -1.0]),
        };
        let c = ClientObjective::quadratic(&spec).unwrap();
        assert_eq!(c.grad(&[1.0, 2.0]).unwrap(), vec![2.0 + 2.0 - 1.0, 1.0 + 6.0 + 1.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let c = logistic_client(2, 3, 4, 0.1);
        assert!(matches!(c.value(&[0.0; 3]), Err(Error::Dimension { .. })));
        assert!(c.grad(&[0.0; 5]).is_err());
    }

    #[test]
    fn smoothness_single_sample() {
        let data = ClientData {
            samples: vec![Sample::new(1, vec![(1, 1.0)]).unwrap()],
            dim: 3,
        };
        let c = ClientObjective::logistic(&data, 0.0).unwrap();
        let (l, mu) = c.smoothness_constants();
        assert!((l - 0.25).abs() < 1e-12);
        assert_eq!(mu, 0.0);
    }

    #[test]
    fn smoothness_zero_data() {
        let data = ClientData {
            samples: vec![Sample::new(1, vec![(2, 0.0)]).unwrap(); 3],
            dim: 3,
        };
        let c = ClientObjective::logistic(&data, 0.1).unwrap();
        assert_eq!(c.smoothness_constants(), (0.1, 0.1));
    }

    #[test]
    fn smoothness_diag_quadratic() {
        let spec = QuadraticSpec {
            q: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 10.0])),
            c: DVector::zeros(2),
        };
        let (l, mu) = ClientObjective::quadratic(&spec).unwrap().smoothness_constants();
        assert!((l - 10.0).abs() < 1e-12 && (mu - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_matches_dense_eigen() {
        let c = logistic_client(5, 12, 9, 0.0);
        let Loss::Logistic { samples, data_smoothness, .. } = c.loss() else { unreachable!() };
        let a = DMatrix::from_fn(samples.len(), 9, |r, j| {
            samples[r]
                .features
                .iter()
                .find(|f| f.0 == j + 1)
                .map_or(0.0, |f| f.1)
        });
        let ata = a.transpose() * &a;
        let emax = ata.symmetric_eigen().eigenvalues.max();
        assert!((data_smoothness * 4.0 * 12.0 / emax - 1.0).abs() < 1e-8);
    }

    #[test]
    fn lifted_grad_edge_cases() {
        // M = 1, mu = 0: F_1 = f_1
        let c = logistic_client(3, 5, 4, 0.0);
        let x = [0.3, -0.2, 0.1, 0.5];
        let g = c.grad(&x).unwrap();
        let p = Problem { clients: vec![c], dim: 4 };
        assert_eq!(p.lifted_grad(0, &x).unwrap(), g);
        // f = (L/2)‖x‖² with mu = L: F constant
        let spec = QuadraticSpec {
            q: DMatrix::identity(4, 4) * 3.0,
            c: DVector::zeros(4),
        };
        let p = Problem::quadratic(&[spec.clone(), spec]).unwrap();
        assert!(p.lifted_grad(1, &x).unwrap().iter().all(|v| v.abs() < 1e-15));
        assert!(matches!(p.lifted_grad(2, &x), Err(Error::ClientIndex { .. })));
    }

    #[test]
    fn kappa_setting() {
        let s = synth_onehot_binary(60, 1);
        let parts = partition_clients(&s, 119, 4, 15).unwrap();
        let mut p = Problem::logistic(&parts, 1e4).unwrap();
        assert!((p.l_max() / p.mu() / 1e4 - 1.0).abs() < 1e-9);
        p.set_kappa(2.0).unwrap();
        let lmax_data = p.l_max() - p.mu();
        assert!((p.lambda().unwrap() - lmax_data).abs() < 1e-12 * lmax_data);
        assert!((p.l_max() / p.mu() - 2.0).abs() < 1e-12);
        assert!(p.set_kappa(1.0).is_err());
        // algebra: L_data,max = 9999 λ → κ = 1e4
        p.set_kappa(1e4).unwrap();
        let lam = p.lambda().unwrap();
        assert!(((p.l_max() - lam) / lam - 9999.0).abs() < 1e-6);
    }

    #[test]
    fn rescale_spreads_smoothness() {
        let s = synth_onehot_binary(150, 2);
        let mut parts = partition_clients(&s, 119, 10, 15).unwrap();
        rescale_smoothness(&mut parts, 1.5, 2e4).unwrap();
        let l: Vec<f64> = parts.iter().map(|c| data_smoothness(c).unwrap()).collect();
        assert!((l[0] / 1.5 - 1.0).abs() < 1e-8);
        assert!((l[9] / 2e4 - 1.0).abs() < 1e-8);
    }

    fn test_problem() -> Problem {
        let specs = synth_problem(&SynthSpec {
            clients: 4,
            dim: 6,
            kappa: 30.0,
            heterogeneity: 5.0,
            seed: 11,
        })
        .unwrap();
        Problem::quadratic(&specs).unwrap()
    }

    #[test]
    fn strong_convexity_and_smoothness_sandwich() {
        let mut rng = seeded(21);
        let lp = {
            let c = (0..3).map(|s| logistic_client(100 + s, 8, 6, 0.05)).collect();
            Problem::new(c).unwrap()
        };
        for p in [test_problem(), lp] {
            for c in p.clients() {
                let (l, mu) = c.smoothness_constants();
                for _ in 0..100 {
                    let x = randvec(&mut rng, 6, 1.0);
                    let y = randvec(&mut rng, 6, 1.0);
                    let gap = c.value(&x).unwrap()
                        - c.value(&y).unwrap()
                        - dot(&c.grad(&y).unwrap(), &crate::vecops::sub(&x, &y));
                    let dsq = crate::vecops::dist_sq(&x, &y);
                    let tol = 1e-12 * (1.0 + gap.abs());
                    assert!(gap >= 0.5 * mu * dsq - tol, "{gap} < {}", 0.5 * mu * dsq);
                    assert!(gap <= 0.5 * l * dsq + tol, "{gap} > {}", 0.5 * l * dsq);
                }
            }
        }
    }

    #[test]
    fn lifted_gradient_cocoercive() {
        let p = test_problem();
        let mut rng = seeded(8);
        for m in 0..p.num_clients() {
            let lf = p.l_f(m);
            for _ in 0..100 {
                let x = randvec(&mut rng, 6, 2.0);
                let y = randvec(&mut rng, 6, 2.0);
                let gd = crate::vecops::sub(&p.lifted_grad(m, &x).unwrap(), &p.lifted_grad(m, &y).unwrap());
                let lhs = norm_sq(&gd) / lf;
                let rhs = dot(&gd, &crate::vecops::sub(&x, &y));
                assert!(lhs <= rhs + 1e-10, "{lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn lifted_sum_identity() {
        let p = test_problem();
        let mut rng = seeded(9);
        for _ in 0..20 {
            let x = randvec(&mut rng, 6, 1.5);
            let lifted: f64 = (0..4).map(|m| p.lifted_value(m, &x).unwrap()).sum::<f64>()
                + 0.5 * p.mu() * norm_sq(&x);
            let direct = p.value(&x).unwrap();
            assert!((lifted - direct).abs() <= 1e-10 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn derived_constants() {
        let p = test_problem();
        let l = p.l_vec();
        assert!((p.l_bar() - l.iter().sum::<f64>() / 4.0).abs() < 1e-12);
        assert!((p.l_max() - 30.0).abs() < 1e-9);
        assert!((p.mu() - 1.0).abs() < 1e-9);
        assert!(p.l_f_vec().iter().all(|&v| v >= 0.0));
    }
}
