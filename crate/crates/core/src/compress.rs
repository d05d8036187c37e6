//! Unbiased compressors with certified conic variance.
//!
//! A compressor `Q` is unbiased, `E Q(x) = x`, and has conic variance
//! `E‖Q(x) − x‖² ≤ ω‖x‖²`. Rand-k keeps a uniformly random `k`-subset of
//! coordinates scaled by `d/k`, for which the bound holds with equality at
//! `ω = d/k − 1`.

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops::{check_len, dist_sq, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorKind {
    Identity,
    RandK { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compressor {
    kind: CompressorKind,
    dim: usize,
    omega: f64,
}

/// Sparse message: `values[j]` sits at coordinate `indices[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedUpdate {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    /// 64-bit values charged to the link: `k` for rand-k, `d` for identity.
    pub payload_floats: usize,
}

impl Compressor {
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: CompressorKind::Identity,
            dim,
            omega: 0.0,
        }
    }

    pub fn rand_k(k: usize, dim: usize) -> Result<Self> {
        if k == 0 || k > dim {
            return Err(Error::invalid(format!("rand-k needs 1 <= k <= d, got k={k}, d={dim}")));
        }
        Ok(Self {
            kind: CompressorKind::RandK { k },
            dim,
            omega: dim as f64 / k as f64 - 1.0,
        })
    }

    pub fn new(kind: CompressorKind, dim: usize) -> Result<Self> {
        match kind {
            CompressorKind::Identity => Ok(Self::identity(dim)),
            CompressorKind::RandK { k } => Self::rand_k(k, dim),
        }
    }

    pub fn kind(&self) -> CompressorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Coordinates kept per message.
    pub fn kept(&self) -> usize {
        match self.kind {
            CompressorKind::Identity => self.dim,
            CompressorKind::RandK { k } => k,
        }
    }

    pub fn payload_floats(&self) -> usize {
        self.kept()
    }

    fn scale(&self) -> f64 {
        self.dim as f64 / self.kept() as f64
    }

    /// The message for a given kept-coordinate set (sorted ascending).
    pub fn apply_subset(&self, x: &[f64], subset: &[usize]) -> CompressedUpdate {
        let s = self.scale();
        CompressedUpdate {
            indices: subset.to_vec(),
            values: subset.iter().map(|&i| s * x[i]).collect(),
            payload_floats: self.payload_floats(),
        }
    }

    pub fn compress<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<CompressedUpdate> {
        check_len(x, self.dim)?;
        Ok(self.compress_unchecked(x, rng))
    }

    pub(crate) fn compress_unchecked<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> CompressedUpdate {
        match self.kind {
            CompressorKind::Identity => CompressedUpdate {
                indices: (0..self.dim).collect(),
                values: x.to_vec(),
                payload_floats: self.dim,
            },
            CompressorKind::RandK { k } => {
                let subset = random_subset(self.dim, k, rng);
                self.apply_subset(x, &subset)
            }
        }
    }
}

/// Uniform `k`-subset of `0..d` by partial Fisher–Yates, returned sorted.
pub fn random_subset<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..d).collect();
    for i in 0..k {
        let j = rng.random_range(i..d);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

pub fn decompress(u: &CompressedUpdate, dim: usize) -> Result<Vec<f64>> {
    if u.indices.len() != u.values.len() {
        return Err(Error::invalid("indices and values differ in length"));
    }
    let mut out = vec![0.0; dim];
    for (&i, &v) in u.indices.iter().zip(&u.values) {
        if i >= dim {
            return Err(Error::invalid(format!("index {i} out of range for dimension {dim}")));
        }
        out[i] = v;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertifyMode {
    /// Enumerate every kept-coordinate subset (requires `d <= 8`).
    Exact,
    MonteCarlo { trials: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    /// Worst measured `E‖Q(x) − x‖² / ‖x‖²` across probes.
    pub omega_hat: f64,
    /// Worst `‖E Q(x) − x‖∞` (exact mode), or 0.
    pub bias: f64,
    pub pass: bool,
}

const EXACT_MAX_DIM: usize = 8;
const EXACT_TOL: f64 = 1e-12;

/// Measures `ω` on the probe vectors and compares with the stored value.
pub fn certify_variance<R: Rng + ?Sized>(
    c: &Compressor,
    mode: CertifyMode,
    probes: &[Vec<f64>],
    rng: &mut R,
) -> Result<Certification> {
    for p in probes {
        check_len(p, c.dim)?;
    }
    let probes: Vec<&Vec<f64>> = probes.iter().filter(|p| norm_sq(p) > 0.0).collect();
    let mut omega_hat: f64 = 0.0;
    let mut bias: f64 = 0.0;
    let pass = match mode {
        CertifyMode::Exact => {
            if c.dim > EXACT_MAX_DIM {
                return Err(Error::invalid(format!(
                    "exact certification needs d <= {EXACT_MAX_DIM}, got {}",
                    c.dim
                )));
            }
            let subsets: Vec<Vec<usize>> = (0..c.dim).combinations(c.kept()).collect();
            let weight = 1.0 / subsets.len() as f64;
            let mut ok = true;
            for x in &probes {
                let mut mean = vec![0.0; c.dim];
                let mut var = 0.0;
                for s in &subsets {
                    let q = decompress(&c.apply_subset(x, s), c.dim)?;
                    crate::vecops::axpy(weight, &q, &mut mean);
                    var += weight * dist_sq(&q, x);
                }
                let nx = norm_sq(x);
                let ratio = var / nx;
                omega_hat = omega_hat.max(ratio);
                let b = mean
                    .iter()
                    .zip(x.iter())
                    .map(|(m, xi)| (m - xi).abs())
                    .fold(0.0, f64::max);
                bias = bias.max(b);
                let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
                ok &= (ratio - c.omega).abs() <= EXACT_TOL * c.omega.max(1.0) && b <= EXACT_TOL * scale;
            }
            ok
        }
        CertifyMode::MonteCarlo { trials } => {
            if trials == 0 {
                return Err(Error::invalid("trials must be >= 1"));
            }
            for x in &probes {
                let mut var = 0.0;
                for _ in 0..trials {
                    let q = decompress(&c.compress_unchecked(x, rng), c.dim)?;
                    var += dist_sq(&q, x);
                }
                omega_hat = omega_hat.max(var / trials as f64 / norm_sq(x));
            }
            omega_hat <= c.omega * (1.0 + 4.0 / (trials as f64).sqrt()) + 1e-15
        }
    };
    Ok(Certification {
        omega_hat,
        bias,
        pass,
    })
}

/// Like [`certify_variance`] but failing with [`Error::Certification`].
pub fn require_certified<R: Rng + ?Sized>(
    c: &Compressor,
    mode: CertifyMode,
    probes: &[Vec<f64>],
    rng: &mut R,
) -> Result<Certification> {
    let cert = certify_variance(c, mode, probes, rng)?;
    if !cert.pass {
        return Err(Error::Certification {
            measured: cert.omega_hat,
            certified: c.omega,
        });
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn identity_passes_through() {
        let c = Compressor::identity(2);
        let u = c.compress(&[1.0, 2.0], &mut seeded(0)).unwrap();
        assert_eq!(u.values, vec![1.0, 2.0]);
        assert_eq!(u.payload_floats, 2);
        assert_eq!(decompress(&u, 2).unwrap(), vec![1.0, 2.0]);
        assert_eq!(c.omega(), 0.0);
    }

    #[test]
    fn rand1_two_coordinates() {
        let c = Compressor::rand_k(1, 2).unwrap();
        assert_eq!(c.omega(), 1.0);
        let mut rng = seeded(3);
        let mut seen = [0usize; 2];
        for _ in 0..2000 {
            let q = decompress(&c.compress(&[1.0, 1.0], &mut rng).unwrap(), 2).unwrap();
            assert!(q == vec![2.0, 0.0] || q == vec![0.0, 2.0]);
            seen[if q[0] > 0.0 { 0 } else { 1 }] += 1;
        }
        // 2000 fair draws, 5 sigma ≈ 112
        assert!((seen[0] as i64 - 1000).abs() < 112, "{seen:?}");
        // the two outcomes average to x
        let a = decompress(&c.apply_subset(&[1.0, 1.0], &[0]), 2).unwrap();
        let b = decompress(&c.apply_subset(&[1.0, 1.0], &[1]), 2).unwrap();
        assert_eq!([(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0], [1.0, 1.0]);
    }

    #[test]
    fn rand_d_is_identity() {
        let c = Compressor::rand_k(3, 3).unwrap();
        let x = [0.1, -2.0, 3.5];
        let q = decompress(&c.compress(&x, &mut seeded(1)).unwrap(), 3).unwrap();
        assert_eq!(q, x.to_vec());
        assert_eq!(c.omega(), 0.0);
    }

    #[test]
    fn invalid_k() {
        assert!(Compressor::rand_k(0, 3).is_err());
        assert!(Compressor::rand_k(4, 3).is_err());
    }

    #[test]
    fn decompress_cases() {
        let empty = CompressedUpdate {
            indices: vec![],
            values: vec![],
            payload_floats: 0,
        };
        assert_eq!(decompress(&empty, 3).unwrap(), vec![0.0; 3]);
        let u = CompressedUpdate {
            indices: vec![0],
            values: vec![2.0],
            payload_floats: 1,
        };
        assert_eq!(decompress(&u, 2).unwrap(), vec![2.0, 0.0]);
        let bad = CompressedUpdate {
            indices: vec![2],
            values: vec![2.0],
            payload_floats: 1,
        };
        assert!(decompress(&bad, 2).is_err());
    }

    #[test]
    fn exact_certificates() {
        let mut rng = seeded(0);
        let probes = vec![vec![1.0, 1.0], vec![0.3, -2.0]];
        let c = Compressor::rand_k(1, 2).unwrap();
        let cert = certify_variance(&c, CertifyMode::Exact, &probes, &mut rng).unwrap();
        assert!(cert.pass);
        assert!((cert.omega_hat - 1.0).abs() < 1e-12);

        let probes = vec![vec![1.0, -2.0, 0.5, 3.0]];
        let c = Compressor::rand_k(2, 4).unwrap();
        let cert = certify_variance(&c, CertifyMode::Exact, &probes, &mut rng).unwrap();
        assert!(cert.pass);
        assert!((cert.omega_hat - 1.0).abs() < 1e-12);

        let c = Compressor::identity(4);
        let cert = certify_variance(&c, CertifyMode::Exact, &probes, &mut rng).unwrap();
        assert!(cert.pass && cert.omega_hat == 0.0);
    }

    #[test]
    fn monte_carlo_certificate() {
        let mut rng = seeded(5);
        let c = Compressor::rand_k(3, 20).unwrap();
        let probes = vec![(0..20).map(|i| i as f64 - 7.5).collect::<Vec<_>>()];
        let cert = require_certified(&c, CertifyMode::MonteCarlo { trials: 4000 }, &probes, &mut rng).unwrap();
        assert!((cert.omega_hat / c.omega() - 1.0).abs() < 0.1);
    }

    #[test]
    fn understated_omega_fails_certification() {
        let mut c = Compressor::rand_k(1, 4).unwrap();
        c.omega = 1.0;
        let probes = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let err = require_certified(&c, CertifyMode::Exact, &probes, &mut seeded(0)).unwrap_err();
        assert!(matches!(err, Error::Certification { measured, .. } if (measured - 3.0).abs() < 1e-12));
    }

    #[test]
    fn subsets_are_sorted_and_distinct() {
        let mut rng = seeded(2);
        for _ in 0..100 {
            let s = random_subset(10, 4, &mut rng);
            assert_eq!(s.len(), 4);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&i| i < 10));
        }
    }

    proptest! {
        #[test]
        fn payload_accounting(d in 1usize..50, kk in 1usize..50, seed in 0u64..1000) {
            let k = 1 + kk % d;
            let c = Compressor::rand_k(k, d).unwrap();
            let x: Vec<f64> = (0..d).map(|i| i as f64).collect();
            let u = c.compress(&x, &mut seeded(seed)).unwrap();
            prop_assert_eq!(u.payload_floats, k);
            prop_assert_eq!(u.indices.len(), k);
            prop_assert_eq!(Compressor::identity(d).compress(&x, &mut seeded(seed)).unwrap().payload_floats, d);
        }
    }
}
