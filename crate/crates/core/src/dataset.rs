//! LibSVM parsing, client partitioning and synthetic problem generation.

use std::fmt::Write as _;
use std::io::BufRead;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

/// One labelled example with sparse features.
///
/// Features are kept sorted by index; indices are 1-based as in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: i8,
    pub features: Vec<(usize, f64)>,
}

impl Sample {
    pub fn new(label: i8, mut features: Vec<(usize, f64)>) -> Result<Self> {
        if label != 1 && label != -1 {
            return Err(Error::invalid(format!("label must be +1 or -1, got {label}")));
        }
        features.sort_by_key(|&(i, _)| i);
        if let Some(&(0, _)) = features.first() {
            return Err(Error::invalid("feature indices are 1-based"));
        }
        if features.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("duplicate feature index"));
        }
        Ok(Self { label, features })
    }

    pub fn max_index(&self) -> usize {
        self.features.last().map_or(0, |&(i, _)| i)
    }

    /// `⟨a, x⟩` with `x` indexed from 0.
    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.features.iter().map(|&(i, v)| v * x[i - 1]).sum()
    }

    /// LibSVM text for this sample, without trailing newline.
    pub fn to_libsvm(&self) -> String {
        let mut s = String::new();
        s.push_str(if self.label > 0 { "+1" } else { "-1" });
        for &(i, v) in &self.features {
            // `{}` prints the shortest repr that round-trips
            let _ = write!(s, " {i}:{v}");
        }
        s
    }
}

/// Samples read from a LibSVM stream together with the inferred dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Parsed {
    pub samples: Vec<Sample>,
    pub dim: usize,
}

fn parse_label(tok: &str, line: usize) -> Result<i8> {
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad label {tok:?}"),
    })?;
    if v == 1.0 {
        Ok(1)
    } else if v == -1.0 || v == 0.0 {
        Ok(-1)
    } else {
        Err(Error::Parse {
            line,
            msg: format!("unsupported label {tok:?}"),
        })
    }
}

/// Parses `<label> <idx>:<val> ...` lines. Labels `0` and `-1` both map to
/// `-1`. Blank lines are skipped. The dimension is the largest index seen.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<Parsed> {
    let mut samples = Vec::new();
    let mut dim = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let body = line.split('#').next().unwrap_or("");
        let mut toks = body.split_whitespace();
        let Some(label_tok) = toks.next() else {
            continue;
        };
        let label = parse_label(label_tok, lineno)?;
        let mut features = Vec::new();
        for tok in toks {
            let (i, v) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("missing ':' in {tok:?}"),
            })?;
            let i: usize = i.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad index in {tok:?}"),
            })?;
            let v: f64 = v.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad value in {tok:?}"),
            })?;
            if i == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "feature index 0 (indices are 1-based)".into(),
                });
            }
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-finite value in {tok:?}"),
                });
            }
            features.push((i, v));
        }
        features.sort_by_key(|&(i, _)| i);
        if let Some(w) = features.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("duplicate feature index {}", w[0].0),
            });
        }
        let s = Sample { label, features };
        dim = dim.max(s.max_index());
        samples.push(s);
    }
    Ok(Parsed { samples, dim })
}

pub fn parse_libsvm_str(text: &str) -> Result<Parsed> {
    parse_libsvm(text.as_bytes())
}

pub fn to_libsvm_text(samples: &[Sample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&s.to_libsvm());
        out.push('\n');
    }
    out
}

/// The samples held by one client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    pub samples: Vec<Sample>,
    pub dim: usize,
}

impl ClientData {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Contiguous split: client `m` gets samples `[m·n, (m+1)·n)`; the rest is dropped.
pub fn partition_clients(
    samples: &[Sample],
    dim: usize,
    clients: usize,
    per_client: usize,
) -> Result<Vec<ClientData>> {
    if clients == 0 || per_client == 0 {
        return Err(Error::invalid("client count and samples per client must be positive"));
    }
    let needed = clients * per_client;
    if needed > samples.len() {
        return Err(Error::NotEnoughSamples {
            clients,
            per_client,
            needed,
            available: samples.len(),
        });
    }
    if let Some(s) = samples[..needed].iter().find(|s| s.max_index() > dim) {
        return Err(Error::invalid(format!(
            "sample has feature index {} above dimension {dim}",
            s.max_index()
        )));
    }
    Ok(samples[..needed]
        .chunks(per_client)
        .map(|chunk| ClientData {
            samples: chunk.to_vec(),
            dim,
        })
        .collect())
}

/// Where a problem's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Libsvm { path: String },
    Synthetic(SynthSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub clients: usize,
    pub per_client: usize,
    pub dim: usize,
    pub source: DataSource,
}

/// Parameters of the synthetic quadratic generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub clients: usize,
    pub dim: usize,
    /// Target `L_max / μ`.
    pub kappa: f64,
    /// Ratio `L_max / L_min` across clients.
    pub heterogeneity: f64,
    pub seed: u64,
}

/// `f(x) = ½ xᵀQx − cᵀx` with symmetric positive definite `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSpec {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
}

fn random_orthogonal<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    // fix column signs so the map from Gaussian to Haar measure is well defined
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Per-client strongly convex quadratics.
///
/// Every client has smallest Hessian eigenvalue 1, so `μ = 1`. Largest
/// eigenvalues are spread geometrically from `κ/r` (client 0) to `κ`
/// (client M−1); interior eigenvalues are log-uniform in between. Linear
/// terms are standard Gaussian, which makes client optima differ.
pub fn synth_problem(spec: &SynthSpec) -> Result<Vec<QuadraticSpec>> {
    let SynthSpec {
        clients,
        dim,
        kappa,
        heterogeneity: r,
        seed,
    } = *spec;
    if clients == 0 || dim == 0 {
        return Err(Error::invalid("clients and dim must be positive"));
    }
    if !(kappa > 1.0) {
        return Err(Error::invalid(format!("kappa must exceed 1, got {kappa}")));
    }
    if !(r >= 1.0) || r >= kappa {
        return Err(Error::invalid(format!(
            "heterogeneity must lie in [1, kappa), got {r}"
        )));
    }
    if clients == 1 && r != 1.0 {
        return Err(Error::invalid("a single client cannot be heterogeneous"));
    }
    let mut rng = seeded(seed);
    let l_min = kappa / r;
    let mut out = Vec::with_capacity(clients);
    for m in 0..clients {
        let l_m = if m == clients - 1 {
            kappa
        } else {
            l_min * r.powf(m as f64 / (clients - 1) as f64)
        };
        let mut eig: Vec<f64> = (0..dim)
            .map(|j| match j {
                0 => 1.0,
                _ if j == dim - 1 => l_m,
                _ => l_m.powf(rng.random::<f64>()),
            })
            .collect();
        if dim == 1 {
            eig[0] = l_m;
        }
        let u = random_orthogonal(dim, &mut rng);
        let mut q = &u * DMatrix::from_diagonal(&DVector::from_vec(eig)) * u.transpose();
        // exact symmetry
        let qt = q.transpose();
        q = (q + qt) * 0.5;
        let c = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        out.push(QuadraticSpec { q, c });
    }
    Ok(out)
}

// Category sizes of a 14-attribute one-hot encoding over 119 columns.
const ONEHOT_GROUPS: [usize; 14] = [5, 7, 16, 7, 6, 14, 6, 5, 2, 2, 3, 2, 3, 41];

/// Column count of [`synth_onehot_binary`] samples.
pub const ONEHOT_DIM: usize = 119;

/// Binary one-hot samples shaped like the census-income slice commonly used
/// as a small LibSVM benchmark: one active column per attribute group
/// (14 nonzeros, value 1), 119 columns, labels from a planted logistic model
/// with an offset giving roughly a quarter positives.
pub fn synth_onehot_binary(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = seeded(seed);
    let d = ONEHOT_DIM;
    debug_assert_eq!(ONEHOT_GROUPS.iter().sum::<usize>(), d);
    let w: Vec<f64> = (0..d)
        .map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    // skewed category popularity per group
    let pops: Vec<Vec<f64>> = ONEHOT_GROUPS
        .iter()
        .map(|&g| (0..g).map(|_| rng.random::<f64>().powi(3) + 1e-3).collect())
        .collect();
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut features = Vec::with_capacity(ONEHOT_GROUPS.len());
        let mut offset = 0;
        let mut score = -1.2;
        for (g, pop) in ONEHOT_GROUPS.iter().zip(&pops) {
            let total: f64 = pop.iter().sum();
            let mut t = rng.random::<f64>() * total;
            let mut pick = g - 1;
            for (j, p) in pop.iter().enumerate() {
                if t < *p {
                    pick = j;
                    break;
                }
                t -= p;
            }
            let idx = offset + pick + 1;
            features.push((idx, 1.0));
            score += w[idx - 1] / (ONEHOT_GROUPS.len() as f64).sqrt();
            offset += g;
        }
        let prob = 1.0 / (1.0 + (-score).exp());
        let label = if rng.random::<f64>() < prob { 1 } else { -1 };
        samples.push(Sample { label, features });
    }
    samples
}
