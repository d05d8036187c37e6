//! Deterministic simulator for communication-efficient federated optimization.
//!
//! The crate models `M` clients holding smooth strongly convex objectives and
//! drives two primal-dual round schemes over them: one combining local
//! training, uniform client sampling and unbiased compression of dual updates
//! ([`algo::round_cc`]), and one supporting arbitrary client-sampling schemes
//! characterised by a weighted AB variance inequality ([`algo::round_ab`]).
//!
//! Every randomized component draws from counter-based ChaCha streams keyed by
//! `(seed, round, lane)`, so a run is reproducible bit-for-bit regardless of
//! evaluation order.

pub mod algo;
pub mod cli;
pub mod compress;
pub mod dataset;
pub mod error;
pub mod localsolve;
pub mod objective;
pub mod rng;
pub mod sampling;
pub mod vecops;

pub use error::{Error, Result};
