//! Error measures, deterministic error bounds and condition numbers for the
//! sketches, plus the stream on which greedy truncation breaks down.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{sketch_covariance, sketch_rows, RfdSketch, SketchConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

/// `‖AᵀA − (BᵀB + αI)‖₂ / ‖AᵀA‖₂`, where `A` is the full row history of the
/// sketch. A pending fast-mode buffer is flushed first.
pub fn relative_error(a: &DenseMatrix, sketch: &RfdSketch) -> Result<f64> {
    relative_error_with_gram(&a.gram(), sketch)
}

/// [`relative_error`] with a precomputed `AᵀA`.
pub fn relative_error_with_gram(ata: &DenseMatrix, sketch: &RfdSketch) -> Result<f64> {
    if ata.nrows() != sketch.dim() {
        return Err(Error::shape(format!("{0}x{0} Gram matrix", sketch.dim()), format!("{:?}", ata.shape())));
    }
    let denom = linalg::spectral_norm(ata)?;
    if denom == 0.0 {
        return Err(Error::Domain("relative error is undefined for a zero stream".into()));
    }
    let diff = ata.sub(&sketch_covariance(sketch)?)?;
    Ok(linalg::spectral_norm(&diff)? / denom)
}

/// Right-hand side of the covariance error bound,
/// `‖A − A_k‖_F² / (m − k)`, halved when `robust`.
pub fn error_bound_rhs(a: &DenseMatrix, m: usize, k: usize, robust: bool) -> Result<f64> {
    error_bound_from_spectrum(&linalg::singular_values(a)?, m, k, robust)
}

/// [`error_bound_rhs`] from the singular values of `A` (descending).
pub fn error_bound_from_spectrum(singular_values: &[f64], m: usize, k: usize, robust: bool) -> Result<f64> {
    if k >= m {
        return Err(Error::Domain(format!("bound needs k < m (k = {k}, m = {m})")));
    }
    let tail: f64 = singular_values.iter().skip(k).map(|s| s * s).sum();
    let rhs = tail / (m - k) as f64;
    Ok(if robust { rhs / 2.0 } else { rhs })
}

/// Condition numbers of `AᵀA + α₀I`, of the FD estimate `BᵀB + α₀I` and of
/// the RFD estimate `BᵀB + αI`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionReport {
    pub kappa_m: f64,
    pub kappa_fd: f64,
    pub kappa_rfd: f64,
}

pub fn condition_number_report(a: &DenseMatrix, m: usize, alpha0: f64) -> Result<ConditionReport> {
    if !(alpha0 > 0.0 && alpha0.is_finite()) {
        return Err(Error::Config(format!("alpha0 must be positive, got {alpha0}")));
    }
    let fd = sketch_rows(SketchConfig::frequent(m).with_alpha0(alpha0), a)?;
    let rfd = sketch_rows(SketchConfig::robust(m).with_alpha0(alpha0), a)?;
    Ok(ConditionReport {
        kappa_m: linalg::condition_number_psd(&a.gram().add_scaled_identity(alpha0)?)?,
        kappa_fd: linalg::condition_number_psd(&sketch_covariance(&fd)?)?,
        kappa_rfd: linalg::condition_number_psd(&sketch_covariance(&rfd)?)?,
    })
}

/// `m − 1 + s` rows in dimension `m`: first `λ·e_i` for `i < m`, then `s`
/// copies of `(λ − ε)·e_m`.
///
/// Every trailing row is orthogonal to the leading block and slightly shorter
/// than its smallest singular value, so greedy truncation discards all of them.
pub fn counterexample_stream(m: usize, s: usize, lambda: f64, epsilon: f64) -> Result<DenseMatrix> {
    if m < 2 {
        return Err(Error::Config(format!("m must be >= 2, got {m}")));
    }
    if s < 10 * m {
        return Err(Error::Config(format!("s must be >= 10m = {}, got {s}", 10 * m)));
    }
    if !(epsilon > 0.0 && epsilon < lambda && lambda.is_finite()) {
        return Err(Error::Config(format!("need 0 < epsilon < lambda, got epsilon = {epsilon}, lambda = {lambda}")));
    }
    let mut a = DenseMatrix::zeros(m - 1 + s, m).into_nalgebra();
    for i in 0..m - 1 {
        a[(i, i)] = lambda;
    }
    for r in m - 1..m - 1 + s {
        a[(r, m - 1)] = lambda - epsilon;
    }
    Ok(DenseMatrix::wrap(a))
}

/// Seeded `t × d` Gaussian stream of rank `min(rank, t, d)`: `G₁G₂` with
/// standard normal factors.
pub fn low_rank_stream(t: usize, d: usize, rank: usize, seed: u64) -> Result<DenseMatrix> {
    if t == 0 || d == 0 || rank == 0 {
        return Err(Error::Config(format!("need t, d, rank >= 1 (got {t}, {d}, {rank})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let left = DMatrix::from_fn(t, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    let right = DMatrix::from_fn(rank, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(DenseMatrix::wrap(left * right))
}
