//! Closed-form low-rank plus ridge approximation `M ≈ CCᵀ + δI` of a PSD
//! matrix, and the per-step optimality check of the robust update built on it.

use nalgebra::DMatrix;

use super::{RfdSketch, SketchVariant};
use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApproximationNorm {
    Spectral,
    Frobenius,
}

/// `C` (d×k) and `δ` with `M ≈ CCᵀ + δI`.
#[derive(Clone, Debug)]
pub struct RidgeApproximation {
    pub c: DenseMatrix,
    pub delta: f64,
}

impl RidgeApproximation {
    /// `CCᵀ`.
    pub fn low_rank_gram(&self) -> DenseMatrix {
        let c = self.c.as_nalgebra();
        DenseMatrix::wrap(c * c.transpose())
    }

    /// `CCᵀ + δI`.
    pub fn matrix(&self) -> DenseMatrix {
        let mut g = self.low_rank_gram().into_nalgebra();
        for i in 0..g.nrows() {
            g[(i, i)] += self.delta;
        }
        DenseMatrix::wrap(g)
    }
}

/// Minimizer of `‖M − (CCᵀ + δI)‖` over `C ∈ R^{d×k}` and scalar `δ`.
///
/// Spectral norm: `δ = (σ_{k+1} + σ_d) / 2`. Frobenius norm: `δ` is the mean
/// of the tail `σ_{k+1..d}`. In both cases `C = U_k (Σ_k − δI)^{1/2}`.
pub fn optimal_ridge_approx(m: &DenseMatrix, k: usize, norm: ApproximationNorm) -> Result<RidgeApproximation> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(Error::shape("square matrix", format!("{:?}", m.shape())));
    }
    if !m.is_symmetric(1e-10) {
        return Err(Error::Domain("ridge approximation expects a symmetric matrix".into()));
    }
    if k >= d {
        return Err(Error::Domain(format!("rank k = {k} must be below the dimension {d}")));
    }
    let min_eig = linalg::symmetric_eigenvalues(m)?.last().copied().unwrap_or(0.0);
    if min_eig < -1e-8 {
        return Err(Error::Domain(format!(
            "ridge approximation expects a PSD matrix (min eigenvalue {min_eig:e})"
        )));
    }

    let svd = linalg::svd(m)?;
    let sigma = &svd.singular_values;
    let delta = match norm {
        ApproximationNorm::Spectral => (sigma[k] + sigma[d - 1]) / 2.0,
        ApproximationNorm::Frobenius => sigma[k..].iter().sum::<f64>() / (d - k) as f64,
    };
    let u = svd.u.as_nalgebra();
    let mut c = DMatrix::zeros(d, k);
    for (j, s) in sigma.iter().take(k).enumerate() {
        let scale = (s - delta).max(0.0).sqrt();
        c.column_mut(j).copy_from(&(u.column(j) * scale));
    }
    Ok(RidgeApproximation {
        c: DenseMatrix::wrap(c),
        delta,
    })
}

/// `‖target − (G + δI)‖₂`.
pub fn ridge_objective(target: &DenseMatrix, low_rank_gram: &DenseMatrix, delta: f64) -> Result<f64> {
    let approx = low_rank_gram.add_scaled_identity(delta)?;
    linalg::spectral_norm(&target.sub(&approx)?)
}

/// Comparison of one robust update against the closed-form optimum.
#[derive(Clone, Debug)]
pub struct StepOptimality {
    /// `|δ_opt − α_new|`.
    pub delta_error: f64,
    /// `‖CCᵀ − BᵀB‖₂` against the closed-form `C`. The closed form keeps
    /// `σ_i² − σ_m²/2` on the retained directions while the robust update keeps
    /// `σ_i² − σ_m²`, so this equals `σ_m²/2` and vanishes only when `σ_m = 0`.
    pub gram_error: f64,
    /// Spectral objective of the robust update.
    pub rfd_objective: f64,
    /// Spectral objective of the closed form.
    pub optimal_objective: f64,
    /// Spectral objective of the plain FD update (same `B`, `α` unchanged).
    pub fd_objective: f64,
    pub sigma_m_sq: f64,
    /// Absolute tolerance used for both comparisons.
    pub tolerance: f64,
    /// The stacked target `B̂ᵀB̂ + α_prev I`.
    pub target: DenseMatrix,
}

impl StepOptimality {
    /// The robust update attains the optimal objective with the optimal `δ`.
    pub fn holds(&self) -> bool {
        self.delta_error <= self.tolerance && (self.rfd_objective - self.optimal_objective).abs() <= self.tolerance
    }

    /// `BᵀB` coincides with the closed-form `CCᵀ`.
    pub fn gram_matches(&self) -> bool {
        self.gram_error <= self.tolerance
    }
}

/// Runs one robust update of `before` on `row` and compares it with
/// `optimal_ridge_approx(B̂ᵀB̂ + α_prev I, m − 1, spectral)`.
///
/// `before` must hold exactly `m − 1` rows and the dimension must exceed `m`.
pub fn step_optimality_report(before: &RfdSketch, row: &[f64]) -> Result<StepOptimality> {
    let m = before.config().m;
    let d = before.dim();
    if before.len() != m - 1 {
        return Err(Error::Precondition(format!(
            "sketch must hold m - 1 = {} rows, holds {}",
            m - 1,
            before.len()
        )));
    }
    if d <= m {
        return Err(Error::Domain(format!("step optimality needs d > m (d = {d}, m = {m})")));
    }
    if row.len() != d {
        return Err(Error::shape(format!("row of dim {d}"), row.len()));
    }

    let alpha_prev = before.alpha();
    let mut after = before.clone();
    after.config.variant = SketchVariant::Robust;
    after.rows.extend_from_slice(row);
    after.len += 1;
    after.rows_seen += 1;
    let target = after.covariance_with(alpha_prev);
    let outcome = after.compress()?;

    let optimum = optimal_ridge_approx(&target, m - 1, ApproximationNorm::Spectral)?;
    let btb = after.gram();
    let tolerance = 1e-8 * linalg::spectral_norm(&target)?.max(1.0);

    Ok(StepOptimality {
        delta_error: (optimum.delta - after.alpha()).abs(),
        gram_error: linalg::spectral_norm(&optimum.low_rank_gram().sub(&btb)?)?,
        rfd_objective: ridge_objective(&target, &btb, after.alpha())?,
        optimal_objective: ridge_objective(&target, &optimum.low_rank_gram(), optimum.delta)?,
        fd_objective: ridge_objective(&target, &btb, alpha_prev)?,
        sigma_m_sq: outcome.sigma_m_sq,
        tolerance,
        target,
    })
}

/// True iff the robust update of `before` on `row` is a minimizer of the
/// spectral objective and its `α` equals the closed-form `δ`.
pub fn verify_step_optimality(before: &RfdSketch, row: &[f64]) -> Result<bool> {
    Ok(step_optimality_report(before, row)?.holds())
}

impl RfdSketch {
    fn covariance_with(&self, alpha: f64) -> DenseMatrix {
        let mut h = self.gram().into_nalgebra();
        for i in 0..self.d {
            h[(i, i)] += alpha;
        }
        DenseMatrix::wrap(h)
    }
}
