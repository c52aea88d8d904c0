//! Streaming covariance sketches.
//!
//! A single [`RfdSketch`] state machine covers three update rules that share
//! the same buffering and SVD step:
//!
//! * Frequent Directions: shrink every retained squared singular value by the
//!   m-th one, keep the top `m - 1` directions.
//! * Robust Frequent Directions: the same shrink, plus a ridge scalar that
//!   absorbs half of every consumed `σ_m²`, so `AᵀA ≈ BᵀB + αI`.
//! * Greedy truncation: keep the top `m - 1` directions unshrunk. It has no
//!   global error bound and is kept only as a counterexample.
//!
//! In slow mode the compression runs on every row once `m - 1` rows are held.
//! In fast mode rows are buffered and compressed only when `2m` are held.

mod bounds;
mod ridge;

pub use bounds::{
    condition_number_report, counterexample_stream, error_bound_from_spectrum, error_bound_rhs,
    low_rank_stream, relative_error, relative_error_with_gram, ConditionReport,
};
pub use ridge::{
    optimal_ridge_approx, ridge_objective, step_optimality_report, verify_step_optimality,
    ApproximationNorm, RidgeApproximation, StepOptimality,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, DenseVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SketchVariant {
    Frequent,
    Robust,
    Greedy,
}

impl SketchVariant {
    pub fn name(self) -> &'static str {
        match self {
            SketchVariant::Frequent => "fd",
            SketchVariant::Robust => "rfd",
            SketchVariant::Greedy => "greedy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SketchConfig {
    /// Sketch size; at most `m - 1` rows survive a compression.
    pub m: usize,
    /// Buffer up to `2m` rows between compressions.
    pub fast_mode: bool,
    /// Initial ridge. Frequent Directions keeps it frozen.
    pub alpha0: f64,
    pub variant: SketchVariant,
}

impl SketchConfig {
    pub fn new(m: usize, variant: SketchVariant) -> Self {
        SketchConfig {
            m,
            fast_mode: false,
            alpha0: 0.0,
            variant,
        }
    }

    pub fn robust(m: usize) -> Self {
        Self::new(m, SketchVariant::Robust)
    }

    pub fn frequent(m: usize) -> Self {
        Self::new(m, SketchVariant::Frequent)
    }

    pub fn greedy(m: usize) -> Self {
        Self::new(m, SketchVariant::Greedy)
    }

    pub fn with_fast_mode(mut self, fast: bool) -> Self {
        self.fast_mode = fast;
        self
    }

    pub fn with_alpha0(mut self, alpha0: f64) -> Self {
        self.alpha0 = alpha0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config(format!("sketch size m must be >= 2, got {}", self.m)));
        }
        if !(self.alpha0.is_finite() && self.alpha0 >= 0.0) {
            return Err(Error::Config(format!("alpha0 must be finite and >= 0, got {}", self.alpha0)));
        }
        Ok(())
    }

    /// Row count at which an append triggers a compression.
    pub fn compression_trigger(&self) -> usize {
        if self.fast_mode {
            2 * self.m
        } else {
            self.m
        }
    }

    /// Largest number of rows the sketch can hold after an append returns.
    pub fn max_rows(&self) -> usize {
        self.compression_trigger() - 1
    }
}

/// Result of one append.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AppendOutcome {
    pub compressed: bool,
    /// The m-th squared singular value of the stacked matrix; zero when no
    /// compression ran or the stack had rank below `m`.
    pub sigma_m_sq: f64,
}

/// Sketch state: the buffered rows of `B`, the ridge `α` and the record of
/// every consumed `σ_m²`.
#[derive(Clone, Debug)]
pub struct RfdSketch {
    config: SketchConfig,
    d: usize,
    /// Row-major, `len * d` live entries.
    rows: Vec<f64>,
    len: usize,
    alpha: f64,
    rows_seen: usize,
    shrink_log: Vec<f64>,
}

impl RfdSketch {
    pub fn new(config: SketchConfig, d: usize) -> Result<Self> {
        config.validate()?;
        if d == 0 {
            return Err(Error::Config("feature dimension must be >= 1".into()));
        }
        let capacity = config.compression_trigger() * d;
        Ok(RfdSketch {
            alpha: config.alpha0,
            config,
            d,
            rows: Vec::with_capacity(capacity),
            len: 0,
            rows_seen: 0,
            shrink_log: Vec::new(),
        })
    }

    pub fn config(&self) -> &SketchConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rows_seen(&self) -> usize {
        self.rows_seen
    }

    /// Number of rows currently held in `B`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `σ_m²` of every compression so far, in order.
    pub fn shrink_log(&self) -> &[f64] {
        &self.shrink_log
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.d..(i + 1) * self.d]
    }

    /// Current `B` (no pending compression is forced).
    pub fn sketch_matrix(&self) -> DenseMatrix {
        DenseMatrix::wrap(self.b_matrix())
    }

    fn b_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len, self.d, &self.rows[..self.len * self.d])
    }

    /// `BᵀB` of the current rows.
    pub fn gram(&self) -> DenseMatrix {
        let b = self.b_matrix();
        DenseMatrix::wrap(b.tr_mul(&b))
    }

    /// `BᵀB + αI` of the current rows, without forcing a pending compression.
    pub fn covariance(&self) -> DenseMatrix {
        let mut h = self.b_matrix();
        h = h.tr_mul(&h);
        for i in 0..self.d {
            h[(i, i)] += self.alpha;
        }
        DenseMatrix::wrap(h)
    }

    pub fn trace_btb(&self) -> f64 {
        self.rows[..self.len * self.d].iter().map(|x| x * x).sum()
    }

    /// `B v`, one entry per held row.
    pub fn apply_b(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.d);
        (0..self.len)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Bᵀ c` for `c` with one entry per held row.
    pub fn apply_bt(&self, c: &[f64]) -> Vec<f64> {
        debug_assert_eq!(c.len(), self.len);
        let mut out = vec![0.0; self.d];
        for (i, &ci) in c.iter().enumerate() {
            if ci != 0.0 {
                for (o, r) in out.iter_mut().zip(self.row(i)) {
                    *o += ci * r;
                }
            }
        }
        out
    }

    pub fn append(&mut self, row: &DenseVector) -> Result<AppendOutcome> {
        self.append_slice(row.as_slice())
    }

    pub fn append_slice(&mut self, row: &[f64]) -> Result<AppendOutcome> {
        if row.len() != self.d {
            return Err(Error::shape(format!("row of dim {}", self.d), row.len()));
        }
        if let Some((index, &value)) = row.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        self.rows.extend_from_slice(row);
        self.len += 1;
        self.rows_seen += 1;
        if self.len >= self.config.compression_trigger() {
            self.compress()
        } else {
            Ok(AppendOutcome::default())
        }
    }

    /// Appends every row of `a` in order.
    pub fn extend_rows(&mut self, a: &DenseMatrix) -> Result<()> {
        if a.ncols() != self.d {
            return Err(Error::shape(format!("{} columns", self.d), a.ncols()));
        }
        let data = a.to_row_major();
        for row in data.chunks_exact(self.d) {
            self.append_slice(row)?;
        }
        Ok(())
    }

    /// Compresses a fast-mode buffer holding at least `m` rows; a smaller
    /// buffer is left as it is.
    pub fn flush(&mut self) -> Result<Option<AppendOutcome>> {
        if self.len >= self.config.m {
            self.compress().map(Some)
        } else {
            Ok(None)
        }
    }

    /// A copy with any pending buffer flushed.
    pub fn flushed(&self) -> Result<RfdSketch> {
        let mut s = self.clone();
        s.flush()?;
        Ok(s)
    }

    /// Runs the SVD step on whatever rows are held, regardless of buffer size.
    pub(crate) fn compress(&mut self) -> Result<AppendOutcome> {
        let m = self.config.m;
        let keep = m - 1;
        let stacked = DenseMatrix::wrap(self.b_matrix());
        let svd = linalg::svd(&stacked)?;
        let sigma = &svd.singular_values;
        let sigma_m_sq = if sigma.len() >= m { sigma[m - 1] * sigma[m - 1] } else { 0.0 };

        let v = svd.v.as_nalgebra();
        let mut rows = vec![0.0; keep * self.d];
        for (i, out) in rows.chunks_exact_mut(self.d).enumerate().take(sigma.len().min(keep)) {
            let factor = match self.config.variant {
                SketchVariant::Greedy => sigma[i],
                SketchVariant::Frequent | SketchVariant::Robust => {
                    (sigma[i] * sigma[i] - sigma_m_sq).max(0.0).sqrt()
                }
            };
            if factor > 0.0 {
                for (o, vj) in out.iter_mut().zip(v.column(i).iter()) {
                    *o = factor * vj;
                }
            }
        }
        self.rows = rows;
        self.rows.reserve(self.config.compression_trigger() * self.d - self.rows.len());
        self.len = keep;

        match self.config.variant {
            SketchVariant::Robust => {
                self.alpha += sigma_m_sq / 2.0;
                self.shrink_log.push(sigma_m_sq);
            }
            SketchVariant::Frequent => self.shrink_log.push(sigma_m_sq),
            SketchVariant::Greedy => {}
        }
        Ok(AppendOutcome {
            compressed: true,
            sigma_m_sq,
        })
    }
}

/// Builds a sketch of every row of `a`.
pub fn sketch_rows(config: SketchConfig, a: &DenseMatrix) -> Result<RfdSketch> {
    let mut sketch = RfdSketch::new(config, a.ncols())?;
    sketch.extend_rows(a)?;
    Ok(sketch)
}

/// `BᵀB + αI` after flushing any pending fast-mode buffer.
pub fn sketch_covariance(sketch: &RfdSketch) -> Result<DenseMatrix> {
    Ok(sketch.flushed()?.covariance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy_stream() -> DenseMatrix {
        DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap()
    }

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::from_slice(x).unwrap()
    }

    #[test]
    fn new_sketch_is_empty() {
        let s = RfdSketch::new(SketchConfig::robust(5), 10).unwrap();
        assert_eq!(s.len(), 0);
        assert_eq!(s.alpha(), 0.0);
        assert_eq!(s.rows_seen(), 0);
        let s = RfdSketch::new(SketchConfig::robust(5).with_alpha0(1.0), 10).unwrap();
        assert_eq!(s.alpha(), 1.0);
    }

    #[test]
    fn invalid_configurations() {
        assert!(matches!(RfdSketch::new(SketchConfig::robust(1), 3), Err(Error::Config(_))));
        assert!(RfdSketch::new(SketchConfig::robust(3).with_alpha0(-1.0), 3).is_err());
        assert!(RfdSketch::new(SketchConfig::robust(3), 0).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut s = RfdSketch::new(SketchConfig::frequent(3), 2).unwrap();
        assert!(matches!(s.append(&v(&[1.0, 2.0, 3.0])), Err(Error::DimensionMismatch { .. })));
        assert_eq!(s.rows_seen(), 0);
    }

    #[test]
    fn fd_low_rank_stream_is_exact() {
        let mut s = RfdSketch::new(SketchConfig::frequent(3), 2).unwrap();
        s.append(&v(&[1.0, 0.0])).unwrap();
        s.append(&v(&[0.0, 1.0])).unwrap();
        assert!(s.shrink_log().is_empty());
        let expected = DenseMatrix::identity(2);
        assert!(s.gram().sub(&expected).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn fd_toy_stream_by_hand() {
        let mut s = RfdSketch::new(SketchConfig::frequent(2), 2).unwrap();
        s.append(&v(&[1.0, 0.0])).unwrap();
        // Stack [[1,0],[0,1]] has σ = (1,1): the single kept row shrinks to zero.
        let out = s.append(&v(&[0.0, 1.0])).unwrap();
        assert!(out.compressed);
        assert_abs_diff_eq!(out.sigma_m_sq, 1.0, epsilon = 1e-14);
        assert!(s.row(0).iter().all(|x| x.abs() < 1e-7));
        // Stack [[0,0],[1,1]] has σ = (√2, 0): B = [1,1].
        let out = s.append(&v(&[1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(out.sigma_m_sq, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.row(0)[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.row(0)[1], 1.0, epsilon = 1e-12);
        assert_eq!(s.alpha(), 0.0);
    }

    #[test]
    fn rfd_toy_stream_by_hand() {
        let s = sketch_rows(SketchConfig::robust(2), &toy_stream()).unwrap();
        assert_abs_diff_eq!(s.alpha(), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.row(0)[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.row(0)[1], 1.0, epsilon = 1e-12);
        let cov = sketch_covariance(&s).unwrap();
        let expected = DenseMatrix::from_rows(&[[1.5, 1.0], [1.0, 1.5]]).unwrap();
        assert!(cov.sub(&expected).unwrap().max_abs() < 1e-12);
        assert_eq!(s.rows_seen(), 3);
        assert_eq!(s.shrink_log().len(), 2);
    }

    #[test]
    fn rfd_rank_deficient_stream_keeps_alpha() {
        let a = DenseMatrix::from_rows(&[
            [1.0, 2.0, 0.0],
            [2.0, 4.0, 0.0],
            [0.0, 0.0, 1.0],
            [3.0, 6.0, 0.0],
            [0.0, 0.0, -2.0],
        ])
        .unwrap();
        let s = sketch_rows(SketchConfig::robust(3).with_alpha0(0.25), &a).unwrap();
        assert_abs_diff_eq!(s.alpha(), 0.25, epsilon = 1e-12);
        assert!(s.gram().sub(&a.gram()).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn covariance_of_empty_sketch() {
        let s = RfdSketch::new(SketchConfig::robust(3), 3).unwrap();
        assert_eq!(sketch_covariance(&s).unwrap(), DenseMatrix::zeros(3, 3));
        let s = RfdSketch::new(SketchConfig::robust(3).with_alpha0(2.0), 3).unwrap();
        assert_eq!(sketch_covariance(&s).unwrap(), DenseMatrix::identity(3).scaled(2.0));
    }

    #[test]
    fn compression_leaves_m_minus_one_rows() {
        let mut s = RfdSketch::new(SketchConfig::robust(4), 6).unwrap();
        for t in 0..20 {
            let row: Vec<f64> = (0..6).map(|j| ((t * 7 + j * 3) % 5) as f64 - 2.0).collect();
            let out = s.append_slice(&row).unwrap();
            if out.compressed {
                assert_eq!(s.len(), 3);
            }
            assert!(s.len() <= 3);
        }
    }

    #[test]
    fn fast_mode_buffers_until_two_m() {
        let mut s = RfdSketch::new(SketchConfig::robust(3).with_fast_mode(true), 8).unwrap();
        for t in 0..5 {
            let mut row = vec![0.0; 8];
            row[t] = 1.0 + t as f64;
            assert!(!s.append_slice(&row).unwrap().compressed);
        }
        assert_eq!(s.len(), 5);
        let mut row = vec![0.0; 8];
        row[5] = 1.0;
        assert!(s.append_slice(&row).unwrap().compressed);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn flush_rule() {
        let mut s = RfdSketch::new(SketchConfig::robust(3).with_fast_mode(true), 5).unwrap();
        s.append_slice(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        s.append_slice(&[0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(s.flush().unwrap().is_none());
        assert_eq!(s.len(), 2);
        s.append_slice(&[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(s.flush().unwrap().is_some());
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn greedy_keeps_top_directions_unshrunk() {
        let a = DenseMatrix::from_rows(&[[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let s = sketch_rows(SketchConfig::greedy(3), &a).unwrap();
        let expected = DenseMatrix::from_diagonal(&[9.0, 4.0, 0.0]).unwrap();
        assert!(s.gram().sub(&expected).unwrap().max_abs() < 1e-12);
        assert_eq!(s.alpha(), 0.0);
        assert!(s.shrink_log().is_empty());
    }

    #[test]
    fn zero_rows_are_harmless() {
        let mut s = RfdSketch::new(SketchConfig::robust(2), 2).unwrap();
        for _ in 0..4 {
            s.append_slice(&[0.0, 0.0]).unwrap();
        }
        assert_eq!(s.alpha(), 0.0);
        assert!(s.shrink_log().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn wide_sketch_on_narrow_data() {
        // m - 1 > d: every compression is exact.
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.5], [2.0, 2.0], [1.0, 0.0]]).unwrap();
        let s = sketch_rows(SketchConfig::robust(4), &a).unwrap();
        assert_eq!(s.alpha(), 0.0);
        assert!(s.gram().sub(&a.gram()).unwrap().max_abs() < 1e-10);
    }
}
