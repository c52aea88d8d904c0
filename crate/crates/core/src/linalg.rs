//! Dense matrices and vectors plus the handful of decompositions the sketches
//! and learners need.
//!
//! Storage is backed by `nalgebra`; the public constructors and accessors are
//! row-major. SVD and symmetric eigendecompositions run through `faer`. Every constructor rejects NaN and infinite entries, so any value
//! of these types is finite on entry to an operation.

use faer::{Mat, MatRef, Side};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Singular values at or below `RANK_TOL * sigma_1` count as zero.
pub const RANK_TOL: f64 = 1e-12;

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn check_finite(data: impl IntoIterator<Item = f64>) -> Result<()> {
    for (index, value) in data.into_iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { index, value });
        }
    }
    Ok(())
}

/// A finite dense real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

/// A finite dense real vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseVector(DVector<f64>);

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        DenseMatrix(DMatrix::identity(n, n))
    }

    /// Builds a matrix from `rows * cols` entries listed row by row.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                format!("{} entries for a {rows}x{cols} matrix", rows * cols),
                format!("{} entries", data.len()),
            ));
        }
        check_finite(data.iter().copied())?;
        Ok(DenseMatrix(DMatrix::from_row_slice(rows, cols, data)))
    }

    /// Builds a matrix whose i-th row is `rows[i]`. All rows must share a length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::shape(
                    format!("row {i} of length {cols}"),
                    format!("length {}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_slice(rows.len(), cols, &data)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        check_finite(diag.iter().copied())?;
        Ok(DenseMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag))))
    }

    pub fn from_nalgebra(m: DMatrix<f64>) -> Result<Self> {
        check_finite(m.iter().copied())?;
        Ok(DenseMatrix(m))
    }

    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        DenseMatrix(m)
    }

    pub fn as_nalgebra(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_nalgebra(self) -> DMatrix<f64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn row(&self, i: usize) -> DenseVector {
        DenseVector(self.0.row(i).transpose())
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.nrows())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix(self.0.transpose())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.ncols() != other.nrows() {
            return Err(Error::shape(
                format!("{} rows on the right operand", self.ncols()),
                format!("{} rows", other.nrows()),
            ));
        }
        Ok(DenseMatrix(&self.0 * &other.0))
    }

    pub fn mul_vec(&self, v: &DenseVector) -> Result<DenseVector> {
        if self.ncols() != v.dim() {
            return Err(Error::shape(format!("vector of dim {}", self.ncols()), v.dim()));
        }
        Ok(DenseVector(&self.0 * &v.0))
    }

    /// `AᵀA`.
    pub fn gram(&self) -> DenseMatrix {
        DenseMatrix(self.0.tr_mul(&self.0))
    }

    fn check_same_shape(&self, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_same_shape(other)?;
        Ok(DenseMatrix(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_same_shape(other)?;
        Ok(DenseMatrix(&self.0 - &other.0))
    }

    pub fn scaled(&self, factor: f64) -> DenseMatrix {
        DenseMatrix(&self.0 * factor)
    }

    /// `self + alpha * I` for a square matrix.
    pub fn add_scaled_identity(&self, alpha: f64) -> Result<DenseMatrix> {
        if self.nrows() != self.ncols() {
            return Err(Error::shape("square matrix", format!("{:?}", self.shape())));
        }
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += alpha;
        }
        Ok(DenseMatrix(m))
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().sum()
    }

    /// True when square and `|a_ij - a_ji| <= tol * max(1, max|a|)`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows() != self.ncols() {
            return false;
        }
        let scale = self.max_abs().max(1.0);
        let n = self.nrows();
        (0..n).all(|i| (i + 1..n).all(|j| (self.0[(i, j)] - self.0[(j, i)]).abs() <= tol * scale))
    }
}

impl DenseVector {
    pub fn zeros(dim: usize) -> Self {
        DenseVector(DVector::zeros(dim))
    }

    pub fn from_vec(entries: Vec<f64>) -> Result<Self> {
        check_finite(entries.iter().copied())?;
        Ok(DenseVector(DVector::from_vec(entries)))
    }

    pub fn from_slice(entries: &[f64]) -> Result<Self> {
        Self::from_vec(entries.to_vec())
    }

    pub(crate) fn wrap(v: DVector<f64>) -> Self {
        DenseVector(v)
    }

    pub fn as_nalgebra(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn dot(&self, other: &DenseVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::shape(self.dim(), other.dim()));
        }
        Ok(self.0.dot(&other.0))
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn scaled(&self, factor: f64) -> DenseVector {
        DenseVector(&self.0 * factor)
    }

    pub fn sub(&self, other: &DenseVector) -> Result<DenseVector> {
        if self.dim() != other.dim() {
            return Err(Error::shape(self.dim(), other.dim()));
        }
        Ok(DenseVector(&self.0 - &other.0))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

/// Condensed SVD `A = U diag(σ) Vᵀ` with `min(rows, cols)` retained columns.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> DenseMatrix {
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&self.singular_values));
        DenseMatrix(&self.u.0 * s * self.v.0.transpose())
    }

    /// Number of singular values above `RANK_TOL * sigma_1`.
    pub fn rank(&self) -> usize {
        numerical_rank(&self.singular_values)
    }
}

pub(crate) fn numerical_rank(sorted_desc: &[f64]) -> usize {
    let Some(&top) = sorted_desc.first() else {
        return 0;
    };
    if top <= 0.0 {
        return 0;
    }
    sorted_desc.iter().take_while(|&&s| s > RANK_TOL * top).count()
}

/// Deterministic condensed SVD.
///
/// Singular values come back nonincreasing. Each column of `V` is flipped so
/// its first entry that is not negligible is positive, with the matching `U`
/// column flipped alongside.
pub fn svd(a: &DenseMatrix) -> Result<SvdResult> {
    let (rows, cols) = a.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(SvdResult {
            u: DenseMatrix::zeros(rows, 0),
            singular_values: Vec::new(),
            v: DenseMatrix::zeros(cols, 0),
        });
    }
    let decomposition = to_faer(&a.0)
        .thin_svd()
        .map_err(|e| Error::Decomposition(format!("SVD of a {rows}x{cols} matrix failed: {e:?}")))?;
    let mut u = from_faer(decomposition.U());
    let mut v = from_faer(decomposition.V());
    let diag = decomposition.S().column_vector();
    let singular_values: Vec<f64> = (0..k).map(|i| diag[i].max(0.0)).collect();

    for j in 0..k {
        let col = v.column(j);
        let scale = col.amax();
        let pivot = col.iter().copied().find(|x| x.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE));
        if matches!(pivot, Some(p) if p < 0.0) {
            v.column_mut(j).neg_mut();
            u.column_mut(j).neg_mut();
        }
    }
    if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Decomposition("SVD produced non-finite singular vectors".into()));
    }
    Ok(SvdResult {
        u: DenseMatrix(u),
        singular_values,
        v: DenseMatrix(v),
    })
}

/// Singular values only, nonincreasing.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    let (rows, cols) = a.shape();
    if rows.min(cols) == 0 {
        return Ok(Vec::new());
    }
    let values = to_faer(&a.0)
        .singular_values()
        .map_err(|e| Error::Decomposition(format!("SVD of a {rows}x{cols} matrix failed: {e:?}")))?;
    Ok(values.into_iter().map(|s| s.max(0.0)).collect())
}

/// `‖A‖₂ = σ_max(A)`; zero for an empty matrix.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

/// Moore-Penrose pseudoinverse `V Σ⁻¹ Uᵀ`, treating singular values at or
/// below `tol * σ₁` as zero.
pub fn pseudoinverse(a: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    if !(tol >= 0.0) {
        return Err(Error::Domain(format!("pseudoinverse tolerance must be >= 0, got {tol}")));
    }
    let (rows, cols) = a.shape();
    let svd = svd(a)?;
    let top = svd.singular_values.first().copied().unwrap_or(0.0);
    let mut out = DMatrix::zeros(cols, rows);
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s <= 0.0 || s <= tol * top {
            break;
        }
        let vj = svd.v.0.column(j);
        let uj = svd.u.0.column(j);
        out.ger(1.0 / s, &vj, &uj, 1.0);
    }
    Ok(DenseMatrix(out))
}

/// `κ(M) = σ_max / σ_min` for a symmetric PSD `M`, where `σ_min` is the
/// smallest singular value above `RANK_TOL * σ_max`.
pub fn condition_number_psd(m: &DenseMatrix) -> Result<f64> {
    if !m.is_symmetric(1e-10) {
        return Err(Error::Domain("condition_number_psd expects a symmetric matrix".into()));
    }
    let sv = singular_values(m)?;
    let rank = numerical_rank(&sv);
    if rank == 0 {
        return Err(Error::UndefinedCondition);
    }
    Ok(sv[0] / sv[rank - 1])
}

/// Eigenvalues of a symmetric matrix, nonincreasing.
pub fn symmetric_eigenvalues(m: &DenseMatrix) -> Result<Vec<f64>> {
    if !m.is_symmetric(1e-8) {
        return Err(Error::Domain("symmetric_eigenvalues expects a symmetric matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut values = to_faer(&m.0)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("symmetric eigendecomposition failed: {e:?}")))?;
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Eigenvalues (nonincreasing) and matching orthonormal eigenvectors of a
/// symmetric matrix; only the lower triangle is read.
pub(crate) fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let eig = to_faer(m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("symmetric eigendecomposition failed: {e:?}")))?;
    let diag = eig.S().column_vector();
    let vectors = eig.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let values = order.iter().map(|&i| diag[i]).collect();
    Ok((values, DMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])])))
}

/// Cholesky factorization of a symmetric positive definite matrix, or `None`
/// when the matrix is not numerically positive definite.
pub(crate) fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
}
