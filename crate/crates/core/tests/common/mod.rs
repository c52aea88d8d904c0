#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rfd_sketch::DenseMatrix;

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `t × d` stream `G·diag(s)·Q` with geometrically decaying scales; when
/// `rank` is given only that many latent directions are used.
pub fn random_stream(rng: &mut ChaCha8Rng, t: usize, d: usize, rank: Option<usize>) -> DenseMatrix {
    let r = rank.unwrap_or(d).min(d).max(1);
    let decay: f64 = rng.random_range(0.6..0.95);
    let g = gaussian(rng, t, r);
    let basis = gaussian(rng, d, d).qr().q();
    let mut mix = DMatrix::zeros(r, d);
    for i in 0..r {
        let scale = decay.powi(i as i32);
        for j in 0..d {
            mix[(i, j)] = scale * basis[(j, i)];
        }
    }
    DenseMatrix::from_nalgebra(g * mix).unwrap()
}

/// Rank-deficient `rows × cols` matrix of the given rank.
pub fn low_rank(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> DenseMatrix {
    DenseMatrix::from_nalgebra(gaussian(rng, rows, rank) * gaussian(rng, rank, cols)).unwrap()
}

/// Each nonzero row scaled to unit Euclidean norm.
pub fn normalize_rows(a: &DenseMatrix) -> DenseMatrix {
    let mut m = a.as_nalgebra().clone();
    for mut row in m.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    DenseMatrix::from_nalgebra(m).unwrap()
}

pub fn spectral(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// Best spectral objective `‖M − G − δI‖₂` over a uniform δ grid on
/// `[0, λ_max]`, with `G` the rank-`k` truncation of `(M − δI)₊`.
pub fn ridge_grid_oracle(m: &DenseMatrix, k: usize, steps: usize) -> f64 {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.as_nalgebra().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut best = f64::INFINITY;
    for step in 0..=steps {
        let delta = top * step as f64 / steps as f64;
        // Residual is diagonal in the eigenbasis.
        let value = order
            .iter()
            .enumerate()
            .map(|(rank, &j)| {
                let lam = eig.eigenvalues[j] - delta;
                if rank < k {
                    lam.min(0.0).abs()
                } else {
                    lam.abs()
                }
            })
            .fold(0.0, f64::max);
        best = best.min(value);
    }
    best
}
