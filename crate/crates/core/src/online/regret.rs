//! Regret measurement: a batch comparator over the feasible set, the
//! empirical regret against it, and the assembled right-hand side of the
//! regret bound for the robust sketched learner.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{run_with, Algorithm, OnlineRun, OnsConfig, StepTelemetry};
use crate::error::{Error, Result};
use crate::linalg::{self, numerical_rank, DenseMatrix, DenseVector};

/// `t` unit-norm rows in dimension `d` with a decaying spectrum, labelled by
/// the sign of a random linear score with 10% of the labels flipped.
pub fn synthetic_stream(t: usize, d: usize, seed: u64) -> Result<(DenseMatrix, Vec<f64>)> {
    if t == 0 || d == 0 {
        return Err(Error::Config("synthetic stream needs t >= 1 and d >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_true: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut x = DMatrix::zeros(t, d);
    let mut y = Vec::with_capacity(t);
    for i in 0..t {
        let mut row: Vec<f64> = (0..d)
            .map(|j| rng.sample::<f64, _>(StandardNormal) / ((j + 1) as f64).sqrt())
            .collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        row.iter_mut().for_each(|v| *v /= norm);
        let score: f64 = row.iter().zip(&w_true).map(|(a, b)| a * b).sum();
        let mut label = if score >= 0.0 { 1.0 } else { -1.0 };
        if rng.random_bool(0.1) {
            label = -label;
        }
        for (j, v) in row.into_iter().enumerate() {
            x[(i, j)] = v;
        }
        y.push(label);
    }
    Ok((DenseMatrix::wrap(x), y))
}

const ADMM_MAX_ITERATIONS: usize = 50_000;

/// `argmin Σ_t (wᵀx_t − y_t)²` subject to `|wᵀx_t| ≤ C` for every row.
///
/// Solved in the score space `z = Xw` by ADMM between `range(X)` and the box
/// `[−C, C]^T`, then polished by an equality-constrained least squares on the
/// active rows. The returned `w` is always feasible.
pub fn batch_comparator(x: &DenseMatrix, y: &[f64], c: f64) -> Result<DenseVector> {
    let (t, d) = x.shape();
    if t == 0 {
        return Err(Error::Domain("comparator of an empty stream".into()));
    }
    if y.len() != t {
        return Err(Error::shape(format!("{t} labels"), y.len()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("radius C must be positive, got {c}")));
    }
    let xm = x.as_nalgebra();
    let yv = DVector::from_column_slice(y);
    let svd = linalg::svd(x)?;
    let rank = svd.rank();
    if rank == 0 {
        return Ok(DenseVector::zeros(d));
    }
    let u_r = svd.u.as_nalgebra().columns(0, rank).into_owned();
    let v_r = svd.v.as_nalgebra().columns(0, rank).into_owned();
    let s_inv = DVector::from_iterator(rank, svd.singular_values[..rank].iter().map(|s| 1.0 / s));
    let project = |v: &DVector<f64>| &u_r * (u_r.tr_mul(v));
    let weights_of = |z: &DVector<f64>| &v_r * (s_inv.component_mul(&u_r.tr_mul(z)));
    let clip = |v: DVector<f64>| v.map(|e| e.clamp(-c, c));

    let rho = 1.0;
    let tol = 1e-11 * (t as f64).sqrt();
    let mut z2 = clip(project(&yv));
    let mut dual = DVector::zeros(t);
    let mut z1 = z2.clone();
    for _ in 0..ADMM_MAX_ITERATIONS {
        z1 = project(&((&yv * 2.0 + (&z2 - &dual) * rho) / (2.0 + rho)));
        let previous = z2.clone();
        z2 = clip(&z1 + &dual);
        dual += &z1 - &z2;
        if (&z1 - &z2).norm() <= tol && rho * (&z2 - &previous).norm() <= tol {
            break;
        }
    }

    let objective = |w: &DVector<f64>| (xm * w - &yv).norm_squared();
    let mut best = make_feasible(xm, weights_of(&z1), c);
    if let Some(polished) = polish(xm, &yv, &z2, c) {
        if objective(&polished) <= objective(&best) {
            best = polished;
        }
    }
    Ok(DenseVector::wrap(best))
}

fn make_feasible(x: &DMatrix<f64>, w: DVector<f64>, c: f64) -> DVector<f64> {
    let top = (x * &w).amax();
    if top > c {
        w * (c / top)
    } else {
        w
    }
}

/// Least squares with the rows at the box boundary pinned to `±C`.
fn polish(x: &DMatrix<f64>, y: &DVector<f64>, z: &DVector<f64>, c: f64) -> Option<DVector<f64>> {
    let d = x.ncols();
    let active: Vec<usize> = (0..z.len()).filter(|&i| z[i].abs() >= c * (1.0 - 1e-7)).collect();
    let (w_p, null) = if active.is_empty() {
        (DVector::zeros(d), DMatrix::identity(d, d))
    } else {
        let xa = DMatrix::from_fn(active.len(), d, |r, j| x[(active[r], j)]);
        let target = DVector::from_iterator(active.len(), active.iter().map(|&i| c * z[i].signum()));
        let rank = linalg::svd(&DenseMatrix::wrap(xa.clone())).ok()?.rank();
        let pinv = linalg::pseudoinverse(&DenseMatrix::wrap(xa.clone()), linalg::RANK_TOL).ok()?;
        let w_p = pinv.as_nalgebra() * &target;
        if (&xa * &w_p - &target).amax() > 1e-9 * c {
            return None;
        }
        let null = null_space(&xa, rank)?;
        (w_p, null)
    };
    let w = if null.ncols() == 0 {
        w_p
    } else {
        let xn = DenseMatrix::wrap(x * &null);
        let rhs = y - x * &w_p;
        let coef = linalg::pseudoinverse(&xn, linalg::RANK_TOL).ok()?.as_nalgebra() * rhs;
        w_p + &null * coef
    };
    let top = (x * &w).amax();
    (top <= c * (1.0 + 1e-12)).then(|| make_feasible(x, w, c))
}

/// Orthonormal basis of `null(A)` from the full eigenbasis of `AᵀA`.
fn null_space(a: &DMatrix<f64>, rank: usize) -> Option<DMatrix<f64>> {
    let d = a.ncols();
    let (_, vectors) = linalg::symmetric_eigen(&a.tr_mul(a)).ok()?;
    Some(vectors.columns(rank, d - rank).into_owned())
}

/// `Σ_t f_t(w_t) − Σ_t f_t(w*)` over a completed pass.
pub fn empirical_regret(
    telemetry: &[StepTelemetry],
    x: &DenseMatrix,
    y: &[f64],
    comparator: &DenseVector,
    c: f64,
) -> Result<f64> {
    if telemetry.len() != x.nrows() || y.len() != x.nrows() {
        return Err(Error::shape(
            format!("{} rounds", x.nrows()),
            format!("{} telemetry records, {} labels", telemetry.len(), y.len()),
        ));
    }
    if comparator.dim() != x.ncols() {
        return Err(Error::shape(format!("comparator of dim {}", x.ncols()), comparator.dim()));
    }
    let scores = x.as_nalgebra() * comparator.as_nalgebra();
    if let Some((t, s)) = scores.iter().enumerate().find(|(_, s)| s.abs() > c * (1.0 + 1e-9) + 1e-12) {
        return Err(Error::Domain(format!("comparator is infeasible at round {}: |wᵀx| = {}", t + 1, s.abs())));
    }
    let learner: f64 = telemetry.iter().map(|r| r.loss).sum();
    let comparator_loss: f64 = scores.iter().zip(y).map(|(s, l)| (s - l) * (s - l)).sum();
    Ok(learner - comparator_loss)
}

/// Phase boundary data for a zero-ridge run.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretBoundInputs {
    /// First round after which `α > 0`; `None` if the ridge never left zero.
    pub t_prime: Option<usize>,
    /// Rank of `Σ_{t ≤ T'} g gᵀ`.
    pub r: usize,
    /// Smallest nonzero singular value of that sum.
    pub sigma_star: f64,
    pub mu: f64,
    pub mu_prime: f64,
}

/// Snapshot of a run taken at the round where the ridge first becomes
/// positive.
#[derive(Clone, Debug)]
pub struct RegretDiagnostics {
    pub t_prime: Option<usize>,
    /// `Σ g gᵀ` over rounds `1..=T'` (every round when `T'` never occurs).
    pub phase_one_gram: DenseMatrix,
    /// `H` after round `T'`.
    pub hessian_at_t_prime: Option<DenseMatrix>,
    /// Weights used in round `T'`.
    pub w_at_t_prime: Option<DenseVector>,
    /// Weights produced by round `T'`, used from round `T' + 1` on.
    pub w_after_t_prime: Option<DenseVector>,
}

impl RegretDiagnostics {
    pub fn inputs(&self, config: &OnsConfig) -> Result<RegretBoundInputs> {
        let sv = linalg::singular_values(&self.phase_one_gram)?;
        let r = numerical_rank(&sv);
        Ok(RegretBoundInputs {
            t_prime: self.t_prime,
            r,
            sigma_star: if r == 0 { 0.0 } else { sv[r - 1] },
            mu: config.mu,
            mu_prime: config.mu,
        })
    }
}

/// [`super::run_online`] that also records [`RegretDiagnostics`].
pub fn run_online_with_diagnostics(
    x: &DenseMatrix,
    y: &[f64],
    config: &OnsConfig,
) -> Result<(OnlineRun, RegretDiagnostics)> {
    let d = x.ncols();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut previous_w = DVector::<f64>::zeros(d);
    let mut diag = RegretDiagnostics {
        t_prime: None,
        phase_one_gram: DenseMatrix::zeros(d, d),
        hessian_at_t_prime: None,
        w_at_t_prime: None,
        w_after_t_prime: None,
    };
    let run = run_with(x, y, config, |state, record, row, label| {
        if diag.t_prime.is_none() {
            let g = DVector::from_column_slice(row) * (2.0 * (record.prediction - label));
            gram.ger(1.0, &g, &g, 1.0);
            if record.alpha_t > 0.0 {
                diag.t_prime = Some(record.t);
                diag.hessian_at_t_prime = Some(state.hessian());
                diag.w_at_t_prime = Some(DenseVector::wrap(previous_w.clone()));
                diag.w_after_t_prime = Some(state.weights());
            }
        }
        previous_w.copy_from_slice(state.weights_slice());
        Ok(())
    })?;
    diag.phase_one_gram = DenseMatrix::wrap(gram);
    Ok((run, diag))
}

/// Phase-one part of the zero-ridge bound.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseOneBound {
    pub inputs: RegretBoundInputs,
    /// `Σ_{t ≤ T'} ‖g_t‖²`.
    pub grad_norm_sq_sum: f64,
    /// With `m(m − 1)σ*` in the logarithm.
    pub value: f64,
    /// With `(1 + r)rσ*` in the logarithm.
    pub value_rank_form: f64,
}

/// Assembled right-hand side of the regret bound.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretBound {
    pub total: f64,
    /// `α₀‖w*‖²/2`, or `½‖w_{T'+1} − w*‖²_{H_{T'}}` for a zero-ridge run.
    pub start_term: f64,
    /// `2(CL)² Σ_t η_t`.
    pub eta_term: f64,
    /// `m/(2(μ + η_T))·ln(tr(BᵀB)/(mα₀) + α_T/α₀)`.
    pub log_term: f64,
    /// `(d − m)/(2(μ + η_T))·ln(α_T/α₀)`.
    pub omega_log: f64,
    /// `m/(4(μ + η_T))·Σ_t σ_t²/α_t`.
    pub omega_ratio: f64,
    /// `C² Σ_t σ_t²`.
    pub omega_shrink: f64,
    pub phase_one: Option<PhaseOneBound>,
    /// `½‖w_{T'}‖²_{H_{T'}}`, reported next to the start term for comparison.
    pub start_term_at_t_prime: Option<f64>,
}

/// Right-hand side of the regret bound against `w_star` for a completed
/// robust-sketch run.
///
/// `σ_t²` is the shrinkage consumed in round `t` and `α_t` the ridge after
/// it. A fast-mode run can hold up to `2m − 1` rows, so `2m` replaces `m` in the
/// sketch-size factors there. With `α₀ = 0` the bound splits at `T'`: the
/// phase-one bound covers rounds `1..=T'` and the positive-ridge bound, started
/// from `H_{T'}`, covers the rest.
pub fn regret_bound_rhs(
    telemetry: &[StepTelemetry],
    diagnostics: &RegretDiagnostics,
    config: &OnsConfig,
    w_star: &DenseVector,
) -> Result<RegretBound> {
    if config.algorithm != Algorithm::RfdSon {
        return Err(Error::Config(format!(
            "regret bound is assembled for rfd_son only, got {}",
            config.algorithm
        )));
    }
    let last = telemetry.last().ok_or_else(|| Error::Precondition("empty telemetry".into()))?;
    let trace = last
        .trace_btb
        .ok_or_else(|| Error::Precondition("telemetry is missing the final trace_btb".into()))?;
    let d = w_star.dim();
    let m_sketch = if config.fast_mode { 2 * config.m } else { config.m };
    let m = m_sketch.min(d) as f64;
    let mu = telemetry.iter().map(|r| r.mu).fold(f64::INFINITY, f64::min);
    let k = mu + last.eta;
    let cl = config.c * config.lipschitz;
    let eta_term = 2.0 * cl * cl * telemetry.iter().map(|r| r.eta).sum::<f64>();
    let alpha_t = last.alpha_t;

    let tail = |start: usize, base_alpha: f64| {
        let rounds = &telemetry[start..];
        let log_term = m / (2.0 * k) * (trace / (m * base_alpha) + alpha_t / base_alpha).ln();
        let omega_log = (d as f64 - m).max(0.0) / (2.0 * k) * (alpha_t / base_alpha).ln();
        let ratio: f64 = rounds.iter().map(|r| r.sigma_m_sq / r.alpha_t).sum();
        let shrink: f64 = rounds.iter().map(|r| r.sigma_m_sq).sum();
        (log_term, omega_log, m / (4.0 * k) * ratio, config.c * config.c * shrink)
    };

    if config.alpha0 > 0.0 {
        let start_term = config.alpha0 / 2.0 * w_star.norm_sq();
        let (log_term, omega_log, omega_ratio, omega_shrink) = tail(0, config.alpha0);
        return Ok(RegretBound {
            total: start_term + eta_term + log_term + omega_log + omega_ratio + omega_shrink,
            start_term,
            eta_term,
            log_term,
            omega_log,
            omega_ratio,
            omega_shrink,
            phase_one: None,
            start_term_at_t_prime: None,
        });
    }

    let inputs = diagnostics.inputs(config)?;
    let phase_rounds = inputs.t_prime.unwrap_or(telemetry.len());
    let grad_norm_sq_sum: f64 = telemetry[..phase_rounds].iter().map(|r| r.grad_norm_sq).sum();
    let k1 = telemetry[0].eta + inputs.mu_prime;
    let phase_log = |denominator: f64| {
        if inputs.sigma_star > 0.0 && denominator > 0.0 {
            (1.0 + 2.0 * grad_norm_sq_sum / (denominator * inputs.sigma_star)).ln()
        } else {
            0.0
        }
    };
    let pair = m * (m - 1.0);
    let rank_pair = (1.0 + inputs.r as f64) * inputs.r as f64;
    let head = (m - 1.0) / (2.0 * k1);
    let phase_one = PhaseOneBound {
        grad_norm_sq_sum,
        value: head + pair / (2.0 * k1) * phase_log(pair),
        value_rank_form: head + pair / (2.0 * k1) * phase_log(rank_pair),
        inputs,
    };

    let mut bound = RegretBound {
        total: 0.0,
        start_term: 0.0,
        eta_term,
        log_term: 0.0,
        omega_log: 0.0,
        omega_ratio: 0.0,
        omega_shrink: 0.0,
        phase_one: None,
        start_term_at_t_prime: None,
    };
    if let Some(t_prime) = phase_one.inputs.t_prime {
        let missing = || Error::Precondition("diagnostics are missing the phase boundary snapshot".into());
        let h = diagnostics.hessian_at_t_prime.as_ref().ok_or_else(missing)?;
        let w_next = diagnostics.w_after_t_prime.as_ref().ok_or_else(missing)?;
        let w_prev = diagnostics.w_at_t_prime.as_ref().ok_or_else(missing)?;
        let quad = |v: &DenseVector| -> Result<f64> { v.dot(&h.mul_vec(v)?) };
        bound.start_term = 0.5 * quad(&w_next.sub(w_star)?)?;
        bound.start_term_at_t_prime = Some(0.5 * quad(w_prev)?);
        let base_alpha = telemetry[t_prime - 1].alpha_t;
        let (log_term, omega_log, omega_ratio, omega_shrink) = tail(t_prime, base_alpha);
        bound.log_term = log_term;
        bound.omega_log = omega_log;
        bound.omega_ratio = omega_ratio;
        bound.omega_shrink = omega_shrink;
    }
    bound.total = phase_one.value
        + bound.eta_term
        + bound.start_term
        + bound.log_term
        + bound.omega_log
        + bound.omega_ratio
        + bound.omega_shrink;
    bound.phase_one = Some(phase_one);
    Ok(bound)
}
