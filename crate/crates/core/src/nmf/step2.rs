use nalgebra::DMatrix;

use super::{apply_floor, check_step, converged, divergence_slices, ratio, validate_iterations, Step2Config};
use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-8;
/// Row-sum drift of `M` that signals inputs violating the Step-2 preconditions.
const DRIFT_TOL: f64 = 1e-6;

/// Result of a Step-2 run: `m = [M(0), ..., M(m-1)]`, `N x mN`.
///
/// `trace[0]` is the divergence at the initial matrix.
#[derive(Debug, Clone)]
pub struct Step2State {
    pub m: DMatrix<f64>,
    pub iteration: usize,
    pub trace: Vec<f64>,
    /// Largest `|row sum - 1|` of `M` seen after any iteration.
    pub max_row_drift: f64,
}

impl Step2State {
    pub fn initial_divergence(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_divergence(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial value")
    }
}

fn row_drift(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
}

fn check_rows_stochastic(mat: &DMatrix<f64>, what: &str) -> Result<()> {
    for (i, row) in mat.row_iter().enumerate() {
        let s = row.sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Validation { what: format!("{what} row sums to {s}"), row: i });
        }
    }
    Ok(())
}

fn check_finite_nonneg(mat: &DMatrix<f64>, what: &str) -> Result<()> {
    if mat.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Input(format!("{what} has a negative or non-finite entry")));
    }
    Ok(())
}

/// Fits `M` in `min D(Gamma* || M Gamma_block)` subject to `M e = e`.
///
/// `gamma_star` is `N x m^n`, `gamma_block = diag(Gamma*_{n-1}, ...)` is
/// `mN x m^n`. With stochastic rows in both inputs the update
/// `M_ik <- M_ik sum_j Gb_kj S_ij / (M Gb)_ij` keeps the rows of `M` summing
/// to `sum_j S_ij = 1`, so no renormalization is applied.
pub fn step2_gamma(gamma_star: &DMatrix<f64>, gamma_block: &DMatrix<f64>, cfg: &Step2Config) -> Result<Step2State> {
    step2_gamma_observed(gamma_star, gamma_block, cfg, |_, _| {})
}

/// [`step2_gamma`] calling `observer(iteration, &M)` after every iteration.
pub fn step2_gamma_observed<F>(
    gamma_star: &DMatrix<f64>,
    gamma_block: &DMatrix<f64>,
    cfg: &Step2Config,
    mut observer: F,
) -> Result<Step2State>
where
    F: FnMut(usize, &DMatrix<f64>),
{
    validate_iterations(cfg.max_iterations)?;
    let (states, len) = gamma_star.shape();
    if gamma_block.ncols() != len || gamma_block.nrows() == 0 || gamma_block.nrows() % states != 0 {
        return Err(Error::Shape(format!(
            "Gamma* is {:?} but the block matrix is {:?}",
            gamma_star.shape(),
            gamma_block.shape()
        )));
    }
    check_finite_nonneg(gamma_star, "Gamma*")?;
    check_finite_nonneg(gamma_block, "block Gamma")?;
    check_rows_stochastic(gamma_star, "Gamma*")?;
    check_rows_stochastic(gamma_block, "block Gamma")?;

    let mut m = cfg.initial_matrix(states, gamma_block.nrows())?;
    let mut approx = &m * gamma_block;
    let mut trace = Vec::with_capacity(cfg.max_iterations + 1);
    trace.push(divergence_slices(gamma_star.as_slice(), approx.as_slice()));
    let mut max_row_drift: f64 = 0.0;

    let block_t = gamma_block.transpose();
    let mut iteration = 0;
    while iteration < cfg.max_iterations {
        let r = ratio(gamma_star, &approx);
        let numer = &r * &block_t;
        m.component_mul_assign(&numer);
        apply_floor(&mut m);
        iteration += 1;

        let drift = row_drift(&m);
        max_row_drift = max_row_drift.max(drift);
        if drift > DRIFT_TOL {
            return Err(Error::Internal(format!(
                "step 2 (Gamma): row sums of M drifted by {drift:e} at iteration {iteration}"
            )));
        }

        approx = &m * gamma_block;
        let prev = *trace.last().unwrap();
        let next = divergence_slices(gamma_star.as_slice(), approx.as_slice());
        check_step("step 2 (Gamma)", iteration, prev, next)?;
        trace.push(next);
        observer(iteration, &m);
        if converged(cfg.tolerance, prev, next) {
            break;
        }
    }
    Ok(Step2State { m, iteration, trace, max_row_drift })
}

/// Fits `M` in `min D(Pi~* || Pi*_{n-1} M)` subject to `M e = e`.
///
/// `pi_tilde` is `m^(n-1) x mN` and `pi_prev` is `m^(n-1) x N`. Each
/// multiplicative update is followed by scaling the rows of `M` back to one.
pub fn step2_pi(pi_tilde: &DMatrix<f64>, pi_prev: &DMatrix<f64>, cfg: &Step2Config) -> Result<Step2State> {
    step2_pi_observed(pi_tilde, pi_prev, cfg, |_, _| {})
}

pub fn step2_pi_observed<F>(
    pi_tilde: &DMatrix<f64>,
    pi_prev: &DMatrix<f64>,
    cfg: &Step2Config,
    mut observer: F,
) -> Result<Step2State>
where
    F: FnMut(usize, &DMatrix<f64>),
{
    validate_iterations(cfg.max_iterations)?;
    let (rows, states) = pi_prev.shape();
    if pi_tilde.nrows() != rows || states == 0 || pi_tilde.ncols() % states != 0 {
        return Err(Error::Shape(format!(
            "Pi~ is {:?} but Pi_(n-1) is {:?}",
            pi_tilde.shape(),
            pi_prev.shape()
        )));
    }
    check_finite_nonneg(pi_tilde, "Pi~")?;
    check_finite_nonneg(pi_prev, "Pi_(n-1)")?;
    let col_mass = pi_prev.row_sum();
    if let Some(state) = col_mass.iter().position(|&c| c <= 0.0) {
        return Err(Error::DegenerateState { state, reason: "column of Pi_(n-1) is zero".into() });
    }

    let mut m = cfg.initial_matrix(states, pi_tilde.ncols())?;
    let mut approx = pi_prev * &m;
    let mut trace = Vec::with_capacity(cfg.max_iterations + 1);
    trace.push(divergence_slices(pi_tilde.as_slice(), approx.as_slice()));
    let mut max_row_drift: f64 = 0.0;

    let prev_t = pi_prev.transpose();
    let mut iteration = 0;
    while iteration < cfg.max_iterations {
        // M_kj <- M_kj [sum_i W_ik T_ij / (W M)_ij] / sum_i W_ik, then rows to one
        let r = ratio(pi_tilde, &approx);
        let numer = &prev_t * &r;
        for k in 0..states {
            let d = col_mass[k];
            for j in 0..m.ncols() {
                m[(k, j)] *= numer[(k, j)] / d;
            }
        }
        apply_floor(&mut m);
        for mut row in m.row_iter_mut() {
            let s = row.sum();
            row.unscale_mut(s);
        }
        iteration += 1;
        max_row_drift = max_row_drift.max(row_drift(&m));

        approx = pi_prev * &m;
        let prev = *trace.last().unwrap();
        let next = divergence_slices(pi_tilde.as_slice(), approx.as_slice());
        check_step("step 2 (Pi)", iteration, prev, next)?;
        trace.push(next);
        observer(iteration, &m);
        if converged(cfg.tolerance, prev, next) {
            break;
        }
    }
    Ok(Step2State { m, iteration, trace, max_row_drift })
}
