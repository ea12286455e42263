//! Pseudo-Hankel matrices `H_nn[r, s] = q(u_r v_s)` and their factors.
//!
//! For an HMM, `H = Pi_n Gamma_n` where row `r` of `Pi_n` is the forward
//! vector `pi(u_r)` (rows in FLO) and column `s` of `Gamma_n` is the backward
//! vector `gamma(v_s)` (columns in LLO). The helpers below move between
//! lengths `n` and `n - 1` by marginalizing and regrouping these factors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hmm::HmmModel;
use crate::lex::LexOrder;

/// Default cap on the number of entries of a dense Hankel matrix.
pub const DEFAULT_MAX_ENTRIES: usize = 1 << 20;

/// Tolerance on the total mass of a distribution passed to [`hankel_from_oracle`].
const ORACLE_MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct HankelSystem {
    pub m: usize,
    pub n: usize,
    /// `m^n x m^n`, rows FLO, columns LLO.
    pub h: DMatrix<f64>,
    /// `m^n x N`, rows FLO.
    pub pi_n: DMatrix<f64>,
    /// `N x m^n`, columns LLO.
    pub gamma_n: DMatrix<f64>,
}

fn hankel_side(m: usize, n: usize, max_entries: usize) -> Result<usize> {
    let side = LexOrder::flo(m, n)?.size();
    match side.checked_mul(side) {
        Some(entries) if entries <= max_entries => Ok(side),
        _ => Err(Error::SizeLimit(format!(
            "Hankel matrix for m = {m}, n = {n} has {side}^2 entries, limit is {max_entries}"
        ))),
    }
}

/// Returns `k` with `m^k == len`, if any.
fn exponent_of(len: usize, m: usize) -> Option<usize> {
    if m < 2 {
        return (len == 1).then_some(0);
    }
    let mut k = 0;
    let mut acc = 1usize;
    while acc < len {
        acc = acc.checked_mul(m)?;
        k += 1;
    }
    (acc == len).then_some(k)
}

fn require_power(len: usize, m: usize, what: &str) -> Result<usize> {
    match exponent_of(len, m) {
        Some(k) if k >= 1 => Ok(k),
        _ => Err(Error::Shape(format!("{what} has {len} strings, not a positive power of {m}"))),
    }
}

/// Builds `Pi_n`, `Gamma_n` and `H = Pi_n Gamma_n` with the default size cap.
pub fn build_factors(model: &HmmModel, n: usize) -> Result<HankelSystem> {
    build_factors_capped(model, n, DEFAULT_MAX_ENTRIES)
}

pub fn build_factors_capped(model: &HmmModel, n: usize, max_entries: usize) -> Result<HankelSystem> {
    if n == 0 {
        return Err(Error::Domain("Hankel half-length must be at least 1".into()));
    }
    let m = model.m();
    let states = model.n_states();
    hankel_side(m, n, max_entries)?;

    // Pi_k = [Pi_{k-1} M(0); ...; Pi_{k-1} M(m-1)]
    // Gamma_k = [M(0) Gamma_{k-1}, ..., M(m-1) Gamma_{k-1}]
    let mut pi_k = DMatrix::from_row_slice(1, states, model.pi().as_slice());
    let mut gamma_k = DMatrix::from_element(states, 1, 1.0);
    for _ in 0..n {
        let rows = pi_k.nrows();
        let cols = gamma_k.ncols();
        let mut next_pi = DMatrix::zeros(rows * m, states);
        let mut next_gamma = DMatrix::zeros(states, cols * m);
        for (y, block) in model.blocks().iter().enumerate() {
            next_pi.rows_mut(y * rows, rows).copy_from(&(&pi_k * block));
            next_gamma.columns_mut(y * cols, cols).copy_from(&(block * &gamma_k));
        }
        pi_k = next_pi;
        gamma_k = next_gamma;
    }
    let h = &pi_k * &gamma_k;
    Ok(HankelSystem { m, n, h, pi_n: pi_k, gamma_n: gamma_k })
}

/// Tabulates `H[r, s] = dist(u_r v_s)` for an arbitrary distribution on `Y^{2n}`.
pub fn hankel_from_oracle<F>(dist: F, m: usize, n: usize) -> Result<DMatrix<f64>>
where
    F: Fn(&[usize]) -> f64,
{
    let side = hankel_side(m, n, DEFAULT_MAX_ENTRIES)?;
    let rows = LexOrder::flo(m, n)?;
    let cols = LexOrder::llo(m, n)?;
    let prefixes: Vec<Vec<usize>> = (0..side).map(|r| rows.decode(r)).collect::<Result<_>>()?;
    let suffixes: Vec<Vec<usize>> = (0..side).map(|s| cols.decode(s)).collect::<Result<_>>()?;

    let mut h = DMatrix::zeros(side, side);
    let mut word = Vec::with_capacity(2 * n);
    for (r, u) in prefixes.iter().enumerate() {
        for (s, v) in suffixes.iter().enumerate() {
            word.clear();
            word.extend_from_slice(u);
            word.extend_from_slice(v);
            let p = dist(&word);
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Input(format!("probability {p} for string {word:?}")));
            }
            h[(r, s)] = p;
        }
    }
    let total = h.sum();
    if (total - 1.0).abs() > ORACLE_MASS_TOL {
        return Err(Error::Input(format!("distribution sums to {total}, deviation {:e}", total - 1.0)));
    }
    Ok(h)
}

/// `Pi_{n-1}` from `Pi_n`: row `u` is the sum over `y` of rows `y u`.
pub fn marginalize_pi(pi_n: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    let n = require_power(pi_n.nrows(), m, "Pi")?;
    let short = LexOrder::flo(m, n - 1)?;
    let mut out = DMatrix::zeros(short.size(), pi_n.ncols());
    for u in 0..short.size() {
        for y in 0..m {
            let src = short.prepend_index(y, u)?;
            let mut row = out.row_mut(u);
            row += pi_n.row(src);
        }
    }
    Ok(out)
}

/// `Gamma_{n-1}` from `Gamma_n`: column `v` is the sum over `y` of columns `v y`.
pub fn marginalize_gamma(gamma_n: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    let n = require_power(gamma_n.ncols(), m, "Gamma")?;
    let short = LexOrder::llo(m, n - 1)?;
    let mut out = DMatrix::zeros(gamma_n.nrows(), short.size());
    for v in 0..short.size() {
        for y in 0..m {
            let src = short.append_index(v, y)?;
            let mut col = out.column_mut(v);
            col += gamma_n.column(src);
        }
    }
    Ok(out)
}

/// `diag(Gamma, ..., Gamma)` with `m` copies, shape `mN x m * cols`.
pub fn block_diag_gamma(gamma: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    let (states, cols) = gamma.shape();
    let too_big = || Error::SizeLimit(format!("block diagonal of {m} copies of a {states}x{cols} matrix"));
    let rows_out = states.checked_mul(m).ok_or_else(too_big)?;
    let cols_out = cols.checked_mul(m).ok_or_else(too_big)?;
    if rows_out.checked_mul(cols_out).is_none_or(|e| e > DEFAULT_MAX_ENTRIES * m) {
        return Err(too_big());
    }
    let mut out = DMatrix::zeros(rows_out, cols_out);
    for y in 0..m {
        out.view_mut((y * states, y * cols), (states, cols)).copy_from(gamma);
    }
    Ok(out)
}

/// `[Pi_{n-1} M(0), ..., Pi_{n-1} M(m-1)]` read off `Pi_n` by reindexing:
/// block `y` of row `u` is row `u y` of `Pi_n`.
pub fn repackage_pi_tilde(pi_n: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    let n = require_power(pi_n.nrows(), m, "Pi")?;
    let short = LexOrder::flo(m, n - 1)?;
    let states = pi_n.ncols();
    let mut out = DMatrix::zeros(short.size(), m * states);
    for u in 0..short.size() {
        for y in 0..m {
            let src = short.append_index(u, y)?;
            out.view_mut((u, y * states), (1, states)).copy_from(&pi_n.row(src));
        }
    }
    Ok(out)
}
