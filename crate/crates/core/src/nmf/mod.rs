//! Constrained I-divergence NMF.
//!
//! [`step1_factorize`] approximates a Hankel matrix by `Pi Gamma` with
//! `e^T Pi e = 1` and `Gamma e = e`. [`step2_gamma`] and [`step2_pi`] then fit
//! the parameter matrix `M = [M(0), ..., M(m-1)]` with `M e = e` against one
//! fixed factor. All solvers use plain multiplicative updates and record the
//! divergence after every iteration.

mod divergence;
mod step1;
mod step2;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use divergence::{divergence, divergence_term, Divergence};
pub use step1::{rescale_gamma_rows, step1_factorize};
pub use step2::{step2_gamma, step2_gamma_observed, step2_pi, step2_pi_observed, Step2State};

pub(crate) use divergence::divergence_slices;

use crate::error::{Error, Result};

/// Entries are clamped from below at this value after every multiplicative
/// update; an exact zero could never be revived.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

/// A trace step may rise by this fraction of the previous value.
pub const MONOTONE_REL_SLACK: f64 = 1e-12;
/// Absolute rounding allowance for traces that converge to (machine) zero,
/// where the relative slack is meaningless.
pub const MONOTONE_ABS_SLACK: f64 = 1e-24;
/// Multiple of `eps * sqrt(D)` allowed as evaluation noise. Rounding of the
/// reconstructed entries perturbs `D` by about `eps * sum |P - Q|`, which is
/// bounded by `eps * sqrt(2 D mass)`.
pub const MONOTONE_NOISE_FACTOR: f64 = 64.0;

/// Step 1 and Step 2 draw from separate streams of the same seed.
pub(crate) const STEP1_STREAM: u64 = 0;
pub(crate) const STEP2_STREAM: u64 = 1;

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// i.i.d. entries on `(0, 1]`.
pub(crate) fn random_positive(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // column-major fill order, fixed for reproducibility
    DMatrix::from_fn(rows, cols, |_, _| 1.0 - rng.random::<f64>())
}

pub(crate) fn normalize_rows(mat: &mut DMatrix<f64>) {
    for mut row in mat.row_iter_mut() {
        let s = row.sum();
        row.unscale_mut(s);
    }
}

pub(crate) fn apply_floor(mat: &mut DMatrix<f64>) {
    mat.apply(|v| *v = v.max(POSITIVITY_FLOOR));
}

/// `P / Q` entrywise with `0 / q = 0`.
pub(crate) fn ratio(p: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    p.zip_map(q, |a, b| if a == 0.0 { 0.0 } else { a / b.max(POSITIVITY_FLOOR) })
}

/// Trace check shared by every solver:
/// `next <= prev (1 + rel) + abs + c eps sqrt(prev)`.
pub fn is_monotone_step(prev: f64, next: f64) -> bool {
    let noise = MONOTONE_NOISE_FACTOR * f64::EPSILON * prev.max(0.0).sqrt();
    next <= prev + MONOTONE_REL_SLACK * prev + MONOTONE_ABS_SLACK + noise
}

pub(crate) fn check_step(solver: &str, iteration: usize, prev: f64, next: f64) -> Result<()> {
    if next.is_nan() || !is_monotone_step(prev, next) {
        return Err(Error::Internal(format!(
            "{solver}: divergence rose from {prev:e} to {next:e} at iteration {iteration}"
        )));
    }
    Ok(())
}

/// Initial factors for Step 1.
#[derive(Debug, Clone, Default)]
pub enum Step1Init {
    /// Uniform entries, then `Gamma` rows and the total of `Pi` scaled to one.
    #[default]
    Random,
    Explicit { pi: DMatrix<f64>, gamma: DMatrix<f64> },
}

#[derive(Debug, Clone)]
pub struct Step1Config {
    pub max_iterations: usize,
    pub seed: u64,
    pub init: Step1Init,
    /// Stop once the relative one-step decrease falls below this.
    pub tolerance: Option<f64>,
}

impl Default for Step1Config {
    fn default() -> Self {
        Self { max_iterations: 3000, seed: 0, init: Step1Init::Random, tolerance: None }
    }
}

/// Initial parameter matrix for Step 2.
#[derive(Debug, Clone, Default)]
pub enum Step2Init {
    /// Uniform entries with rows scaled to one.
    #[default]
    Random,
    Explicit(DMatrix<f64>),
}

#[derive(Debug, Clone)]
pub struct Step2Config {
    pub max_iterations: usize,
    pub seed: u64,
    pub init: Step2Init,
    pub tolerance: Option<f64>,
}

impl Default for Step2Config {
    fn default() -> Self {
        Self { max_iterations: 3000, seed: 0, init: Step2Init::Random, tolerance: None }
    }
}

impl Step2Config {
    /// Draws (or copies) the starting matrix for an `N x mN` problem.
    pub fn initial_matrix(&self, states: usize, cols: usize) -> Result<DMatrix<f64>> {
        match &self.init {
            Step2Init::Random => {
                let mut rng = seeded_rng(self.seed, STEP2_STREAM);
                let mut m = random_positive(&mut rng, states, cols);
                normalize_rows(&mut m);
                Ok(m)
            }
            Step2Init::Explicit(m) => {
                if m.shape() != (states, cols) {
                    return Err(Error::Shape(format!("initial M is {:?}, expected {:?}", m.shape(), (states, cols))));
                }
                if m.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                    return Err(Error::Invalid("initial M must be strictly positive".into()));
                }
                Ok(m.clone())
            }
        }
    }
}

fn validate_iterations(max_iterations: usize) -> Result<()> {
    if max_iterations == 0 {
        return Err(Error::Invalid("max_iterations must be at least 1".into()));
    }
    Ok(())
}

pub(crate) fn converged(tolerance: Option<f64>, prev: f64, next: f64) -> bool {
    tolerance.is_some_and(|tol| prev - next <= tol * prev)
}

/// Step-1 factor pair with its divergence trace.
///
/// `trace[0]` is the divergence at the (normalized) initial factors and
/// `trace[k]` the value after `k` iterations.
#[derive(Debug, Clone)]
pub struct NmfState {
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    pub iteration: usize,
    pub trace: Vec<f64>,
}

impl NmfState {
    pub fn initial_divergence(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_divergence(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial value")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_step_allows_only_rounding_noise() {
        assert!(is_monotone_step(1.0, 1.0 + 5e-13));
        assert!(!is_monotone_step(1.0, 1.0 + 1e-11));
        assert!(is_monotone_step(1.1534079435809846e-11, 1.153407943591956e-11));
        assert!(!is_monotone_step(1e-6, 1e-6 * (1.0 + 1e-9)));
        assert!(is_monotone_step(7.5e-33, 9.9e-32));
    }
}
