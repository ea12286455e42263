use nalgebra::{DMatrix, DVector};

use super::{
    apply_floor, check_step, converged, divergence_slices, normalize_rows, random_positive, ratio, seeded_rng,
    validate_iterations, NmfState, Step1Config, Step1Init, STEP1_STREAM,
};
use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-8;
const FINAL_MASS_TOL: f64 = 1e-6;

/// `Gamma <- D^-1 Gamma`, `Pi <- Pi D` with `D = diag(Gamma e)`.
///
/// Leaves `Pi Gamma` unchanged and makes every row of `Gamma` sum to one.
pub fn rescale_gamma_rows(pi: &mut DMatrix<f64>, gamma: &mut DMatrix<f64>) {
    for a in 0..gamma.nrows() {
        let d = gamma.row(a).sum();
        gamma.row_mut(a).unscale_mut(d);
        pi.column_mut(a).scale_mut(d);
    }
}

fn initial_factors(h: &DMatrix<f64>, states: usize, cfg: &Step1Config) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (rows, cols) = h.shape();
    match &cfg.init {
        Step1Init::Random => {
            let mut rng = seeded_rng(cfg.seed, STEP1_STREAM);
            let mut pi = random_positive(&mut rng, rows, states);
            let mut gamma = random_positive(&mut rng, states, cols);
            let total = pi.sum();
            pi.unscale_mut(total);
            normalize_rows(&mut gamma);
            Ok((pi, gamma))
        }
        Step1Init::Explicit { pi, gamma } => {
            if pi.shape() != (rows, states) || gamma.shape() != (states, cols) {
                return Err(Error::Shape(format!(
                    "initial factors {:?} x {:?} do not fit a {:?} Hankel matrix at rank {states}",
                    pi.shape(),
                    gamma.shape(),
                    h.shape()
                )));
            }
            if pi.iter().chain(gamma.iter()).any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(Error::Invalid("initial factors must be strictly positive".into()));
            }
            let mut pi = pi.clone();
            let mut gamma = gamma.clone();
            rescale_gamma_rows(&mut pi, &mut gamma);
            Ok((pi, gamma))
        }
    }
}

/// Rank-`states` factorization `H ~ Pi Gamma` minimizing `D(H || Pi Gamma)`
/// under `e^T Pi e = 1` and `Gamma e = e`.
///
/// One iteration updates `Pi`, then `Gamma`, then restores `Gamma e = e` with
/// [`rescale_gamma_rows`]. The multiplicative updates keep `sum(Pi Gamma)`
/// equal to `sum(H)`, so the total of `Pi` stays at one.
pub fn step1_factorize(h: &DMatrix<f64>, states: usize, cfg: &Step1Config) -> Result<NmfState> {
    validate_iterations(cfg.max_iterations)?;
    if states == 0 {
        return Err(Error::Invalid("target size must be at least 1".into()));
    }
    if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Input("Hankel matrix has a negative or non-finite entry".into()));
    }
    let mass = h.sum();
    if (mass - 1.0).abs() > MASS_TOL {
        return Err(Error::Input(format!("Hankel matrix sums to {mass}, expected 1")));
    }

    let (mut pi, mut gamma) = initial_factors(h, states, cfg)?;
    let mut approx = &pi * &gamma;
    let mut trace = Vec::with_capacity(cfg.max_iterations + 1);
    trace.push(divergence_slices(h.as_slice(), approx.as_slice()));

    let mut iteration = 0;
    while iteration < cfg.max_iterations {
        // Pi_ra <- Pi_ra [sum_s Gamma_as H_rs / (Pi Gamma)_rs] / sum_s Gamma_as
        let r = ratio(h, &approx);
        let numer = &r * gamma.transpose();
        let gamma_mass: DVector<f64> = gamma.column_sum();
        for a in 0..states {
            let d = gamma_mass[a];
            for (p, g) in pi.column_mut(a).iter_mut().zip(numer.column(a).iter()) {
                *p *= g / d;
            }
        }
        apply_floor(&mut pi);

        // Gamma_as <- Gamma_as [sum_r Pi_ra H_rs / (Pi Gamma)_rs] / sum_r Pi_ra
        approx = &pi * &gamma;
        let r = ratio(h, &approx);
        let numer = pi.transpose() * &r;
        let pi_mass = pi.row_sum();
        for a in 0..states {
            let d = pi_mass[a];
            for s in 0..gamma.ncols() {
                gamma[(a, s)] *= numer[(a, s)] / d;
            }
        }
        apply_floor(&mut gamma);

        rescale_gamma_rows(&mut pi, &mut gamma);
        approx = &pi * &gamma;
        iteration += 1;

        let prev = *trace.last().unwrap();
        let next = divergence_slices(h.as_slice(), approx.as_slice());
        check_step("step 1", iteration, prev, next)?;
        trace.push(next);
        if converged(cfg.tolerance, prev, next) {
            break;
        }
    }

    let total = pi.sum();
    if (total - mass).abs() > FINAL_MASS_TOL {
        return Err(Error::Internal(format!("step 1 ended with e^T Pi e = {total}")));
    }
    Ok(NmfState { left: pi, right: gamma, iteration, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;
    use crate::hankel::build_factors;
    use crate::nmf::{divergence, is_monotone_step};

    #[test]
    fn rescale_keeps_product() {
        let mut rng = seeded_rng(3, 0);
        let mut pi = random_positive(&mut rng, 8, 3);
        let mut gamma = random_positive(&mut rng, 3, 8);
        let before = &pi * &gamma;
        rescale_gamma_rows(&mut pi, &mut gamma);
        assert!((&pi * &gamma - before).amax() <= 1e-14);
        for row in gamma.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_rank_recovers_zero_divergence() {
        let sys = build_factors(&examples::example1(), 2).unwrap();
        // start near the exact factors
        let pi0 = sys.pi_n.map(|v| v * 1.05);
        let gamma0 = sys.gamma_n.map(|v| v * 0.97 + 0.01);
        let cfg = Step1Config {
            max_iterations: 5000,
            init: Step1Init::Explicit { pi: pi0, gamma: gamma0 },
            ..Default::default()
        };
        let state = step1_factorize(&sys.h, 4, &cfg).unwrap();
        assert!(state.final_divergence() < 1e-12, "{}", state.final_divergence());
        assert!(divergence(&sys.h, &(&sys.pi_n * &sys.gamma_n)).unwrap().value() < 1e-28);
    }

    #[test]
    fn rank_one_outer_product() {
        let p = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let q = nalgebra::RowDVector::from_vec(vec![0.25, 0.5, 0.125, 0.125]);
        let h = &p * &q;
        let state = step1_factorize(&h, 1, &Step1Config { max_iterations: 50, ..Default::default() }).unwrap();
        assert!((&state.left.column(0) - &p).amax() <= 1e-8);
        assert!((&state.right.row(0) - &q).amax() <= 1e-8);
    }

    #[test]
    fn trace_monotone_and_mass_one() {
        let sys = build_factors(&examples::example2(), 3).unwrap();
        let cfg = Step1Config { max_iterations: 300, seed: 11, ..Default::default() };
        let state = step1_factorize(&sys.h, 2, &cfg).unwrap();
        assert_eq!(state.trace.len(), 301);
        assert!(state.trace.windows(2).all(|w| is_monotone_step(w[0], w[1])));
        assert!((state.left.sum() - 1.0).abs() < 1e-12);
        for row in state.right.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-14);
        }
        assert!(state.left.iter().chain(state.right.iter()).all(|&v| v > 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let sys = build_factors(&examples::example1(), 2).unwrap();
        let cfg = Step1Config { max_iterations: 20, seed: 5, ..Default::default() };
        let a = step1_factorize(&sys.h, 2, &cfg).unwrap();
        let b = step1_factorize(&sys.h, 2, &cfg).unwrap();
        assert_eq!(a.left, b.left);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn early_stop_on_tolerance() {
        let sys = build_factors(&examples::example1(), 2).unwrap();
        let cfg = Step1Config { max_iterations: 10_000, tolerance: Some(1e-3), ..Default::default() };
        let state = step1_factorize(&sys.h, 2, &cfg).unwrap();
        assert!(state.iteration < 10_000);
        assert_eq!(state.trace.len(), state.iteration + 1);
    }

    #[test]
    fn input_errors() {
        let h = DMatrix::from_element(2, 2, 0.3);
        assert!(matches!(step1_factorize(&h, 1, &Step1Config::default()), Err(Error::Input(_))));
        let h = DMatrix::from_element(2, 2, 0.25);
        let cfg = Step1Config { max_iterations: 0, ..Default::default() };
        assert!(step1_factorize(&h, 1, &cfg).is_err());
        assert!(step1_factorize(&h, 0, &Step1Config::default()).is_err());
    }

    #[test]
    fn zero_rows_stay_finite() {
        let mut h = DMatrix::from_element(4, 4, 1.0 / 12.0);
        h.row_mut(2).fill(0.0);
        let state = step1_factorize(&h, 2, &Step1Config { max_iterations: 200, ..Default::default() }).unwrap();
        assert!(state.left.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(state.final_divergence().is_finite());
    }
}
