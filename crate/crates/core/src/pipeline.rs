//! The two-step reduction: Hankel matrix, Step 1, regrouping of the Step-1
//! factors, Step 2, model assembly and the divergence diagnostics.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hankel::{block_diag_gamma, build_factors, marginalize_gamma, marginalize_pi, repackage_pi_tilde};
use crate::hmm::{stationary_vector, HmmModel};
use crate::nmf::{
    divergence, step1_factorize, step2_gamma_observed, step2_pi_observed, Divergence, NmfState, Step1Config,
    Step2Config, Step2State,
};

/// Which factor Step 2 fits the parameters against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Step2Version {
    /// `min D(Gamma*_n || M diag(Gamma*_{n-1}, ...))`
    #[default]
    Gamma,
    /// `min D(Pi~*_n || Pi*_{n-1} M)`
    Pi,
}

impl fmt::Display for Step2Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Step2Version::Gamma => "gamma",
            Step2Version::Pi => "pi",
        })
    }
}

impl FromStr for Step2Version {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gamma" => Ok(Step2Version::Gamma),
            "pi" => Ok(Step2Version::Pi),
            other => Err(Error::Invalid(format!("unknown step-2 version {other:?} (expected gamma or pi)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReductionConfig {
    pub target_size: usize,
    /// Hankel half-length `n`.
    pub hankel_half_length: usize,
    pub step2_version: Step2Version,
    pub step1: Step1Config,
    pub step2: Step2Config,
}

impl ReductionConfig {
    /// Defaults: `n = 2N + 1`, Gamma version, 3000 + 3000 iterations, seed 0.
    pub fn new(target_size: usize) -> Self {
        Self {
            target_size,
            hankel_half_length: 2 * target_size + 1,
            step2_version: Step2Version::Gamma,
            step1: Step1Config::default(),
            step2: Step2Config::default(),
        }
    }

    /// Sets the seed of both steps.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.step1.seed = seed;
        self.step2.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 {
            return Err(Error::Invalid("target size must be at least 1".into()));
        }
        if self.hankel_half_length < 2 {
            return Err(Error::Invalid(format!(
                "Hankel half-length must be at least 2, got {}",
                self.hankel_half_length
            )));
        }
        if self.step1.max_iterations == 0 || self.step2.max_iterations == 0 {
            return Err(Error::Invalid("iteration budgets must be at least 1".into()));
        }
        if self.hankel_half_length <= 2 * self.target_size {
            log::warn!(
                "n = {} does not exceed 2N = {}; the fitted Hankel matrix may not determine the reduced model",
                self.hankel_half_length,
                2 * self.target_size
            );
        }
        Ok(())
    }
}

/// Everything computed up to (and including) Step 2.
#[derive(Debug, Clone)]
pub struct PartialReduction {
    pub m_star: DMatrix<f64>,
    pub div1b: f64,
    pub div1: f64,
    pub div2b: f64,
    pub div2: f64,
    pub step1_trace: Vec<f64>,
    pub step2_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReductionResult {
    pub model_star: HmmModel,
    pub div1b: f64,
    pub div1: f64,
    pub div2b: f64,
    pub div2: f64,
    pub div_final: f64,
    pub step1_trace: Vec<f64>,
    pub step2_trace: Vec<f64>,
    pub step1_iterations: usize,
    pub step2_iterations: usize,
}

impl ReductionResult {
    /// `[M*(0), ..., M*(m-1)]`.
    pub fn m_star(&self) -> DMatrix<f64> {
        self.model_star.concat()
    }
}

/// Step-2 targets derived from a Step-1 factor pair.
#[derive(Debug, Clone)]
pub enum Step2Inputs {
    Gamma { gamma_star: DMatrix<f64>, gamma_block: DMatrix<f64> },
    Pi { pi_tilde: DMatrix<f64>, pi_prev: DMatrix<f64> },
}

impl Step2Inputs {
    pub fn from_step1(state: &NmfState, m: usize, version: Step2Version) -> Result<Self> {
        Ok(match version {
            Step2Version::Gamma => {
                let shorter = marginalize_gamma(&state.right, m)?;
                Step2Inputs::Gamma { gamma_star: state.right.clone(), gamma_block: block_diag_gamma(&shorter, m)? }
            }
            Step2Version::Pi => Step2Inputs::Pi {
                pi_tilde: repackage_pi_tilde(&state.left, m)?,
                pi_prev: marginalize_pi(&state.left, m)?,
            },
        })
    }

    pub fn solve(&self, cfg: &Step2Config) -> Result<Step2State> {
        self.solve_observed(cfg, |_, _| {})
    }

    pub fn solve_observed<F>(&self, cfg: &Step2Config, observer: F) -> Result<Step2State>
    where
        F: FnMut(usize, &DMatrix<f64>),
    {
        match self {
            Step2Inputs::Gamma { gamma_star, gamma_block } => {
                step2_gamma_observed(gamma_star, gamma_block, cfg, observer)
            }
            Step2Inputs::Pi { pi_tilde, pi_prev } => step2_pi_observed(pi_tilde, pi_prev, cfg, observer),
        }
    }
}

/// Builds the reduced model from a Step-2 output, rows scaled exactly to one.
pub fn assemble_model(m_star: &DMatrix<f64>, m: usize) -> Result<HmmModel> {
    let mut concat = m_star.clone();
    for mut row in concat.row_iter_mut() {
        let s = row.sum();
        row.unscale_mut(s);
    }
    let states = concat.nrows();
    let a = (0..m).fold(DMatrix::zeros(states, states), |acc, y| acc + concat.columns(y * states, states));
    let pi = stationary_vector(&a)?;
    let blocks = (0..m).map(|y| concat.columns(y * states, states).into_owned()).collect();
    HmmModel::new(blocks, Some(pi))
}

/// Divergence between the `H_nn` matrices of two models, i.e. between their
/// length-`2n` string distributions.
pub fn final_divergence(original: &HmmModel, reduced: &HmmModel, n: usize) -> Result<Divergence> {
    if original.m() != reduced.m() {
        return Err(Error::Domain(format!("alphabet sizes differ: {} vs {}", original.m(), reduced.m())));
    }
    let p = build_factors(original, n)?;
    let q = build_factors(reduced, n)?;
    divergence(&p.h, &q.h)
}

/// Runs the full two-step reduction of `model` to `cfg.target_size` states.
pub fn reduce(model: &HmmModel, cfg: &ReductionConfig) -> Result<ReductionResult> {
    cfg.validate()?;
    let n = cfg.hankel_half_length;
    let target = build_factors(model, n)?;

    let step1 = step1_factorize(&target.h, cfg.target_size, &cfg.step1)?;
    let inputs = Step2Inputs::from_step1(&step1, model.m(), cfg.step2_version)?;
    let step2 = inputs.solve(&cfg.step2)?;

    let model_star = match assemble_model(&step2.m, model.m()) {
        Ok(model) => model,
        Err(Error::Reducible { nullity }) => {
            let partial = PartialReduction {
                m_star: step2.m.clone(),
                div1b: step1.initial_divergence(),
                div1: step1.final_divergence(),
                div2b: step2.initial_divergence(),
                div2: step2.final_divergence(),
                step1_trace: step1.trace,
                step2_trace: step2.trace,
            };
            return Err(Error::ReducibleResult { nullity, partial: Box::new(partial) });
        }
        Err(e) => return Err(e),
    };
    let reduced = build_factors(&model_star, n)?;
    let div_final = divergence(&target.h, &reduced.h)?.value();

    Ok(ReductionResult {
        model_star,
        div1b: step1.initial_divergence(),
        div1: step1.final_divergence(),
        div2b: step2.initial_divergence(),
        div2: step2.final_divergence(),
        div_final,
        step1_iterations: step1.iteration,
        step2_iterations: step2.iteration,
        step1_trace: step1.trace,
        step2_trace: step2.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;
    use crate::lex::LexOrder;
    use crate::nmf::divergence_term;

    #[test]
    fn version_parsing() {
        assert_eq!("gamma".parse::<Step2Version>().unwrap(), Step2Version::Gamma);
        assert_eq!("PI".parse::<Step2Version>().unwrap(), Step2Version::Pi);
        assert!("delta".parse::<Step2Version>().is_err());
        assert_eq!(Step2Version::Pi.to_string(), "pi");
    }

    #[test]
    fn config_validation() {
        let mut cfg = ReductionConfig::new(2);
        assert_eq!(cfg.hankel_half_length, 5);
        assert!(cfg.validate().is_ok());
        cfg.hankel_half_length = 1;
        assert!(cfg.validate().is_err());
        assert!(ReductionConfig::new(0).validate().is_err());
    }

    #[test]
    fn self_divergence_zero() {
        let model = examples::example1();
        for n in 1..=3 {
            assert_eq!(final_divergence(&model, &model, n).unwrap().value(), 0.0);
        }
    }

    #[test]
    fn final_divergence_matches_string_enumeration() {
        let original = examples::example1();
        let reduced = examples::example2();
        let n = 2;
        let words = LexOrder::llo(2, 2 * n).unwrap();
        let brute: f64 = (0..words.size())
            .map(|i| {
                let w = words.decode(i).unwrap();
                divergence_term(original.string_probability(&w).unwrap(), reduced.string_probability(&w).unwrap())
            })
            .sum();
        let d = final_divergence(&original, &reduced, n).unwrap().value();
        assert!(d > 0.0);
        assert!((d - brute).abs() <= 1e-15 + 1e-12 * brute, "{d} vs {brute}");
    }

    #[test]
    fn alphabet_mismatch() {
        let one = HmmModel::new(vec![DMatrix::from_element(1, 1, 1.0)], None).unwrap();
        assert!(matches!(final_divergence(&examples::example1(), &one, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn small_reduction_runs() {
        let mut cfg = ReductionConfig::new(2).with_seed(4);
        cfg.hankel_half_length = 3;
        cfg.step1.max_iterations = 200;
        cfg.step2.max_iterations = 200;
        for version in [Step2Version::Gamma, Step2Version::Pi] {
            cfg.step2_version = version;
            let res = reduce(&examples::example1(), &cfg).unwrap();
            assert!(res.div1 <= res.div1b && res.div2 <= res.div2b);
            assert!(res.div_final >= 0.0 && res.div_final < 1e-3);
            assert_eq!(res.model_star.n_states(), 2);
            assert_eq!(res.step1_trace.len(), 201);
        }
    }
}
