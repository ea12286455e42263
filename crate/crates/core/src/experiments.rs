//! Seeded batches of reductions and the Step-2 version comparison, with CSV
//! writers for their tables and curves.
//!
//! Run `t` of a batch uses seed `base_seed + t` for both steps. Runs execute
//! in parallel but results are collected in run order, so every report is a
//! pure function of its inputs.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hankel::build_factors;
use crate::hmm::HmmModel;
use crate::nmf::{step1_factorize, Step2Init};
use crate::pipeline::{reduce, ReductionConfig, Step2Inputs, Step2Version};

/// Sum over entries of the across-runs unbiased sample variance.
pub fn variability_index(matrices: &[DMatrix<f64>]) -> Result<f64> {
    let t = matrices.len();
    if t < 2 {
        return Err(Error::Invalid(format!("variability needs at least 2 matrices, got {t}")));
    }
    let shape = matrices[0].shape();
    if let Some(bad) = matrices.iter().find(|m| m.shape() != shape) {
        return Err(Error::Shape(format!("matrices of shape {shape:?} and {:?}", bad.shape())));
    }
    let mean = matrices.iter().fold(DMatrix::zeros(shape.0, shape.1), |acc, m| acc + m) / t as f64;
    let ss: f64 = matrices.iter().map(|m| (m - &mean).norm_squared()).sum();
    Ok(ss / (t - 1) as f64)
}

/// Largest entrywise distance between any two matrices.
pub fn max_pairwise_distance(matrices: &[DMatrix<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in matrices.iter().enumerate() {
        for b in &matrices[i + 1..] {
            worst = worst.max((a - b).amax());
        }
    }
    worst
}

/// Row-major copy of a matrix, for serialization.
pub fn rows_of(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    mat.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub div1b: f64,
    pub div1: f64,
    pub div2b: f64,
    pub div2: f64,
    pub div_final: f64,
    /// `[M*(0), ..., M*(m-1)]`, row-major.
    pub m_star: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchRow {
    pub run: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub summary: Option<RunSummary>,
    /// Category and message of the error that stopped a failed run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchReport {
    pub rows: Vec<BatchRow>,
    /// Variability index of the successful `M*`; absent with fewer than two.
    pub variability: Option<f64>,
    /// Run with the smallest final divergence.
    pub best_run: Option<usize>,
    /// Per-iteration means over successful runs.
    pub mean_step1_trace: Vec<f64>,
    pub mean_step2_trace: Vec<f64>,
}

impl BatchReport {
    pub fn successes(&self) -> impl Iterator<Item = &RunSummary> {
        self.rows.iter().filter_map(|r| r.summary.as_ref())
    }
}

fn mean_traces(traces: &[&Vec<f64>]) -> Vec<f64> {
    let Some(len) = traces.iter().map(|t| t.len()).min() else {
        return Vec::new();
    };
    (0..len).map(|k| traces.iter().map(|t| t[k]).sum::<f64>() / traces.len() as f64).collect()
}

/// Runs `runs` independent reductions with seeds `base_seed..base_seed + runs`.
///
/// Errors of individual runs are recorded in their rows; only configuration
/// errors abort the batch.
pub fn run_batch(model: &HmmModel, cfg: &ReductionConfig, runs: usize, base_seed: u64) -> Result<BatchReport> {
    cfg.validate()?;
    if runs == 0 {
        return Err(Error::Invalid("a batch needs at least one run".into()));
    }
    let results: Vec<_> = (0..runs)
        .into_par_iter()
        .map(|t| {
            let seed = base_seed.wrapping_add(t as u64);
            (t, seed, reduce(model, &cfg.clone().with_seed(seed)))
        })
        .collect();

    let mut rows = Vec::with_capacity(runs);
    let mut finals = Vec::new();
    let mut traces1 = Vec::new();
    let mut traces2 = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (run, seed, outcome) in &results {
        match outcome {
            Ok(res) => {
                let m_star = res.m_star();
                if best.is_none_or(|(_, d)| res.div_final < d) {
                    best = Some((*run, res.div_final));
                }
                traces1.push(&res.step1_trace);
                traces2.push(&res.step2_trace);
                rows.push(BatchRow {
                    run: *run,
                    seed: *seed,
                    summary: Some(RunSummary {
                        div1b: res.div1b,
                        div1: res.div1,
                        div2b: res.div2b,
                        div2: res.div2,
                        div_final: res.div_final,
                        m_star: rows_of(&m_star),
                    }),
                    error: None,
                });
                finals.push(m_star);
            }
            Err(e) => {
                log::warn!("run {run} (seed {seed}) failed: {e}");
                rows.push(BatchRow {
                    run: *run,
                    seed: *seed,
                    summary: None,
                    error: Some(format!("{}: {e}", e.category())),
                });
            }
        }
    }
    Ok(BatchReport {
        rows,
        variability: if finals.len() >= 2 { Some(variability_index(&finals)?) } else { None },
        best_run: best.map(|(r, _)| r),
        mean_step1_trace: mean_traces(&traces1),
        mean_step2_trace: mean_traces(&traces2),
    })
}

/// Outcome of one Step-2 version over all `M0` seeds.
#[derive(Debug, Clone)]
pub struct VersionRuns {
    pub version: Step2Version,
    /// Final `M*` of every run, in seed order.
    pub finals: Vec<DMatrix<f64>>,
    /// Variability index after each checkpoint iteration.
    pub variability: Vec<f64>,
    pub mean_trace: Vec<f64>,
    pub final_divergences: Vec<f64>,
}

impl VersionRuns {
    pub fn mean_m(&self) -> DMatrix<f64> {
        let (r, c) = self.finals[0].shape();
        self.finals.iter().fold(DMatrix::zeros(r, c), |acc, m| acc + m) / self.finals.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct VersionComparison {
    pub checkpoints: Vec<usize>,
    pub step1_divergence: f64,
    pub gamma: VersionRuns,
    pub pi: VersionRuns,
    /// `max |mean M*_Gamma - mean M*_Pi|`.
    pub max_mean_difference: f64,
}

/// Iterations `1..=budget` sampled roughly log-uniformly, always ending at `budget`.
pub fn log_checkpoints(budget: usize, per_decade: usize) -> Vec<usize> {
    let mut points = vec![];
    let per_decade = per_decade.max(1) as f64;
    let mut k = 0.0;
    loop {
        let it = 10f64.powf(k / per_decade).round() as usize;
        if it >= budget {
            break;
        }
        if points.last() != Some(&it) {
            points.push(it);
        }
        k += 1.0;
    }
    points.push(budget);
    points
}

/// Fixes one Step-1 output (seed `base_seed`) and runs both Step-2 versions
/// from the same `runs` random starting matrices (seeds `base_seed + t`).
pub fn compare_step2_versions(
    model: &HmmModel,
    cfg: &ReductionConfig,
    runs: usize,
    base_seed: u64,
    checkpoints: &[usize],
) -> Result<VersionComparison> {
    cfg.validate()?;
    if runs < 2 {
        return Err(Error::Invalid("comparing versions needs at least 2 runs".into()));
    }
    let mut checkpoints = checkpoints.to_vec();
    checkpoints.retain(|&c| c >= 1 && c <= cfg.step2.max_iterations);
    checkpoints.sort_unstable();
    checkpoints.dedup();

    let target = build_factors(model, cfg.hankel_half_length)?;
    let mut step1_cfg = cfg.step1.clone();
    step1_cfg.seed = base_seed;
    let step1 = step1_factorize(&target.h, cfg.target_size, &step1_cfg)?;

    let run_version = |version: Step2Version| -> Result<VersionRuns> {
        let inputs = Step2Inputs::from_step1(&step1, model.m(), version)?;
        let outcomes = (0..runs)
            .into_par_iter()
            .map(|t| {
                let mut step2_cfg = cfg.step2.clone();
                step2_cfg.seed = base_seed.wrapping_add(t as u64);
                step2_cfg.init = Step2Init::Random;
                let mut snapshots = Vec::with_capacity(checkpoints.len());
                let state = inputs.solve_observed(&step2_cfg, |it, m| {
                    if checkpoints.binary_search(&it).is_ok() {
                        snapshots.push(m.clone());
                    }
                })?;
                Ok((state, snapshots))
            })
            .collect::<Result<Vec<_>>>()?;

        let variability = (0..checkpoints.len())
            .map(|k| {
                let at: Vec<DMatrix<f64>> = outcomes.iter().filter_map(|(_, s)| s.get(k).cloned()).collect();
                variability_index(&at)
            })
            .collect::<Result<Vec<_>>>()?;
        let traces: Vec<&Vec<f64>> = outcomes.iter().map(|(s, _)| &s.trace).collect();
        Ok(VersionRuns {
            version,
            mean_trace: mean_traces(&traces),
            final_divergences: outcomes.iter().map(|(s, _)| s.final_divergence()).collect(),
            finals: outcomes.into_iter().map(|(s, _)| s.m).collect(),
            variability,
        })
    };

    let gamma = run_version(Step2Version::Gamma)?;
    let pi = run_version(Step2Version::Pi)?;
    let max_mean_difference = (gamma.mean_m() - pi.mean_m()).amax();
    Ok(VersionComparison { checkpoints, step1_divergence: step1.final_divergence(), gamma, pi, max_mean_difference })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// `RUN,DIV1b,DIV1,DIV2b,DIV2,DIV`, runs numbered from 1, failed runs blank.
pub fn table_csv(report: &BatchReport) -> String {
    let mut out = String::from("RUN,DIV1b,DIV1,DIV2b,DIV2,DIV\n");
    for row in &report.rows {
        let s = row.summary.as_ref();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.run + 1,
            fmt_opt(s.map(|s| s.div1b)),
            fmt_opt(s.map(|s| s.div1)),
            fmt_opt(s.map(|s| s.div2b)),
            fmt_opt(s.map(|s| s.div2)),
            fmt_opt(s.map(|s| s.div_final)),
        )
        .unwrap();
    }
    out
}

/// `run,div_final,best` with `best` set to 1 on the best run.
pub fn final_divergence_csv(report: &BatchReport) -> String {
    let mut out = String::from("run,div_final,best\n");
    for row in &report.rows {
        let best = u8::from(report.best_run == Some(row.run));
        writeln!(out, "{},{},{best}", row.run + 1, fmt_opt(row.summary.as_ref().map(|s| s.div_final))).unwrap();
    }
    out
}

/// `iteration,R_gamma,R_pi`.
pub fn variability_csv(cmp: &VersionComparison) -> String {
    let mut out = String::from("iteration,R_gamma,R_pi\n");
    for (k, it) in cmp.checkpoints.iter().enumerate() {
        writeln!(out, "{it},{:e},{:e}", cmp.gamma.variability[k], cmp.pi.variability[k]).unwrap();
    }
    out
}

/// `iteration,div_gamma,div_pi`, mean Step-2 divergence from iteration 0.
pub fn divergence_decay_csv(cmp: &VersionComparison) -> String {
    let mut out = String::from("iteration,div_gamma,div_pi\n");
    for (k, (g, p)) in cmp.gamma.mean_trace.iter().zip(&cmp.pi.mean_trace).enumerate() {
        writeln!(out, "{k},{g:e},{p:e}").unwrap();
    }
    out
}

/// `iteration,value`.
pub fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("iteration,value\n");
    for (k, v) in trace.iter().enumerate() {
        writeln!(out, "{k},{v:e}").unwrap();
    }
    out
}
