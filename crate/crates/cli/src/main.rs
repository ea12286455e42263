use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hmm_nmf::experiments::{
    compare_step2_versions, divergence_decay_csv, final_divergence_csv, log_checkpoints, rows_of, run_batch,
    table_csv, trace_csv, variability_csv, BatchReport, VersionComparison,
};
use hmm_nmf::hankel::build_factors;
use hmm_nmf::io::{hankel_header, matrix_csv, read_model, write_model};
use hmm_nmf::lex::LexKind;
use hmm_nmf::pipeline::{final_divergence, reduce, ReductionConfig, ReductionResult, Step2Version};
use hmm_nmf::{examples, Error, HmmModel};
use serde_json::{json, Value};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  invalid command line
  3  io error (missing or unwritable file)
  4  parse error (malformed model file)
  5  validation error (non-stochastic input, bad dimensions, bad flag combination)
  6  size limit exceeded (Hankel matrix too large)
  7  numerical failure (reducible result, solver invariant broken)";

/// Approximate realization and order reduction of hidden Markov models by
/// two-step I-divergence NMF of pseudo-Hankel matrices.
#[derive(Parser)]
#[command(name = "hmmreduce", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a model to N states (one run).
    Reduce {
        /// Model file (TOML)
        model: PathBuf,
        #[command(flatten)]
        reduction: ReductionArgs,
        /// Seed for both steps
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for reduced.hmm, report.json and the traces
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a seeded batch of reductions.
    Batch {
        model: PathBuf,
        #[command(flatten)]
        reduction: ReductionArgs,
        #[command(flatten)]
        batch: BatchArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fix one Step-1 output and run both Step-2 versions from the same starts.
    CompareStep2 {
        model: PathBuf,
        #[command(flatten)]
        reduction: ReductionArgs,
        #[command(flatten)]
        batch: BatchArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the pseudo-Hankel matrix H_nn as CSV (stdout without --out).
    Hankel {
        model: PathBuf,
        /// Prefix / suffix length
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        n: u32,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write Pi_n and Gamma_n (pi.csv, gamma.csv) into this directory
        #[arg(long)]
        factors: Option<PathBuf>,
    },
    /// Divergence between the length-2n string laws of two models.
    Eval {
        original: PathBuf,
        reduced: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        n: u32,
    },
    /// Rerun the bundled order-reduction experiments with their budgets.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
        example: u32,
        #[arg(long, value_enum)]
        reduction: Reduction,
        /// Prefix / suffix length [default: 2N + 1]
        #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
        n: Option<u32>,
        #[command(flatten)]
        batch: BatchArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ReductionArgs {
    /// Target number of states N
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    size: u32,
    /// Prefix / suffix length [default: 2N + 1]
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    n: Option<u32>,
    /// Step-2 version
    #[arg(long, value_enum, default_value_t = Version::Gamma)]
    step2: Version,
    /// Step-1 iterations
    #[arg(long, default_value_t = 3000, value_parser = clap::value_parser!(u32).range(1..))]
    iters1: u32,
    /// Step-2 iterations
    #[arg(long, default_value_t = 3000, value_parser = clap::value_parser!(u32).range(1..))]
    iters2: u32,
}

#[derive(Args)]
struct BatchArgs {
    /// Number of runs
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u32).range(1..))]
    runs: u32,
    /// Run t uses seed base-seed + t
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Version {
    Gamma,
    Pi,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reduction {
    #[value(name = "4to2")]
    FourToTwo,
    #[value(name = "4to3")]
    FourToThree,
}

impl ReductionArgs {
    fn config(&self) -> ReductionConfig {
        let mut cfg = ReductionConfig::new(self.size as usize);
        if let Some(n) = self.n {
            cfg.hankel_half_length = n as usize;
        }
        cfg.step2_version = match self.step2 {
            Version::Gamma => Step2Version::Gamma,
            Version::Pi => Step2Version::Pi,
        };
        cfg.step1.max_iterations = self.iters1 as usize;
        cfg.step2.max_iterations = self.iters2 as usize;
        cfg
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read(path: &Path) -> Result<HmmModel, Error> {
    read_model(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))
}

fn to_json(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report is valid JSON");
    text.push('\n');
    text
}

fn config_json(cfg: &ReductionConfig) -> Value {
    json!({
        "target_size": cfg.target_size,
        "hankel_half_length": cfg.hankel_half_length,
        "step2_version": cfg.step2_version.to_string(),
        "step1_iterations": cfg.step1.max_iterations,
        "step2_iterations": cfg.step2.max_iterations,
    })
}

fn reduction_json(res: &ReductionResult, cfg: &ReductionConfig, seed: u64) -> Value {
    let model = &res.model_star;
    json!({
        "seed": seed,
        "config": config_json(cfg),
        "div1b": res.div1b,
        "div1": res.div1,
        "div2b": res.div2b,
        "div2": res.div2,
        "div_final": res.div_final,
        "step1_iterations": res.step1_iterations,
        "step2_iterations": res.step2_iterations,
        "M": model.blocks().iter().map(rows_of).collect::<Vec<_>>(),
        "A": rows_of(&model.transition()),
        "pi": model.pi().iter().copied().collect::<Vec<_>>(),
    })
}

fn batch_json(report: &BatchReport, cfg: &ReductionConfig, base_seed: u64) -> Value {
    json!({
        "config": config_json(cfg),
        "base_seed": base_seed,
        "runs": report.rows,
        "variability": report.variability,
        "best_run": report.best_run,
    })
}

fn comparison_json(cmp: &VersionComparison, cfg: &ReductionConfig, base_seed: u64) -> Value {
    let version = |v: &hmm_nmf::experiments::VersionRuns| {
        json!({
            "variability": v.variability.last(),
            "mean_m": rows_of(&v.mean_m()),
            "final_divergences": v.final_divergences,
        })
    };
    json!({
        "config": config_json(cfg),
        "base_seed": base_seed,
        "step1_divergence": cmp.step1_divergence,
        "gamma": version(&cmp.gamma),
        "pi": version(&cmp.pi),
        "max_mean_difference": cmp.max_mean_difference,
    })
}

fn write_batch(dir: &Path, stem: &str, report: &BatchReport, cfg: &ReductionConfig, base_seed: u64) -> Result<(), Error> {
    write(&dir.join(format!("{stem}.csv")), &table_csv(report))?;
    write(&dir.join("fig_final_divergence.csv"), &final_divergence_csv(report))?;
    write(&dir.join("mean_trace_step1.csv"), &trace_csv(&report.mean_step1_trace))?;
    write(&dir.join("mean_trace_step2.csv"), &trace_csv(&report.mean_step2_trace))?;
    write(&dir.join("batch_report.json"), &to_json(&batch_json(report, cfg, base_seed)))
}

fn write_comparison(dir: &Path, cmp: &VersionComparison, cfg: &ReductionConfig, base_seed: u64) -> Result<(), Error> {
    write(&dir.join("fig_variability.csv"), &variability_csv(cmp))?;
    write(&dir.join("fig_divergence_decay.csv"), &divergence_decay_csv(cmp))?;
    write(&dir.join("compare_report.json"), &to_json(&comparison_json(cmp, cfg, base_seed)))
}

fn print_batch_summary(report: &BatchReport) {
    let ok: Vec<f64> = report.successes().map(|s| s.div_final).collect();
    let failed = report.rows.len() - ok.len();
    if let (Some(lo), Some(hi)) =
        (ok.iter().copied().reduce(f64::min), ok.iter().copied().reduce(f64::max))
    {
        println!("runs: {} ok, {failed} failed; div_final {lo:e} .. {hi:e}", ok.len());
    } else {
        println!("runs: 0 ok, {failed} failed");
    }
    if let Some(r) = report.variability {
        println!("variability R = {r:e}");
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Reduce { model, reduction, seed, out } => {
            let cfg = reduction.config().with_seed(seed);
            cfg.validate()?;
            let model = read(&model)?;
            let res = reduce(&model, &cfg)?;
            create_dir(&out)?;
            write_model(&out.join("reduced.hmm"), &res.model_star)?;
            write(&out.join("report.json"), &to_json(&reduction_json(&res, &cfg, seed)))?;
            write(&out.join("trace_step1.csv"), &trace_csv(&res.step1_trace))?;
            write(&out.join("trace_step2.csv"), &trace_csv(&res.step2_trace))?;
            println!(
                "div1b {:e}  div1 {:e}  div2b {:e}  div2 {:e}  div {:e}",
                res.div1b, res.div1, res.div2b, res.div2, res.div_final
            );
        }
        Command::Batch { model, reduction, batch, out } => {
            let cfg = reduction.config();
            cfg.validate()?;
            let model = read(&model)?;
            let report = run_batch(&model, &cfg, batch.runs as usize, batch.base_seed)?;
            create_dir(&out)?;
            write_batch(&out, "table", &report, &cfg, batch.base_seed)?;
            print_batch_summary(&report);
        }
        Command::CompareStep2 { model, reduction, batch, out } => {
            let cfg = reduction.config();
            cfg.validate()?;
            if batch.runs < 2 {
                return Err(Error::Invalid("compare-step2 needs --runs of at least 2".into()));
            }
            let model = read(&model)?;
            let checkpoints = log_checkpoints(cfg.step2.max_iterations, 10);
            let cmp = compare_step2_versions(&model, &cfg, batch.runs as usize, batch.base_seed, &checkpoints)?;
            create_dir(&out)?;
            write_comparison(&out, &cmp, &cfg, batch.base_seed)?;
            println!(
                "R_gamma {:e}  R_pi {:e}  max|mean M_gamma - mean M_pi| {:e}",
                cmp.gamma.variability.last().unwrap(),
                cmp.pi.variability.last().unwrap(),
                cmp.max_mean_difference
            );
        }
        Command::Hankel { model, n, out, factors } => {
            let model = read(&model)?;
            let n = n as usize;
            let sys = build_factors(&model, n)?;
            let m = model.m();
            let text = matrix_csv(&sys.h, &hankel_header("H", m, n, Some(LexKind::Flo), Some(LexKind::Llo)));
            match out {
                Some(path) => write(&path, &text)?,
                None => print!("{text}"),
            }
            if let Some(dir) = factors {
                create_dir(&dir)?;
                write(&dir.join("pi.csv"), &matrix_csv(&sys.pi_n, &hankel_header("Pi", m, n, Some(LexKind::Flo), None)))?;
                write(
                    &dir.join("gamma.csv"),
                    &matrix_csv(&sys.gamma_n, &hankel_header("Gamma", m, n, None, Some(LexKind::Llo))),
                )?;
            }
        }
        Command::Eval { original, reduced, n } => {
            let d = final_divergence(&read(&original)?, &read(&reduced)?, n as usize)?;
            println!("{:?}", d.value());
        }
        Command::Reproduce { example, reduction, n, batch, out } => {
            let (size, iters2, tag) = match reduction {
                Reduction::FourToTwo => (2, 3000, "4to2"),
                Reduction::FourToThree => (3, 20000, "4to3"),
            };
            let mut cfg = ReductionConfig::new(size);
            if let Some(n) = n {
                cfg.hankel_half_length = n as usize;
            }
            cfg.step1.max_iterations = 3000;
            cfg.step2.max_iterations = iters2;
            cfg.validate()?;
            let model = examples::by_number(example).expect("example number validated by clap");
            let report = run_batch(&model, &cfg, batch.runs as usize, batch.base_seed)?;
            create_dir(&out)?;
            write_batch(&out, &format!("table_example{example}_{tag}"), &report, &cfg, batch.base_seed)?;
            print_batch_summary(&report);
            if matches!(reduction, Reduction::FourToTwo) && batch.runs >= 2 {
                let checkpoints = log_checkpoints(cfg.step2.max_iterations, 10);
                let cmp = compare_step2_versions(&model, &cfg, batch.runs as usize, batch.base_seed, &checkpoints)?;
                write_comparison(&out, &cmp, &cfg, batch.base_seed)?;
                println!("max|mean M_gamma - mean M_pi| = {:e}", cmp.max_mean_difference);
            }
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err.category() {
        "io" => 3,
        "parse" => 4,
        "validation" => 5,
        "size-limit" => 6,
        _ => 7,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let msg = err.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", err.category());
            ExitCode::from(exit_code(&err))
        }
    }
}
