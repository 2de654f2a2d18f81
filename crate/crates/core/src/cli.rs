//! Command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::metrics::{evaluate, generate_synthetic};
use crate::numcheck::{self, GradCheckReport, DEFAULT_TOL_ABS};
use crate::scenario::corpus::{load_corpus, save_corpus};

#[derive(Debug, Parser)]
#[command(name = "voxplan", version, about = "Voxel-lifting planner evaluation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan every scenario of a corpus and write an ADE / bADE report.
    Evalrun(EvalrunArgs),
    /// Compare analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic JSONL corpus.
    GenCorpus(GenCorpusArgs),
    /// Write the toy planner's freshly initialized weights as a checkpoint.
    InitCheckpoint(InitCheckpointArgs),
}

#[derive(Debug, Args)]
pub struct EvalrunArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// toy, oracle, oracle_offset or oracle_noisy.
    #[arg(long, default_value = "toy")]
    pub planner: String,
    /// TOML or JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated horizons in seconds.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Divide bADE by all seven behaviors even when some are absent.
    #[arg(long)]
    pub strict_divisor_7: bool,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Operation name or `all`.
    #[arg(long, default_value = "all")]
    pub op: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub tol_rel: f64,
    #[arg(long, default_value_t = DEFAULT_TOL_ABS)]
    pub tol_abs: f64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run configuration whose `synth` table drives generation.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InitCheckpointArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct GradcheckSummary {
    pub op: String,
    pub seeds: Vec<u64>,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub passed: bool,
    pub reports: Vec<GradCheckReport>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn evalrun(args: &EvalrunArgs) -> Result<ExitCode> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(h) = &args.horizons {
        cfg.horizons_s = h.clone();
    }
    if args.strict_divisor_7 {
        cfg.strict_divisor_7 = true;
    }
    if let Some(k) = args.k {
        cfg.toy.sampling.k = k;
    }
    if let Some(p) = args.top_p {
        cfg.toy.sampling.top_p = p;
    }
    if let Some(c) = &args.checkpoint {
        cfg.checkpoint = Some(c.clone());
    }
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }

    let corpus = load_corpus(&args.corpus).with_context(|| format!("loading {}", args.corpus.display()))?;
    let planner = cfg.build_planner(&args.planner)?;
    let mut report = evaluate(&corpus, planner.as_ref(), &cfg.eval_options())?;
    report.config = Some(serde_json::to_value(&cfg)?);

    write_text(&args.out, &report.to_json()?)?;
    if let Some(path) = &args.csv {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(BufWriter::new(f))?;
    }

    for row in &report.horizons {
        eprintln!("ADE@{}s {}  bADE@{}s {}", row.horizon_s, fmt_opt(row.ade), row.horizon_s, fmt_opt(row.bade));
    }
    eprintln!(
        "{} scored, {} failed, {} candidates dropped",
        report.counts.scored, report.counts.failed, report.counts.dropped_candidates
    );
    let broken: Vec<&str> = report.invariants.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if broken.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("invariant self-check failed: {}", broken.join(", "));
        Ok(ExitCode::FAILURE)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<ExitCode> {
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let seeds: Vec<u64> = (args.seed..args.seed + args.seeds).collect();
    let mut reports = Vec::new();
    for &seed in &seeds {
        if args.op == "all" {
            reports.extend(numcheck::check_all(seed, args.tol_rel, args.tol_abs)?);
        } else {
            reports.push(numcheck::check_grad(&args.op, seed, args.tol_rel, args.tol_abs)?);
        }
    }
    let summary = GradcheckSummary {
        op: args.op.clone(),
        seeds,
        tol_rel: args.tol_rel,
        tol_abs: args.tol_abs,
        passed: reports.iter().all(|r| r.passed),
        reports,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    match &args.out {
        Some(p) => write_text(p, &text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    for r in summary.reports.iter().filter(|r| !r.passed) {
        eprintln!("{} seed {}: max rel error {:.3e}", r.op, r.seed, r.max_rel_error);
    }
    Ok(if summary.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

pub fn gen_corpus(args: &GenCorpusArgs) -> Result<ExitCode> {
    let cfg = load_config(args.config.as_deref())?;
    let scenarios = generate_synthetic(&cfg.synth, args.seed, args.n)?;
    save_corpus(&args.out, &scenarios)?;
    eprintln!("wrote {} scenarios to {}", scenarios.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn init_checkpoint(args: &InitCheckpointArgs) -> Result<ExitCode> {
    let cfg = load_config(args.config.as_deref())?;
    let ckpt = cfg.toy_planner()?.export();
    ckpt.save(&args.out)?;
    eprintln!("wrote {} tensors to {}", ckpt.names().count(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Evalrun(a) => evalrun(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::GenCorpus(a) => gen_corpus(a),
        Command::InitCheckpoint(a) => init_checkpoint(a),
    }
}

/// Entry point of the binary; errors exit with status 2.
pub fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
