//! Command-line surface. Flags override the config file, which overrides
//! built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use frugalsense_core::timeseries::{generate_synthetic, SlotIndex, SLOTS_PER_DAY, SLOTS_PER_WEEK};

use crate::config::{RunConfig, SweepGrid};
use crate::io::{self, KernelFile, ReportRow};
use crate::pipeline::{self, Baseline, Benchmark, TrainOptions};

#[derive(Debug, Parser)]
#[command(name = "frugalsense", version, about = "Budget-constrained adaptive noise sensing")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed overriding the command's configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory of the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic measurement CSV and holiday file.
    GenData(GenDataArgs),
    /// Fit kernel hyperparameters on the leading weeks of a dataset.
    FitGp(FitGpArgs),
    /// Score a fixed-schedule baseline and append it to comparison.csv.
    Baseline(BaselineArgs),
    /// Train one PPO agent into a run directory.
    Train(TrainArgs),
    /// Train a grid of agents and tabulate their held-out scores.
    Sweep(SweepArgs),
    /// Roll out a checkpoint greedily and dump report, trajectory and posterior.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub weeks: Option<u32>,
    #[arg(long)]
    pub base_db: Option<f64>,
    #[arg(long)]
    pub office_db: Option<f64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub correlation_slots: Option<f64>,
    /// Holiday day indices, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub holidays: Option<Vec<u32>>,
}

/// Where the data and kernel come from, when not taken from the config.
#[derive(Debug, Args, Default)]
pub struct SourceArgs {
    /// Measurement CSV (`slot,laeq`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Holiday file, one day index per line.
    #[arg(long)]
    pub holidays: Option<PathBuf>,
    /// Kernel parameter file; without one the kernel is fitted.
    #[arg(long)]
    pub gp_params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitGpArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub holidays: Option<PathBuf>,
    #[arg(long)]
    pub train_weeks: Option<u32>,
    /// Likelihood evaluations allowed to the optimizer.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Uniform,
    Oracle,
    Random,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub policy: PolicyArg,
    /// Samples over the span.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Half-open slot span `START:END`; defaults to the evaluation period.
    #[arg(long, value_parser = pipeline::parse_span)]
    pub span: Option<(SlotIndex, SlotIndex)>,
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Continue from the trainer state saved in the run directory.
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many updates, leaving a resumable state.
    #[arg(long)]
    pub stop_after: Option<usize>,
    /// Also render SVG charts.
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Grid file (`{"agents": [{"seed": 0, "lr": 0.001}, ...]}`); defaults
    /// to the config's sweep section.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Network checkpoint file.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Day-aligned slot span `START:END`; defaults to the evaluation period.
    #[arg(long, value_parser = pipeline::parse_span)]
    pub span: Option<(SlotIndex, SlotIndex)>,
    /// Samples over the span, split evenly per day (rounded down).
    #[arg(long)]
    pub budget: Option<u32>,
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub source: SourceArgs,
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    match &cli.config {
        Some(path) => Ok(RunConfig::load(path)?),
        None => Ok(RunConfig::default()),
    }
}

fn apply_source(cfg: &mut RunConfig, source: &SourceArgs) -> anyhow::Result<()> {
    for p in [&source.data, &source.holidays, &source.gp_params].into_iter().flatten() {
        if !p.exists() {
            bail!("file not found: {}", p.display());
        }
    }
    if let Some(d) = &source.data {
        cfg.data.measurements = Some(d.clone());
    }
    if let Some(h) = &source.holidays {
        cfg.data.holidays = Some(h.clone());
    }
    if let Some(g) = &source.gp_params {
        cfg.gp.params = Some(g.clone());
    }
    Ok(())
}

fn prepare(cfg: &RunConfig) -> anyhow::Result<Benchmark> {
    if cfg.gp.params.is_none() {
        eprintln!("no kernel parameter file given; fitting the kernel (budget {})", cfg.gp.budget);
    }
    Ok(Benchmark::prepare(cfg)?)
}

/// Parses arguments, runs the command and maps the outcome to an exit
/// code: 0 on success, 1 on runtime errors, 2 on usage errors.
pub fn main_entry() -> std::process::ExitCode {
    let cli = Cli::parse();
    if cli.out.is_none() {
        Cli::command()
            .error(clap::error::ErrorKind::MissingRequiredArgument, "the argument '--out <OUT>' is required")
            .exit();
    }
    match run(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let out = cli.out.as_deref().context("--out is required")?;
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::GenData(a) => gen_data(&mut cfg, cli.seed, a, out),
        Command::FitGp(a) => fit_gp(&mut cfg, cli.seed, a, out),
        Command::Baseline(a) => baseline(&mut cfg, cli.seed, a, out),
        Command::Train(a) => train(&mut cfg, cli.seed, a, out),
        Command::Sweep(a) => sweep(&mut cfg, cli.seed, a, out),
        Command::Eval(a) => eval(&mut cfg, a, out),
    }
}

fn gen_data(cfg: &mut RunConfig, seed: Option<u64>, a: &GenDataArgs, out: &Path) -> anyhow::Result<()> {
    let p = &mut cfg.data.profile;
    if let Some(s) = seed {
        p.seed = s;
    }
    if let Some(v) = a.base_db {
        p.base_db = v;
    }
    if let Some(v) = a.office_db {
        p.office_db = v;
    }
    if let Some(v) = a.noise_sd {
        p.noise_sd = v;
    }
    if let Some(v) = a.correlation_slots {
        p.correlation_slots = v;
    }
    if let Some(h) = &a.holidays {
        p.holidays = h.clone();
    }
    let weeks = a.weeks.unwrap_or(cfg.data.weeks);
    if weeks == 0 {
        bail!("--weeks must be at least 1");
    }
    cfg.validate().map_err(anyhow::Error::msg)?;
    let data = generate_synthetic(&cfg.data.profile, weeks * SLOTS_PER_WEEK);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    io::write_measurements(&out.join("measurements.csv"), &data)?;
    io::write_holidays(&out.join("holidays.txt"), data.holidays())?;
    println!("wrote {} measurements to {}", data.len(), out.join("measurements.csv").display());
    Ok(())
}

fn fit_gp(cfg: &mut RunConfig, seed: Option<u64>, a: &FitGpArgs, out: &Path) -> anyhow::Result<()> {
    apply_source(cfg, &SourceArgs { data: a.data.clone(), holidays: a.holidays.clone(), gp_params: None })?;
    if let Some(w) = a.train_weeks {
        cfg.gp.train_weeks = w;
    }
    if let Some(b) = a.budget {
        cfg.gp.budget = b;
    }
    if let Some(s) = seed {
        cfg.gp.seed = s;
    }
    let dataset = pipeline::load_dataset(&cfg.data)?;
    let context = pipeline::context_weeks(&dataset, cfg.gp.train_weeks)?;
    let outcome = pipeline::fit_kernel(&context, &cfg.gp);
    let path = if out.is_dir() { out.join("kernel_params.json") } else { out.to_path_buf() };
    io::save_kernel_params(
        &path,
        &KernelFile {
            params: outcome.params,
            log_likelihood: Some(outcome.log_likelihood),
            initial_log_likelihood: Some(outcome.initial_log_likelihood),
        },
    )?;
    println!("initial_log_likelihood {}", outcome.initial_log_likelihood);
    println!("log_likelihood {}", outcome.log_likelihood);
    println!("evaluations {}", outcome.evaluations);
    println!("wrote {}", path.display());
    Ok(())
}

fn print_row(row: &ReportRow) {
    println!(
        "policy={} fi={} rmse={} samples={} span={}:{}",
        row.policy, row.fi, row.rmse, row.samples, row.span_start, row.span_end
    );
}

fn baseline(cfg: &mut RunConfig, seed: Option<u64>, a: &BaselineArgs, out: &Path) -> anyhow::Result<()> {
    apply_source(cfg, &a.source)?;
    let bench = prepare(cfg)?;
    let policy = match a.policy {
        PolicyArg::Uniform => Baseline::Uniform,
        PolicyArg::Oracle => Baseline::Oracle,
        PolicyArg::Random => Baseline::Random,
    };
    let span = a.span.unwrap_or_else(|| bench.eval_span());
    let budget = a.budget.unwrap_or(cfg.protocol.baseline_budget);
    let report = pipeline::run_baseline(&bench, policy, budget, span, seed.unwrap_or(0), out)?;
    print_row(&ReportRow::new(policy.name(), &report));
    Ok(())
}

fn train(cfg: &mut RunConfig, seed: Option<u64>, a: &TrainArgs, out: &Path) -> anyhow::Result<()> {
    apply_source(cfg, &a.source)?;
    if let Some(s) = seed {
        cfg.ppo.seed = s;
    }
    let bench = prepare(cfg)?;
    let opts = TrainOptions { resume: a.resume, stop_after: a.stop_after, charts: a.svg };
    let outcome = pipeline::train_agent(&bench, 0, &cfg.ppo, out, &opts)?;
    match &outcome.eval {
        Some(e) => {
            println!("best checkpoint: update {} (validation {:?})", outcome.best.update, outcome.best.score);
            print_row(&ReportRow::new("rl", &e.report));
        }
        None => println!("stopped after {} updates; continue with --resume", a.stop_after.unwrap_or(0)),
    }
    Ok(())
}

fn sweep(cfg: &mut RunConfig, seed: Option<u64>, a: &SweepArgs, out: &Path) -> anyhow::Result<()> {
    apply_source(cfg, &a.source)?;
    if let Some(s) = seed {
        cfg.ppo.seed = s;
    }
    let grid: SweepGrid = match &a.grid {
        Some(p) => io::load_json(p)?,
        None => cfg.sweep.clone(),
    };
    if grid.agents.is_empty() {
        bail!("sweep grid has no agents");
    }
    let bench = prepare(cfg)?;
    let opts = TrainOptions { charts: a.svg, ..Default::default() };
    let threads = pipeline::sweep_threads(grid.agents.len());
    eprintln!("training {} agents on {threads} threads", grid.agents.len());
    let outcomes = pipeline::run_sweep(&bench, &grid, &cfg.ppo, out, &opts)?;
    for o in &outcomes {
        if let Some(e) = &o.eval {
            println!("agent {}: fi={} rmse={}", o.id, e.report.fisher_information, e.report.rmse);
        }
    }
    if let Some(best) = pipeline::best_agent(&outcomes) {
        println!("best agent {} ({})", best.id, best.run_dir.display());
    }
    Ok(())
}

fn eval(cfg: &mut RunConfig, a: &EvalArgs, out: &Path) -> anyhow::Result<()> {
    apply_source(cfg, &a.source)?;
    let params = io::load_network(&a.checkpoint)?;
    let bench = prepare(cfg)?;
    let span = a.span.unwrap_or_else(|| bench.eval_span());
    let mut env = cfg.env;
    if let Some(b) = a.budget {
        let days = (span.1 .0.saturating_sub(span.0 .0) / SLOTS_PER_DAY).max(1);
        env.budget_per_day = b / days;
    }
    let e = pipeline::evaluate_network(&bench, &params, span, env)?;
    pipeline::write_eval_artifacts(out, "rl", &e, a.svg)?;
    io::append_report(&out.join("comparison.csv"), &ReportRow::new("rl", &e.report))?;
    print_row(&ReportRow::new("rl", &e.report));
    Ok(())
}
