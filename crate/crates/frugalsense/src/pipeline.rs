//! Experiment drivers shared by the command-line tool and the tests:
//! benchmark preparation, baselines, training runs, evaluation and sweeps.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use frugalsense_core::env::{EnvConfig, EnvError, SensingEnv, SensingWorld, TrajectoryRecord};
use frugalsense_core::evaluation::{EvalError, EvalReport, Evaluator};
use frugalsense_core::gp::{optimize_hyperparameters, GpError, InputEncoder, KernelParams, OptimizeOutcome};
use frugalsense_core::nn::MlpParams;
use frugalsense_core::policies::{
    decide, greedy_oracle_schedule, random_schedule, uniform_schedule, ActMode, OracleAllocation, PolicyError,
};
use frugalsense_core::ppo::{greedy_score, Checkpoint, PpoConfig, PpoError, SensingTask, Trainer};
use frugalsense_core::timeseries::{
    generate_synthetic, split, Dataset, SlotIndex, TimeseriesError, SLOTS_PER_DAY, SLOTS_PER_WEEK,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DataConfig, GpConfig, RunConfig, SweepGrid};
use crate::io::{self, IoError, KernelFile, PosteriorRow, ReportRow, SweepRow};
use crate::svg;

/// Environment variable capping the number of sweep worker threads.
pub const THREADS_VAR: &str = "FRUGALSENSE_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Timeseries(#[from] TimeseriesError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error("span error: {0}")]
    Span(String),
    #[error("cannot resume: {0}")]
    Resume(String),
}

type Result<T> = std::result::Result<T, PipelineError>;

/// Measurements from the configured file, or the synthetic profile.
pub fn load_dataset(data: &DataConfig) -> Result<Dataset> {
    match &data.measurements {
        Some(path) => {
            let holidays = match &data.holidays {
                Some(h) => io::load_holidays(h)?,
                None => Default::default(),
            };
            Ok(io::load_measurements(path, holidays)?)
        }
        None => Ok(generate_synthetic(&data.profile, data.weeks * SLOTS_PER_WEEK)),
    }
}

/// The leading `weeks` of `dataset`, used as the GP's context.
pub fn context_weeks(dataset: &Dataset, weeks: u32) -> Result<Dataset> {
    let boundary = weeks * SLOTS_PER_WEEK;
    let end = dataset.span().map_or(0, |s| s.1 .0);
    if boundary > end {
        return Err(PipelineError::Span(format!(
            "{weeks} training weeks need slots up to {boundary}, data ends at {end}"
        )));
    }
    if boundary == end {
        return Ok(dataset.clone());
    }
    Ok(split(dataset, SlotIndex(boundary))?.0)
}

pub fn fit_kernel(context: &Dataset, gp: &GpConfig) -> OptimizeOutcome {
    let encoder = InputEncoder::fit(context);
    let (xs, ys) = encoder.training_set(context);
    optimize_hyperparameters(&xs, &ys, context.mean_level(), &gp.init, gp.mask, gp.budget, gp.seed)
}

/// Parses `START:END` into a half-open slot span.
pub fn parse_span(text: &str) -> std::result::Result<(SlotIndex, SlotIndex), String> {
    let (a, b) = text.split_once(':').ok_or_else(|| format!("expected START:END, got {text:?}"))?;
    let a: u32 = a.trim().parse().map_err(|e| format!("bad span start {a:?}: {e}"))?;
    let b: u32 = b.trim().parse().map_err(|e| format!("bad span end {b:?}: {e}"))?;
    if b <= a {
        return Err(format!("span end {b} must exceed start {a}"));
    }
    Ok((SlotIndex(a), SlotIndex(b)))
}

/// Data, fitted kernel and shared simulation world for one configuration.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub config: RunConfig,
    pub dataset: Dataset,
    pub context: Dataset,
    pub params: KernelParams,
    pub world: Arc<SensingWorld>,
}

impl Benchmark {
    /// Loads or generates data and loads or fits the kernel.
    pub fn prepare(config: &RunConfig) -> Result<Self> {
        let dataset = load_dataset(&config.data)?;
        let params = match &config.gp.params {
            Some(path) => io::load_kernel_params(path)?.params,
            None => {
                let context = context_weeks(&dataset, config.gp.train_weeks)?;
                fit_kernel(&context, &config.gp).params
            }
        };
        Self::from_parts(config.clone(), dataset, params)
    }

    pub fn from_parts(config: RunConfig, dataset: Dataset, params: KernelParams) -> Result<Self> {
        let context = context_weeks(&dataset, config.gp.train_weeks)?;
        let world = Arc::new(SensingWorld::new(dataset.clone(), &context, &params)?);
        Ok(Benchmark { config, dataset, context, params, world })
    }

    /// The held-out evaluation period of the protocol.
    pub fn eval_span(&self) -> (SlotIndex, SlotIndex) {
        let p = &self.config.protocol;
        (SlotIndex(p.eval_start_day * SLOTS_PER_DAY), SlotIndex((p.eval_start_day + p.eval_days) * SLOTS_PER_DAY))
    }

    pub fn evaluator(&self, span: (SlotIndex, SlotIndex)) -> Result<Evaluator> {
        Ok(Evaluator::with_predictor(&self.dataset, self.world.predictor(), span)?)
    }

    pub fn env(&self, config: EnvConfig) -> Result<SensingEnv> {
        Ok(SensingEnv::new(self.world.clone(), config)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Uniform,
    Oracle,
    Random,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Uniform => "uniform",
            Baseline::Oracle => "oracle",
            Baseline::Random => "random",
        }
    }
}

pub fn baseline_schedule(
    evaluator: &Evaluator,
    policy: Baseline,
    budget: usize,
    seed: u64,
    allocation: OracleAllocation,
) -> Result<Vec<SlotIndex>> {
    let span = evaluator.span();
    Ok(match policy {
        Baseline::Uniform => uniform_schedule(span, budget)?,
        Baseline::Random => random_schedule(span, budget, seed)?,
        Baseline::Oracle => greedy_oracle_schedule(evaluator, budget, allocation)?,
    })
}

/// Scores one baseline and writes its schedule file and comparison row
/// into `out`.
pub fn run_baseline(
    bench: &Benchmark,
    policy: Baseline,
    budget: usize,
    span: (SlotIndex, SlotIndex),
    seed: u64,
    out: &Path,
) -> Result<EvalReport> {
    let evaluator = bench.evaluator(span)?;
    let schedule = baseline_schedule(&evaluator, policy, budget, seed, bench.config.protocol.oracle_allocation)?;
    let report = evaluator.evaluate(&schedule)?;
    create_dir(out)?;
    io::write_schedule(&out.join(format!("schedule_{}.txt", policy.name())), &report.schedule)?;
    io::append_report(&out.join("comparison.csv"), &ReportRow::new(policy.name(), &report))?;
    Ok(report)
}

/// A greedy rollout of a network over a span, scored by the evaluator.
#[derive(Debug, Clone)]
pub struct NetworkEval {
    pub report: EvalReport,
    pub trajectory: Vec<TrajectoryRecord>,
    pub posterior: Vec<PosteriorRow>,
    /// `(day, Fisher information)` as paid out by the environment.
    pub day_rewards: Vec<(u32, f64)>,
    pub budget_per_day: u32,
}

/// Runs `params` greedily over the day-aligned `span` with `env` settings
/// (the episode length is taken from the span).
pub fn evaluate_network(
    bench: &Benchmark,
    params: &MlpParams,
    span: (SlotIndex, SlotIndex),
    env: EnvConfig,
) -> Result<NetworkEval> {
    if span.0 .0 % SLOTS_PER_DAY != 0 || span.1 .0 % SLOTS_PER_DAY != 0 || span.1 <= span.0 {
        return Err(PipelineError::Span(format!(
            "evaluation span [{}, {}) must cover whole days",
            span.0 .0, span.1 .0
        )));
    }
    let start_day = span.0 .0 / SLOTS_PER_DAY;
    let days = (span.1 .0 - span.0 .0) / SLOTS_PER_DAY;
    let config = EnvConfig { episode_days: days, ..env };
    let mut env = bench.env(config)?;
    let mut state = env.reset(start_day)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut day_rewards = Vec::new();
    while !env.is_done() {
        let obs = env.state_vector(&state);
        let d = decide(params, ActMode::Greedy, &obs, &mut rng)?;
        let r = env.step(d.action)?;
        day_rewards.extend(r.info.day_fi.iter().copied());
        state = r.state;
    }
    let evaluator = bench.evaluator(span)?;
    let report = evaluator.evaluate(env.samples())?;
    let posterior = posterior_rows(&evaluator, &report.schedule)?;
    Ok(NetworkEval {
        report,
        trajectory: env.trajectory().to_vec(),
        posterior,
        day_rewards,
        budget_per_day: config.budget_per_day,
    })
}

/// One row per slot of the evaluator's span.
pub fn posterior_rows(evaluator: &Evaluator, schedule: &[SlotIndex]) -> Result<Vec<PosteriorRow>> {
    let (mean, var) = evaluator.reconstruct(schedule)?;
    let start = evaluator.span().0 .0;
    let mut rows: Vec<PosteriorRow> = (0..mean.len())
        .map(|i| PosteriorRow {
            slot: start + i as u32,
            truth: evaluator.truth()[i],
            mean: mean[i],
            sd: var[i].sqrt(),
            sampled: 0,
        })
        .collect();
    for s in schedule {
        rows[(s.0 - start) as usize].sampled = 1;
    }
    Ok(rows)
}

/// Writes report, schedule, trajectory, posterior and optional chart.
pub fn write_eval_artifacts(dir: &Path, policy: &str, eval: &NetworkEval, charts: bool) -> Result<()> {
    create_dir(dir)?;
    io::write_reports(&dir.join("report.csv"), &[ReportRow::new(policy, &eval.report)])?;
    io::write_schedule(&dir.join("schedule.txt"), &eval.report.schedule)?;
    io::write_trajectory(&dir.join("trajectory.csv"), &eval.trajectory)?;
    io::write_posterior(&dir.join("posterior.csv"), &eval.posterior)?;
    if charts {
        io::write_atomic(&dir.join("posterior.svg"), svg::posterior_chart(&eval.posterior).as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Continue from the saved trainer state in the run directory.
    pub resume: bool,
    /// Stop (resumably) once this many updates are done.
    pub stop_after: Option<usize>,
    pub charts: bool,
}

#[derive(Debug, Clone)]
pub struct AgentOutcome {
    pub id: usize,
    pub config: PpoConfig,
    pub run_dir: PathBuf,
    pub best: Checkpoint,
    /// Evaluation of the best checkpoint; absent when training stopped early.
    pub eval: Option<NetworkEval>,
}

pub fn checkpoint_name(id: usize, update: usize) -> String {
    format!("agent_{id}_update_{update}.json")
}

pub const TRAINER_STATE: &str = "trainer_state.json";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_path_buf(), source })?;
    Ok(())
}

/// Trains one agent into `run_dir`:
///
/// ```text
/// run_dir/config.json          effective configuration
/// run_dir/kernel_params.json   kernel used by the environment
/// run_dir/learning_curve.csv   episode,reward,update
/// run_dir/checkpoints/         agent_<id>_update_<k>.json, best.json, trainer_state.json
/// run_dir/eval/                best checkpoint on the held-out span
/// ```
pub fn train_agent(
    bench: &Benchmark,
    id: usize,
    ppo: &PpoConfig,
    run_dir: &Path,
    opts: &TrainOptions,
) -> Result<AgentOutcome> {
    let ckpt_dir = run_dir.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let mut effective = bench.config.clone();
    effective.ppo = ppo.clone();
    io::save_json(&run_dir.join("config.json"), &effective)?;
    io::save_kernel_params(&run_dir.join("kernel_params.json"), &KernelFile { params: bench.params, log_likelihood: None, initial_log_likelihood: None })?;

    let env_cfg = bench.config.env;
    let protocol = &bench.config.protocol;
    let state_path = ckpt_dir.join(TRAINER_STATE);
    let mut trainer = if opts.resume {
        if !state_path.exists() {
            return Err(PipelineError::Resume(format!("{} not found", state_path.display())));
        }
        let t: Trainer = io::load_json(&state_path)?;
        if t.config != *ppo {
            return Err(PipelineError::Resume("saved PPO configuration differs from the requested one".into()));
        }
        t
    } else {
        Trainer::new(ppo.clone(), env_cfg.observation_dim(), env_cfg.horizon)?
    };

    let mut task = SensingTask { env: bench.env(env_cfg)?, start_days: protocol.train_days.clone() };
    let mut val_env = bench.env(env_cfg)?;
    let curve_path = run_dir.join("learning_curve.csv");
    while !trainer.is_finished() {
        trainer.step(&mut task)?;
        let stop = opts.stop_after.is_some_and(|k| trainer.update >= k);
        if trainer.at_checkpoint() {
            let score = greedy_score(&mut val_env, &trainer.params, &protocol.validation_days)?;
            let ck = trainer.checkpoint(Some(score));
            io::save_network(&ckpt_dir.join(checkpoint_name(id, ck.update)), &ck.params)?;
        }
        if trainer.at_checkpoint() || stop {
            io::write_learning_curve(&curve_path, &trainer.curve)?;
            io::save_json(&state_path, &trainer)?;
        }
        if stop && !trainer.is_finished() {
            let best = trainer.best.clone().unwrap_or_else(|| current(&trainer));
            return Ok(AgentOutcome { id, config: ppo.clone(), run_dir: run_dir.to_path_buf(), best, eval: None });
        }
    }
    io::write_learning_curve(&curve_path, &trainer.curve)?;
    let best = trainer.best.clone().unwrap_or_else(|| current(&trainer));
    io::save_network(&ckpt_dir.join("best.json"), &best.params)?;
    if opts.charts {
        io::write_atomic(&run_dir.join("learning_curve.svg"), svg::learning_curve_chart(&trainer.curve).as_bytes())?;
    }
    let eval = evaluate_network(bench, &best.params, bench.eval_span(), env_cfg)?;
    write_eval_artifacts(&run_dir.join("eval"), "rl", &eval, opts.charts)?;
    Ok(AgentOutcome { id, config: ppo.clone(), run_dir: run_dir.to_path_buf(), best, eval: Some(eval) })
}

fn current(trainer: &Trainer) -> Checkpoint {
    Checkpoint { update: trainer.update, params: trainer.params.clone(), score: None }
}

/// Worker threads for a sweep of `agents`: the cap from
/// [`THREADS_VAR`] if set, else the machine's parallelism.
pub fn sweep_threads(agents: usize) -> usize {
    let cap = std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(agents).max(1)
}

/// Trains every grid point into `out/agent_<id>/` and writes
/// `out/sweep_results.csv`. Agents are independent, so results do not
/// depend on the thread count.
pub fn run_sweep(
    bench: &Benchmark,
    grid: &SweepGrid,
    base: &PpoConfig,
    out: &Path,
    opts: &TrainOptions,
) -> Result<Vec<AgentOutcome>> {
    create_dir(out)?;
    let configs: Vec<PpoConfig> = grid.agents.iter().map(|p| p.apply(base)).collect();
    for c in &configs {
        c.validate()?;
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<AgentOutcome>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..sweep_threads(configs.len()) {
            scope.spawn(|| loop {
                let id = next.fetch_add(1, Ordering::SeqCst);
                if id >= configs.len() {
                    break;
                }
                let dir = out.join(format!("agent_{id}"));
                let r = train_agent(bench, id, &configs[id], &dir, opts);
                results.lock().expect("no worker panicked")[id] = Some(r);
            });
        }
    });
    let outcomes = results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every agent ran"))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<SweepRow> = outcomes
        .iter()
        .filter_map(|o| {
            let e = o.eval.as_ref()?;
            Some(SweepRow {
                agent_id: o.id,
                seed: o.config.seed,
                gamma: o.config.gamma,
                lambda: o.config.gae_lambda,
                clip: o.config.clip_epsilon,
                lr: o.config.learning_rate,
                final_fi: e.report.fisher_information,
                final_rmse: e.report.rmse,
            })
        })
        .collect();
    io::write_sweep_results(&out.join("sweep_results.csv"), &rows)?;
    Ok(outcomes)
}

/// Agent with the highest held-out Fisher information (lowest id on ties).
pub fn best_agent(outcomes: &[AgentOutcome]) -> Option<&AgentOutcome> {
    outcomes
        .iter()
        .filter(|o| o.eval.is_some())
        .fold(None, |best: Option<&AgentOutcome>, o| match best {
            Some(b) if fi(b) >= fi(o) => Some(b),
            _ => Some(o),
        })
}

fn fi(o: &AgentOutcome) -> f64 {
    o.eval.as_ref().map_or(f64::NEG_INFINITY, |e| e.report.fisher_information)
}
