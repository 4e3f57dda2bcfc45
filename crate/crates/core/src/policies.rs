//! Sampling policies: fixed schedules (uniform, random, greedy oracle) and
//! closed-loop policies that act in the sensing environment.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvError, SensingEnv, State};
use crate::evaluation::Evaluator;
use crate::nn::{argmax, log_softmax, sample_categorical, MlpParams};
use crate::timeseries::{SlotIndex, SLOTS_PER_DAY};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("budget {budget} exceeds span length {span}")]
    BudgetExceedsSpan { budget: usize, span: usize },
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("state vector has length {found}, network expects {expected}")]
    ShapeMismatch { found: usize, expected: usize },
}

fn span_len(span: (SlotIndex, SlotIndex)) -> usize {
    span.1 .0.saturating_sub(span.0 .0) as usize
}

/// `start + floor(i * T / N)` for `i = 0..N`.
pub fn uniform_schedule(span: (SlotIndex, SlotIndex), budget: usize) -> Result<Vec<SlotIndex>, PolicyError> {
    let t = span_len(span);
    if budget == 0 {
        return Err(PolicyError::ZeroBudget);
    }
    if budget > t {
        return Err(PolicyError::BudgetExceedsSpan { budget, span: t });
    }
    Ok((0..budget).map(|i| SlotIndex(span.0 .0 + (i * t / budget) as u32)).collect())
}

/// Uniformly random `budget`-subset of the span, sorted.
pub fn random_schedule(
    span: (SlotIndex, SlotIndex),
    budget: usize,
    seed: u64,
) -> Result<Vec<SlotIndex>, PolicyError> {
    let t = span_len(span);
    if budget > t {
        return Err(PolicyError::BudgetExceedsSpan { budget, span: t });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<u32> = index::sample(&mut rng, t, budget).into_iter().map(|i| i as u32).collect();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| SlotIndex(span.0 .0 + i)).collect())
}

/// How the oracle spreads its budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleAllocation {
    /// Split the budget evenly across the span's days and maximize each
    /// day's Fisher information in turn.
    #[default]
    Daily,
    /// Maximize Fisher information over the whole span at once.
    WholeSpan,
}

/// Per-day budgets `floor((d+1)N/D) - floor(dN/D)`.
pub fn daily_budgets(budget: usize, days: usize) -> Vec<usize> {
    (0..days).map(|d| (d + 1) * budget / days - d * budget / days).collect()
}

/// Sequential greedy selection: `budget` times, adds the slot whose
/// observation most increases the mean Fisher information, ties going to
/// the lowest slot. Only posterior variances matter, so no true values are
/// consumed.
pub fn greedy_oracle_schedule(
    evaluator: &Evaluator,
    budget: usize,
    allocation: OracleAllocation,
) -> Result<Vec<SlotIndex>, PolicyError> {
    let (start, end) = evaluator.span();
    let t = span_len((start, end));
    if budget > t {
        return Err(PolicyError::BudgetExceedsSpan { budget, span: t });
    }
    let mut posterior = evaluator.prior().clone();
    let day = SLOTS_PER_DAY as usize;
    let blocks: Vec<(core::ops::Range<usize>, usize)> = match allocation {
        OracleAllocation::WholeSpan => alloc::vec![(0..t, budget)],
        OracleAllocation::Daily => {
            let days = t.div_ceil(day);
            daily_budgets(budget, days)
                .into_iter()
                .enumerate()
                .map(|(d, n)| (d * day..((d + 1) * day).min(t), n))
                .collect()
        }
    };
    let mut chosen = alloc::vec![false; t];
    let mut schedule = Vec::with_capacity(budget);
    for (range, n) in blocks {
        let n = n.min(range.len());
        for _ in 0..n {
            let mut best: Option<(usize, f64)> = None;
            for i in range.clone() {
                if chosen[i] {
                    continue;
                }
                let fi = posterior.fisher_information_if_observed(i, range.clone());
                if best.is_none_or(|(_, b)| fi > b) {
                    best = Some((i, fi));
                }
            }
            let (i, _) = best.expect("block has an unchosen slot");
            chosen[i] = true;
            let m = posterior.mean(i);
            posterior.observe(i, m);
            schedule.push(SlotIndex(start.0 + i as u32));
        }
    }
    schedule.sort();
    Ok(schedule)
}

/// A closed-loop policy choosing how long to sleep.
pub trait Policy {
    fn act(&mut self, state: &State, observation: &[f64]) -> Action;
}

/// Sleeps the same number of slots every time.
#[derive(Debug, Clone, Copy)]
pub struct FixedSleep(pub u32);

impl Policy for FixedSleep {
    fn act(&mut self, _: &State, _: &[f64]) -> Action {
        Action { sleep: self.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    Stochastic,
    Greedy,
}

/// Decision of a neural policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: Action,
    /// Index into the network's outputs (`sleep - 1`).
    pub index: usize,
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct NeuralPolicy {
    pub params: MlpParams,
    pub mode: ActMode,
    rng: ChaCha8Rng,
}

impl NeuralPolicy {
    pub fn new(params: MlpParams, mode: ActMode, seed: u64) -> Self {
        NeuralPolicy { params, mode, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn decide(&mut self, observation: &[f64]) -> Result<Decision, PolicyError> {
        decide(&self.params, self.mode, observation, &mut self.rng)
    }
}

/// Samples (or takes the argmax of) the policy head; sleep = index + 1.
pub fn decide<R: Rng + ?Sized>(
    params: &MlpParams,
    mode: ActMode,
    observation: &[f64],
    rng: &mut R,
) -> Result<Decision, PolicyError> {
    let expected = params.architecture.input_dim;
    if observation.len() != expected {
        return Err(PolicyError::ShapeMismatch { found: observation.len(), expected });
    }
    let out = params.forward(observation);
    let logp = log_softmax(&out.logits);
    let index = match mode {
        ActMode::Greedy => argmax(&logp),
        ActMode::Stochastic => {
            let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
            sample_categorical(&probs, rng)
        }
    };
    Ok(Decision { action: Action { sleep: index as u32 + 1 }, index, log_prob: logp[index], value: out.value })
}

impl Policy for NeuralPolicy {
    fn act(&mut self, _: &State, observation: &[f64]) -> Action {
        self.decide(observation).expect("observation matches network input").action
    }
}

/// Runs one episode from `start_day` and returns the slots measured.
pub fn rollout_schedule(
    policy: &mut dyn Policy,
    env: &mut SensingEnv,
    start_day: u32,
) -> Result<Vec<SlotIndex>, EnvError> {
    let mut state = env.reset(start_day)?;
    while !env.is_done() {
        let obs = env.state_vector(&state);
        let action = policy.act(&state, &obs);
        state = env.step(action)?.state;
    }
    Ok(env.samples().to_vec())
}
