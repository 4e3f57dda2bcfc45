//! Scoring sampling schedules: mean Fisher information of the posterior and
//! reconstruction RMSE against the true series.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::{EnvError, SensingEnv};
use crate::gp::{GpError, KernelParams, SlotPredictor, SpanPosterior};
use crate::policies::Policy;
use crate::timeseries::{Dataset, SlotIndex};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("non-positive variance {value} at position {index}")]
    NonPositiveVariance { index: usize, value: f64 },
    #[error("no ground truth for slot {0}")]
    MissingTruth(u32),
    #[error("slot {0} lies outside the evaluation span")]
    OutsideSpan(u32),
    #[error("invalid span [{0}, {1})")]
    InvalidSpan(u32, u32),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Root mean squared error between two equally long series.
pub fn rmse(predicted: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch { left: predicted.len(), right: truth.len() });
    }
    if predicted.is_empty() {
        return Err(EvalError::Empty);
    }
    let sse: f64 = predicted.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

/// Mean precision `1/σ²` over a span of predictive variances.
pub fn fisher_information(variances: &[f64]) -> Result<f64, EvalError> {
    if variances.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sum = 0.0;
    for (index, &value) in variances.iter().enumerate() {
        if !(value > 0.0) {
            return Err(EvalError::NonPositiveVariance { index, value });
        }
        sum += 1.0 / value;
    }
    Ok(sum / variances.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fisher_information: f64,
    pub rmse: f64,
    pub num_samples_used: usize,
    pub schedule: Vec<SlotIndex>,
    /// Half-open `[start, end)`.
    pub period_span: (SlotIndex, SlotIndex),
}

/// Scores many schedules over one span against one context.
///
/// The posterior over the span is built once from the context measurements
/// that precede the span; each schedule then conditions a copy of it on the
/// true values at its slots.
#[derive(Debug, Clone)]
pub struct Evaluator {
    span: (SlotIndex, SlotIndex),
    truth: Vec<f64>,
    posterior: SpanPosterior,
}

impl Evaluator {
    /// `context = None` scores schedules from the prior alone, centred on
    /// the mean level of `dataset`.
    pub fn new(
        dataset: &Dataset,
        params: &KernelParams,
        span: (SlotIndex, SlotIndex),
        context: Option<&Dataset>,
    ) -> Result<Self, EvalError> {
        let predictor = match context {
            Some(ctx) => SlotPredictor::new(ctx, params)?.with_holidays(dataset.holidays().clone()),
            None => {
                let empty = Dataset::new(Vec::new(), dataset.holidays().clone()).expect("empty dataset");
                SlotPredictor::with_prior_mean(&empty, params, dataset.mean_level())?
            }
        };
        Self::with_predictor(dataset, &predictor, span)
    }

    pub fn with_predictor(
        dataset: &Dataset,
        predictor: &SlotPredictor,
        span: (SlotIndex, SlotIndex),
    ) -> Result<Self, EvalError> {
        if span.1 <= span.0 {
            return Err(EvalError::InvalidSpan(span.0 .0, span.1 .0));
        }
        let slots: Vec<SlotIndex> = (span.0 .0..span.1 .0).map(SlotIndex).collect();
        let truth = slots
            .iter()
            .map(|&s| dataset.get(s).ok_or(EvalError::MissingTruth(s.0)))
            .collect::<Result<Vec<_>, _>>()?;
        let posterior = predictor.posterior(&slots, Some(span.0));
        Ok(Evaluator { span, truth, posterior })
    }

    pub fn span(&self) -> (SlotIndex, SlotIndex) {
        self.span
    }

    pub fn truth(&self) -> &[f64] {
        &self.truth
    }

    /// Posterior over the span before any schedule observation.
    pub fn prior(&self) -> &SpanPosterior {
        &self.posterior
    }

    /// Posterior mean and predictive variance over the whole span after
    /// observing the truth at every scheduled slot.
    pub fn reconstruct(&self, schedule: &[SlotIndex]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        let mut observed = Vec::with_capacity(schedule.len());
        for &s in schedule {
            if s < self.span.0 || s >= self.span.1 {
                return Err(EvalError::OutsideSpan(s.0));
            }
            let i = (s.0 - self.span.0 .0) as usize;
            observed.push((i, self.truth[i]));
        }
        observed.sort_by_key(|o| o.0);
        observed.dedup_by_key(|o| o.0);
        let targets: Vec<usize> = (0..self.truth.len()).collect();
        Ok(self.posterior.batch_condition(&observed, &targets))
    }

    pub fn evaluate(&self, schedule: &[SlotIndex]) -> Result<EvalReport, EvalError> {
        let (mean, var) = self.reconstruct(schedule)?;
        let mut sorted = schedule.to_vec();
        sorted.sort();
        sorted.dedup();
        Ok(EvalReport {
            fisher_information: fisher_information(&var)?,
            rmse: rmse(&mean, &self.truth)?,
            num_samples_used: sorted.len(),
            schedule: sorted,
            period_span: self.span,
        })
    }
}

/// Scores a fixed schedule over `span`. See [`Evaluator`].
pub fn evaluate_schedule(
    dataset: &Dataset,
    schedule: &[SlotIndex],
    params: &KernelParams,
    span: (SlotIndex, SlotIndex),
    context: Option<&Dataset>,
) -> Result<EvalReport, EvalError> {
    Evaluator::new(dataset, params, span, context)?.evaluate(schedule)
}

/// Runs `policy` through one episode starting at `start_day` and scores the
/// slots it sampled over the episode span.
pub fn evaluate_policy(
    policy: &mut dyn Policy,
    env: &mut SensingEnv,
    start_day: u32,
) -> Result<EvalReport, EvalError> {
    let schedule = crate::policies::rollout_schedule(policy, env, start_day)?;
    let span = env.episode_span();
    let evaluator = Evaluator::with_predictor(env.world().dataset(), env.world().predictor(), span)?;
    evaluator.evaluate(&schedule)
}
