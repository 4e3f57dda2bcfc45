//! A GP bound to a measurement history and a calendar, queried by slot.

use alloc::vec::Vec;

use super::{combined_kernel, GpError, GpModel, InputEncoder, KernelParams, Matrix, SpanPosterior};
use crate::timeseries::{Dataset, HolidaySet, SlotIndex};

/// Context model over a measurement history.
///
/// The prior mean is the mean level of the history. Posteriors can be
/// restricted to the part of the history strictly before a given slot,
/// which is what an online sensor would know at that time.
#[derive(Debug, Clone)]
pub struct SlotPredictor {
    encoder: InputEncoder,
    holidays: HolidaySet,
    slots: Vec<SlotIndex>,
    prior_mean: f64,
    params: KernelParams,
    model: Option<GpModel>,
}

impl SlotPredictor {
    /// Fits the exact GP to every measurement in `context`. An empty
    /// context yields a prior-only predictor with zero mean.
    pub fn new(context: &Dataset, params: &KernelParams) -> Result<Self, GpError> {
        let prior_mean = if context.is_empty() { 0.0 } else { context.mean_level() };
        Self::with_prior_mean(context, params, prior_mean)
    }

    pub fn with_prior_mean(context: &Dataset, params: &KernelParams, prior_mean: f64) -> Result<Self, GpError> {
        if !params.is_valid() {
            return Err(GpError::InvalidParams);
        }
        let encoder = InputEncoder::fit(context);
        let model = if context.is_empty() {
            None
        } else {
            let (xs, ys) = encoder.training_set(context);
            Some(GpModel::fit_with_mean(&xs, &ys, params, prior_mean)?)
        };
        Ok(SlotPredictor {
            encoder,
            holidays: context.holidays().clone(),
            slots: context.measurements().iter().map(|m| m.slot).collect(),
            prior_mean,
            params: *params,
            model,
        })
    }

    /// Replaces the calendar used for queries (the context calendar by default).
    pub fn with_holidays(mut self, holidays: HolidaySet) -> Self {
        self.holidays = holidays;
        self
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn holidays(&self) -> &HolidaySet {
        &self.holidays
    }

    pub fn encode(&self, slot: SlotIndex) -> Vec<f64> {
        self.encoder.encode(slot, &self.holidays)
    }

    pub fn model(&self) -> Option<&GpModel> {
        self.model.as_ref()
    }

    /// Number of context measurements strictly before `slot`.
    pub fn known_before(&self, slot: SlotIndex) -> usize {
        self.slots.partition_point(|s| *s < slot)
    }

    /// Joint posterior over `queries` given the context measurements before
    /// `cutoff` (all of them when `cutoff` is `None`).
    pub fn posterior(&self, queries: &[SlotIndex], cutoff: Option<SlotIndex>) -> SpanPosterior {
        let xs: Vec<Vec<f64>> = queries.iter().map(|&s| self.encode(s)).collect();
        let known = cutoff.map_or(self.slots.len(), |c| self.known_before(c));
        match &self.model {
            Some(model) if known == model.len() => SpanPosterior::from_model(model, &xs),
            Some(model) if known > 0 => {
                let sub = model.prefix(known).expect("non-empty prefix");
                SpanPosterior::from_model(&sub, &xs)
            }
            Some(model) => self.prior(&xs, model.observation_noise()),
            None => self.prior(&xs, self.params.noise_variance),
        }
    }

    fn prior(&self, xs: &[Vec<f64>], obs_noise: f64) -> SpanPosterior {
        let mean = alloc::vec![self.prior_mean; xs.len()];
        let cov = Matrix::from_fn(xs.len(), |i, j| combined_kernel(&xs[i], &xs[j], &self.params));
        SpanPosterior::from_parts(mean, cov, self.params.noise_variance, obs_noise)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{generate_synthetic, SyntheticProfile, SLOTS_PER_DAY};

    #[test]
    fn cutoff_matches_refit_on_earlier_data() {
        let data = generate_synthetic(&SyntheticProfile::default(), 2 * SLOTS_PER_DAY);
        let params = KernelParams::default();
        let pred = SlotPredictor::with_prior_mean(&data, &params, 40.0).unwrap();
        let cutoff = SlotIndex(100);
        let early = data.slice(SlotIndex(0), cutoff);
        let queries: Vec<SlotIndex> = (100..110).map(SlotIndex).collect();
        let post = pred.posterior(&queries, Some(cutoff));

        let encoder = InputEncoder::fit(&data);
        let (xs, ys) = encoder.training_set(&early);
        let model = GpModel::fit_with_mean(&xs, &ys, &params, 40.0).unwrap();
        let qx: Vec<Vec<f64>> = queries.iter().map(|&s| encoder.encode(s, data.holidays())).collect();
        let direct = model.predict(&qx);
        for i in 0..queries.len() {
            assert!((post.mean(i) - direct.mean[i]).abs() < 1e-6);
            assert!((post.variance(i) - direct.variance[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_cutoff_is_prior() {
        let data = generate_synthetic(&SyntheticProfile::default(), SLOTS_PER_DAY);
        let params = KernelParams::default();
        let pred = SlotPredictor::new(&data, &params).unwrap();
        let post = pred.posterior(&[SlotIndex(0), SlotIndex(5)], Some(SlotIndex(0)));
        assert!((post.mean(0) - data.mean_level()).abs() < 1e-12);
        let prior_var = params.signal_variance() + params.noise_variance;
        assert!((post.variance(1) - prior_var).abs() < 1e-9);
    }
}
