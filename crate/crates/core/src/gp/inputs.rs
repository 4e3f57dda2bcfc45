//! Mapping from slots to kernel input vectors.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::timeseries::{slot_to_features, Dataset, FeatureVector, HolidaySet, SlotIndex};

/// Number of standardized calendar components appended to the time
/// coordinate: weekday sin, weekday cos, holiday flag.
const CALENDAR_DIMS: usize = 3;

/// Kernel input = `[slot_time (days), z(weekday sin), z(weekday cos), z(holiday)]`.
///
/// The calendar components are standardized with statistics of the data
/// the encoder was built from; constant components keep unit scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputEncoder {
    pub mean: [f64; CALENDAR_DIMS],
    pub scale: [f64; CALENDAR_DIMS],
}

impl Default for InputEncoder {
    fn default() -> Self {
        InputEncoder { mean: [0.0; CALENDAR_DIMS], scale: [1.0; CALENDAR_DIMS] }
    }
}

fn calendar(f: &FeatureVector) -> [f64; CALENDAR_DIMS] {
    [f.day_of_week_sin, f.day_of_week_cos, f.is_holiday]
}

impl InputEncoder {
    pub fn fit(dataset: &Dataset) -> Self {
        let n = dataset.len();
        if n == 0 {
            return Self::default();
        }
        let feats: Vec<[f64; CALENDAR_DIMS]> = dataset
            .measurements()
            .iter()
            .map(|m| calendar(&slot_to_features(m.slot, dataset.holidays())))
            .collect();
        let mut mean = [0.0; CALENDAR_DIMS];
        let mut scale = [1.0; CALENDAR_DIMS];
        for k in 0..CALENDAR_DIMS {
            mean[k] = feats.iter().map(|f| f[k]).sum::<f64>() / n as f64;
            let var = feats.iter().map(|f| (f[k] - mean[k]).powi(2)).sum::<f64>() / n as f64;
            if var > 1e-12 {
                scale[k] = var.sqrt();
            }
        }
        InputEncoder { mean, scale }
    }

    pub fn encode(&self, slot: SlotIndex, holidays: &HolidaySet) -> Vec<f64> {
        let f = slot_to_features(slot, holidays);
        let c = calendar(&f);
        let mut x = vec![f.slot_time];
        for k in 0..CALENDAR_DIMS {
            x.push((c[k] - self.mean[k]) / self.scale[k]);
        }
        x
    }

    pub fn encode_all(&self, slots: impl IntoIterator<Item = SlotIndex>, holidays: &HolidaySet) -> Vec<Vec<f64>> {
        slots.into_iter().map(|s| self.encode(s, holidays)).collect()
    }

    /// Inputs and targets of every measurement in `dataset`.
    pub fn training_set(&self, dataset: &Dataset) -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs = dataset
            .measurements()
            .iter()
            .map(|m| self.encode(m.slot, dataset.holidays()))
            .collect();
        let ys = dataset.measurements().iter().map(|m| m.laeq).collect();
        (xs, ys)
    }
}
