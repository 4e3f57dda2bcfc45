//! Slot-grid time representation, calendar features and the synthetic
//! workplace-noise generator.
//!
//! Time is an abstract grid of 15-minute slots counted from the dataset
//! epoch. Slot 0 is Monday 00:00; day `d` is a weekday when `d % 7 < 5`.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const SLOTS_PER_DAY: u32 = 96;
pub const DAYS_PER_WEEK: u32 = 7;
pub const SLOTS_PER_WEEK: u32 = SLOTS_PER_DAY * DAYS_PER_WEEK;

/// Number of calendar features fed to the policy for each horizon slot.
pub const CALENDAR_FEATURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotIndex(pub u32);

impl SlotIndex {
    pub fn day(self) -> u32 {
        self.0 / SLOTS_PER_DAY
    }

    pub fn slot_of_day(self) -> u32 {
        self.0 % SLOTS_PER_DAY
    }

    /// 0 = Monday .. 6 = Sunday.
    pub fn day_of_week(self) -> u32 {
        self.day() % DAYS_PER_WEEK
    }

    /// Continuous kernel time coordinate, in days.
    pub fn time_in_days(self) -> f64 {
        f64::from(self.0) / f64::from(SLOTS_PER_DAY)
    }

    pub fn first_of_day(day: u32) -> Self {
        SlotIndex(day * SLOTS_PER_DAY)
    }
}

impl From<u32> for SlotIndex {
    fn from(v: u32) -> Self {
        SlotIndex(v)
    }
}

/// One aggregated L_Aeq reading (dB) for a slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub slot: SlotIndex,
    pub laeq: f64,
}

/// Set of day indices that are public holidays.
pub type HolidaySet = BTreeSet<u32>;

/// Explanatory variables of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub time_of_day_sin: f64,
    pub time_of_day_cos: f64,
    pub day_of_week_sin: f64,
    pub day_of_week_cos: f64,
    pub is_holiday: f64,
    pub slot_time: f64,
}

impl FeatureVector {
    /// The five calendar components in state-vector order (slot_time excluded).
    pub fn calendar(&self) -> [f64; CALENDAR_FEATURES] {
        [
            self.time_of_day_sin,
            self.time_of_day_cos,
            self.day_of_week_sin,
            self.day_of_week_cos,
            self.is_holiday,
        ]
    }
}

pub fn slot_to_features(slot: SlotIndex, holidays: &HolidaySet) -> FeatureVector {
    let tod = 2.0 * PI * f64::from(slot.slot_of_day()) / f64::from(SLOTS_PER_DAY);
    let dow = 2.0 * PI * f64::from(slot.day_of_week()) / f64::from(DAYS_PER_WEEK);
    FeatureVector {
        time_of_day_sin: tod.sin(),
        time_of_day_cos: tod.cos(),
        day_of_week_sin: dow.sin(),
        day_of_week_cos: dow.cos(),
        is_holiday: if holidays.contains(&slot.day()) { 1.0 } else { 0.0 },
        slot_time: slot.time_in_days(),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TimeseriesError {
    #[error("slot {0} appears more than once")]
    DuplicateSlot(u32),
    #[error("non-finite level at slot {0}")]
    NonFinite(u32),
    #[error("dataset is empty")]
    Empty,
    #[error("split at slot {0} leaves an empty partition")]
    EmptyPartition(u32),
}

/// Measurements on the slot grid, strictly increasing by slot.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    measurements: Vec<Measurement>,
    holidays: HolidaySet,
}

impl Dataset {
    /// Sorts by slot and rejects duplicates and non-finite levels.
    pub fn new(
        mut measurements: Vec<Measurement>,
        holidays: HolidaySet,
    ) -> Result<Self, TimeseriesError> {
        measurements.sort_by_key(|m| m.slot);
        for w in measurements.windows(2) {
            if w[0].slot == w[1].slot {
                return Err(TimeseriesError::DuplicateSlot(w[0].slot.0));
            }
        }
        if let Some(m) = measurements.iter().find(|m| !m.laeq.is_finite()) {
            return Err(TimeseriesError::NonFinite(m.slot.0));
        }
        Ok(Dataset { measurements, holidays })
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    pub fn holidays(&self) -> &HolidaySet {
        &self.holidays
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn get(&self, slot: SlotIndex) -> Option<f64> {
        self.measurements
            .binary_search_by_key(&slot, |m| m.slot)
            .ok()
            .map(|i| self.measurements[i].laeq)
    }

    /// Half-open `[first, last + 1)` slot span, `None` when empty.
    pub fn span(&self) -> Option<(SlotIndex, SlotIndex)> {
        let first = self.measurements.first()?.slot;
        let last = self.measurements.last()?.slot;
        Some((first, SlotIndex(last.0 + 1)))
    }

    /// Measurements with `start <= slot < end`.
    pub fn range(&self, start: SlotIndex, end: SlotIndex) -> &[Measurement] {
        let lo = self.measurements.partition_point(|m| m.slot < start);
        let hi = self.measurements.partition_point(|m| m.slot < end);
        &self.measurements[lo..hi.max(lo)]
    }

    /// Subset restricted to `[start, end)`, sharing the holiday calendar.
    pub fn slice(&self, start: SlotIndex, end: SlotIndex) -> Dataset {
        Dataset {
            measurements: self.range(start, end).to_vec(),
            holidays: self.holidays.clone(),
        }
    }

    pub fn mean_level(&self) -> f64 {
        if self.measurements.is_empty() {
            return 0.0;
        }
        self.measurements.iter().map(|m| m.laeq).sum::<f64>() / self.measurements.len() as f64
    }

    pub fn std_level(&self) -> f64 {
        let n = self.measurements.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean_level();
        let ss: f64 = self.measurements.iter().map(|m| (m.laeq - mean).powi(2)).sum();
        (ss / n as f64).sqrt()
    }
}

/// Splits into `slot < boundary` and `slot >= boundary`.
pub fn split(dataset: &Dataset, boundary: SlotIndex) -> Result<(Dataset, Dataset), TimeseriesError> {
    let cut = dataset.measurements.partition_point(|m| m.slot < boundary);
    if cut == 0 || cut == dataset.measurements.len() {
        return Err(TimeseriesError::EmptyPartition(boundary.0));
    }
    let left = Dataset {
        measurements: dataset.measurements[..cut].to_vec(),
        holidays: dataset.holidays.clone(),
    };
    let right = Dataset {
        measurements: dataset.measurements[cut..].to_vec(),
        holidays: dataset.holidays.clone(),
    };
    Ok((left, right))
}

/// Parameters of the synthetic office-noise signal.
///
/// The signal is a weekly template (night floor, office plateau on
/// working days, attenuated plateau on weekends and holidays) plus a
/// Gaussian perturbation. Its standard deviation is `noise_sd` on the
/// office plateau and `quiet_ratio * noise_sd` where there is no activity,
/// interpolating with the activity level. A share `1 - white_fraction` of
/// the perturbation variance is temporally correlated (two cascaded AR(1)
/// filters with time constant `correlation_slots`), the rest is white.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProfile {
    pub base_db: f64,
    pub office_db: f64,
    /// Half-open slot-of-day range `[start, end)` of the office plateau.
    pub office_hours: (u32, u32),
    /// Slots of linear ramp before and after the plateau.
    pub ramp_slots: u32,
    pub weekend_attenuation: f64,
    pub noise_sd: f64,
    pub correlation_slots: f64,
    pub white_fraction: f64,
    /// Perturbation scale outside the office plateau relative to inside.
    pub quiet_ratio: f64,
    pub holidays: Vec<u32>,
    pub seed: u64,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        SyntheticProfile {
            base_db: 35.0,
            office_db: 55.0,
            office_hours: (32, 68),
            ramp_slots: 4,
            weekend_attenuation: 0.8,
            noise_sd: 2.0,
            correlation_slots: 6.0,
            white_fraction: 0.0025,
            quiet_ratio: 0.25,
            holidays: Vec::new(),
            seed: 7,
        }
    }
}

impl SyntheticProfile {
    pub fn holiday_set(&self) -> HolidaySet {
        self.holidays.iter().copied().collect()
    }

    /// Noise-free level at `slot`.
    pub fn template(&self, slot: SlotIndex, holidays: &HolidaySet) -> f64 {
        self.base_db + self.activity(slot, holidays) * (self.office_db - self.base_db)
    }

    /// Fraction of the full office amplitude present at `slot`, in [0, 1].
    pub fn activity(&self, slot: SlotIndex, holidays: &HolidaySet) -> f64 {
        let (start, end) = self.office_hours;
        let sod = slot.slot_of_day() as i64;
        let (start, end, ramp) = (start as i64, end as i64, self.ramp_slots as i64);
        // Plateau weight in [0, 1]: 1 inside office hours, linear ramps outside.
        let weight = if sod >= start && sod < end {
            1.0
        } else if ramp > 0 && sod < start && start - sod <= ramp {
            1.0 - (start - sod) as f64 / (ramp + 1) as f64
        } else if ramp > 0 && sod >= end && sod - end < ramp {
            1.0 - (sod - end + 1) as f64 / (ramp + 1) as f64
        } else {
            0.0
        };
        let workday = slot.day_of_week() < 5 && !holidays.contains(&slot.day());
        if workday {
            weight
        } else {
            weight * (1.0 - self.weekend_attenuation)
        }
    }

    /// Perturbation standard deviation at `slot`.
    pub fn noise_scale(&self, slot: SlotIndex, holidays: &HolidaySet) -> f64 {
        let q = self.quiet_ratio;
        self.noise_sd * (q + (1.0 - q) * self.activity(slot, holidays))
    }
}

/// Deterministic synthetic dataset covering slots `0..num_slots`.
pub fn generate_synthetic(profile: &SyntheticProfile, num_slots: u32) -> Dataset {
    let holidays = profile.holiday_set();
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let white_fraction = profile.white_fraction.clamp(0.0, 1.0);
    let smooth_share = (1.0 - white_fraction).sqrt();
    let white_share = white_fraction.sqrt();

    // Two cascaded AR(1) stages; the closed-form stationary variance of the
    // cascade normalizes the output to unit variance.
    let phi = if profile.correlation_slots > 0.0 {
        (-1.0 / profile.correlation_slots).exp()
    } else {
        0.0
    };
    let cascade_var = (1.0 + phi * phi) / (1.0 - phi * phi).powi(3);
    let scale = 1.0 / cascade_var.sqrt();
    let burn_in = (20.0 * profile.correlation_slots).ceil() as u32 + 1;
    let (mut first, mut second) = (0.0f64, 0.0f64);
    let mut draw = |rng: &mut ChaCha8Rng| -> f64 {
        let e: f64 = rng.sample(StandardNormal);
        first = phi * first + e;
        second = phi * second + first;
        second * scale
    };
    for _ in 0..burn_in {
        draw(&mut rng);
    }

    let measurements = (0..num_slots)
        .map(|i| {
            let slot = SlotIndex(i);
            let sd = profile.noise_scale(slot, &holidays);
            let smooth = draw(&mut rng) * smooth_share * sd;
            let white: f64 = rng.sample::<f64, _>(StandardNormal) * white_share * sd;
            Measurement { slot, laeq: profile.template(slot, &holidays) + smooth + white }
        })
        .collect();
    Dataset { measurements, holidays }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn midnight_and_noon_encodings() {
        let h = HolidaySet::new();
        let f0 = slot_to_features(SlotIndex(0), &h);
        assert_eq!(f0.time_of_day_sin, 0.0);
        assert_eq!(f0.time_of_day_cos, 1.0);
        assert_eq!(f0.is_holiday, 0.0);
        let f48 = slot_to_features(SlotIndex(48), &h);
        assert!(f48.time_of_day_sin.abs() < 1e-12);
        assert!((f48.time_of_day_cos + 1.0).abs() < 1e-12);
    }

    #[test]
    fn holiday_flag_follows_calendar() {
        let h: HolidaySet = [1].into_iter().collect();
        assert_eq!(slot_to_features(SlotIndex(96), &h).is_holiday, 1.0);
        assert_eq!(slot_to_features(SlotIndex(95), &h).is_holiday, 0.0);
    }

    #[test]
    fn duplicate_slot_rejected() {
        let m = vec![
            Measurement { slot: SlotIndex(5), laeq: 1.0 },
            Measurement { slot: SlotIndex(5), laeq: 2.0 },
        ];
        assert_eq!(Dataset::new(m, HolidaySet::new()), Err(TimeseriesError::DuplicateSlot(5)));
    }

    #[test]
    fn unsorted_input_sorted() {
        let a = vec![
            Measurement { slot: SlotIndex(2), laeq: 1.0 },
            Measurement { slot: SlotIndex(0), laeq: 2.0 },
        ];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(Dataset::new(a, HolidaySet::new()), Dataset::new(b, HolidaySet::new()));
    }

    #[test]
    fn zero_noise_template() {
        let profile = SyntheticProfile { noise_sd: 0.0, ..SyntheticProfile::default() };
        let d = generate_synthetic(&profile, 2 * SLOTS_PER_WEEK);
        let inside = SlotIndex(profile.office_hours.0 + 3);
        assert_eq!(d.get(inside), Some(profile.office_db));
        for s in 0..SLOTS_PER_DAY {
            assert_eq!(d.get(SlotIndex(s)), d.get(SlotIndex(s + SLOTS_PER_DAY)));
        }
        for s in 0..SLOTS_PER_WEEK {
            assert_eq!(d.get(SlotIndex(s)), d.get(SlotIndex(s + SLOTS_PER_WEEK)));
        }
        // Saturday plateau is attenuated toward the floor.
        let sat = SlotIndex(5 * SLOTS_PER_DAY + profile.office_hours.0 + 3);
        let expected = profile.base_db + (profile.office_db - profile.base_db) * 0.2;
        assert!((d.get(sat).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn generator_is_deterministic() {
        let p = SyntheticProfile::default();
        assert_eq!(generate_synthetic(&p, 500), generate_synthetic(&p, 500));
        let q = SyntheticProfile { seed: 8, ..p.clone() };
        assert_ne!(generate_synthetic(&p, 500), generate_synthetic(&q, 500));
    }

    #[test]
    fn perturbation_scale_matches_noise_sd() {
        let p = SyntheticProfile { noise_sd: 2.0, quiet_ratio: 1.0, ..SyntheticProfile::default() };
        let flat = SyntheticProfile { noise_sd: 0.0, ..p.clone() };
        let n = 40 * SLOTS_PER_WEEK;
        let a = generate_synthetic(&p, n);
        let b = generate_synthetic(&flat, n);
        let var: f64 = a
            .measurements()
            .iter()
            .zip(b.measurements())
            .map(|(x, y)| (x.laeq - y.laeq).powi(2))
            .sum::<f64>()
            / n as f64;
        assert!((var.sqrt() - 2.0).abs() < 0.2, "sd {}", var.sqrt());
    }

    #[test]
    fn quiet_hours_have_smaller_perturbation() {
        let p = SyntheticProfile::default();
        let h = p.holiday_set();
        let night = SlotIndex(2);
        let office = SlotIndex(p.office_hours.0 + 1);
        assert!((p.noise_scale(night, &h) - p.quiet_ratio * p.noise_sd).abs() < 1e-12);
        assert!((p.noise_scale(office, &h) - p.noise_sd).abs() < 1e-12);
        let ramp = SlotIndex(p.office_hours.0 - 1);
        let s = p.noise_scale(ramp, &h);
        assert!(s > p.quiet_ratio * p.noise_sd && s < p.noise_sd);
    }

    #[test]
    fn split_three_weeks() {
        let d = generate_synthetic(&SyntheticProfile::default(), 3 * SLOTS_PER_WEEK);
        let (train, test) = split(&d, SlotIndex(1344)).unwrap();
        assert_eq!(train.len(), 1344);
        assert_eq!(test.len(), 672);
        assert_eq!(split(&d, SlotIndex(0)), Err(TimeseriesError::EmptyPartition(0)));
        let (a, b) = split(&d, SlotIndex(1000)).unwrap();
        let mut joined = a.measurements().to_vec();
        joined.extend_from_slice(b.measurements());
        assert_eq!(joined.as_slice(), d.measurements());
    }
}
