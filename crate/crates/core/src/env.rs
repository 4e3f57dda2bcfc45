//! The sensing decision process: a battery-limited sensor that chooses how
//! many slots to sleep, measures on wake-up, and is scored by the mean
//! Fisher information of its GP posterior.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::evaluation::fisher_information;
use crate::gp::{GpError, KernelParams, SlotPredictor, SpanPosterior};
use crate::timeseries::{slot_to_features, Dataset, SlotIndex, CALENDAR_FEATURES, SLOTS_PER_DAY};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("episode starting on day {start_day} lies outside the data")]
    SpanError { start_day: u32 },
    #[error("episode is done; call reset")]
    EpisodeDone,
    #[error("sleep of {sleep} slots is outside [1, {horizon}]")]
    InvalidAction { sleep: u32, horizon: usize },
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("no measurement for slot {0}")]
    MissingTruth(u32),
    #[error(transparent)]
    Gp(#[from] GpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Each completed day pays its end-of-day Fisher information.
    #[default]
    SparseDaily,
    /// Each step pays the change in the current day's Fisher information.
    DenseDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Prediction horizon and longest allowed sleep, in slots.
    pub horizon: usize,
    pub budget_per_day: u32,
    pub episode_days: u32,
    pub reward_mode: RewardMode,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { horizon: 24, budget_per_day: 14, episode_days: 1, reward_mode: RewardMode::SparseDaily }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.horizon == 0 || self.horizon > SLOTS_PER_DAY as usize {
            return Err(EnvError::InvalidConfig("horizon must be in [1, 96]"));
        }
        if self.budget_per_day > SLOTS_PER_DAY {
            return Err(EnvError::InvalidConfig("budget_per_day must be at most 96"));
        }
        if self.episode_days == 0 {
            return Err(EnvError::InvalidConfig("episode_days must be at least 1"));
        }
        Ok(())
    }

    /// Length of the vector produced by [`State::to_vector`].
    pub fn observation_dim(&self) -> usize {
        2 * self.horizon + 1 + CALENDAR_FEATURES * self.horizon
    }
}

/// Scales applied when flattening a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateScaling {
    pub level_center: f64,
    pub level_scale: f64,
    pub sigma_scale: f64,
}

/// Immutable data shared by environment instances: ground truth and the
/// context model.
#[derive(Debug, Clone)]
pub struct SensingWorld {
    dataset: Dataset,
    predictor: SlotPredictor,
    scaling: StateScaling,
}

impl SensingWorld {
    /// `dataset` supplies the true measurements read on wake-up; `context`
    /// is the uniformly sampled history the GP starts from. Episodes only
    /// see context measurements taken before they begin.
    pub fn new(dataset: Dataset, context: &Dataset, params: &KernelParams) -> Result<Self, EnvError> {
        let predictor = SlotPredictor::new(context, params)?.with_holidays(dataset.holidays().clone());
        let level_scale = if context.len() > 1 { context.std_level().max(1e-6) } else { 1.0 };
        let scaling = StateScaling {
            level_center: predictor.prior_mean(),
            level_scale,
            sigma_scale: (params.signal_variance() + params.noise_variance).sqrt(),
        };
        Ok(SensingWorld { dataset, predictor, scaling })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn predictor(&self) -> &SlotPredictor {
        &self.predictor
    }

    pub fn scaling(&self) -> &StateScaling {
        &self.scaling
    }

    /// Days `d` for which a `days`-long episode starting on `d` has ground truth.
    pub fn episode_days_available(&self, days: u32) -> Vec<u32> {
        let Some((first, end)) = self.dataset.span() else { return Vec::new() };
        let first_day = first.0.div_ceil(SLOTS_PER_DAY);
        let end_day = end.0 / SLOTS_PER_DAY;
        (first_day..end_day.saturating_sub(days - 1).max(first_day)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub sleep: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub slot: SlotIndex,
    pub mu_horizon: Vec<f64>,
    pub sigma_horizon: Vec<f64>,
    /// Remaining samples today over the daily budget.
    pub battery: f64,
    pub features_horizon: Vec<[f64; CALENDAR_FEATURES]>,
}

impl State {
    /// `[standardized means, scaled std-devs, battery, calendar features]`.
    pub fn to_vector(&self, scaling: &StateScaling) -> Vec<f64> {
        let h = self.mu_horizon.len();
        let mut v = Vec::with_capacity(2 * h + 1 + CALENDAR_FEATURES * h);
        v.extend(self.mu_horizon.iter().map(|m| (m - scaling.level_center) / scaling.level_scale));
        v.extend(self.sigma_horizon.iter().map(|s| s / scaling.sigma_scale));
        v.push(self.battery);
        for f in &self.features_horizon {
            v.extend_from_slice(f);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Wake-up slot.
    pub slot: SlotIndex,
    pub sampled: bool,
    /// `(day, Fisher information)` for every day completed during the step.
    pub day_fi: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: State,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One row of a trajectory dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub slot: u32,
    pub action: u32,
    pub sampled: bool,
    pub battery: f64,
    pub reward: f64,
}

#[derive(Debug, Clone)]
struct Episode {
    start: u32,
    end: u32,
    clock: u32,
    day: u32,
    remaining: u32,
    posterior: SpanPosterior,
    day_fi_before: f64,
    samples: Vec<SlotIndex>,
    trajectory: Vec<TrajectoryRecord>,
    done: bool,
}

/// One environment instance. Cheap to clone per worker; the world is shared.
#[derive(Debug, Clone)]
pub struct SensingEnv {
    world: Arc<SensingWorld>,
    config: EnvConfig,
    cache: BTreeMap<u32, SpanPosterior>,
    episode: Option<Episode>,
}

impl SensingEnv {
    pub fn new(world: Arc<SensingWorld>, config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(SensingEnv { world, config, cache: BTreeMap::new(), episode: None })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn world(&self) -> &SensingWorld {
        &self.world
    }

    pub fn shared_world(&self) -> Arc<SensingWorld> {
        self.world.clone()
    }

    fn window_posterior(&mut self, start: u32, end: u32) -> SpanPosterior {
        let h = self.config.horizon as u32;
        let world = &self.world;
        self.cache
            .entry(start)
            .or_insert_with(|| {
                let slots: Vec<SlotIndex> = (start..end + h).map(SlotIndex).collect();
                world.predictor.posterior(&slots, Some(SlotIndex(start)))
            })
            .clone()
    }

    pub fn reset(&mut self, start_day: u32) -> Result<State, EnvError> {
        let start = start_day * SLOTS_PER_DAY;
        let end = start + self.config.episode_days * SLOTS_PER_DAY;
        let covered = match self.world.dataset.span() {
            Some((first, last)) => first.0 <= start && end <= last.0,
            None => false,
        };
        if !covered {
            return Err(EnvError::SpanError { start_day });
        }
        let posterior = self.window_posterior(start, end);
        let mut episode = Episode {
            start,
            end,
            clock: start,
            day: 0,
            remaining: self.config.budget_per_day,
            posterior,
            day_fi_before: 0.0,
            samples: Vec::new(),
            trajectory: Vec::new(),
            done: false,
        };
        episode.day_fi_before = day_fi(&episode, 0);
        self.episode = Some(episode);
        Ok(self.state())
    }

    fn battery(&self, remaining: u32) -> f64 {
        if self.config.budget_per_day == 0 {
            0.0
        } else {
            remaining as f64 / self.config.budget_per_day as f64
        }
    }

    /// Observation at the current clock.
    pub fn state(&self) -> State {
        let ep = self.episode.as_ref().expect("reset before querying state");
        let h = self.config.horizon as u32;
        let holidays = self.world.predictor.holidays();
        let mut state = State {
            slot: SlotIndex(ep.clock),
            mu_horizon: Vec::with_capacity(h as usize),
            sigma_horizon: Vec::with_capacity(h as usize),
            battery: self.battery(ep.remaining),
            features_horizon: Vec::with_capacity(h as usize),
        };
        // After the last day the horizon is clamped to the window.
        let last = ep.end + h - 1;
        for k in 1..=h {
            let slot = (ep.clock + k).min(last);
            let i = (slot - ep.start) as usize;
            state.mu_horizon.push(ep.posterior.mean(i));
            state.sigma_horizon.push(ep.posterior.variance(i).sqrt());
            state.features_horizon.push(slot_to_features(SlotIndex(slot), holidays).calendar());
        }
        state
    }

    pub fn state_vector(&self, state: &State) -> Vec<f64> {
        state.to_vector(&self.world.scaling)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        let horizon = self.config.horizon;
        if action.sleep == 0 || action.sleep as usize > horizon {
            return Err(EnvError::InvalidAction { sleep: action.sleep, horizon });
        }
        let budget = self.config.budget_per_day;
        let mode = self.config.reward_mode;
        let episode_days = self.config.episode_days;
        let ep = self.episode.as_mut().ok_or(EnvError::EpisodeDone)?;
        if ep.done {
            return Err(EnvError::EpisodeDone);
        }
        let wake = ep.clock + action.sleep;
        let mut reward = 0.0;
        let mut completed = Vec::new();
        while !ep.done && wake >= ep.start + (ep.day + 1) * SLOTS_PER_DAY {
            let fi = day_fi(ep, ep.day);
            completed.push((ep.start / SLOTS_PER_DAY + ep.day, fi));
            reward += match mode {
                RewardMode::SparseDaily => fi,
                RewardMode::DenseDelta => fi - ep.day_fi_before,
            };
            ep.day += 1;
            ep.remaining = budget;
            if ep.day == episode_days {
                ep.done = true;
            } else {
                ep.day_fi_before = day_fi(ep, ep.day);
            }
        }
        let mut sampled = false;
        if !ep.done && ep.remaining > 0 {
            let value = self.world.dataset.get(SlotIndex(wake)).ok_or(EnvError::MissingTruth(wake))?;
            ep.posterior.observe((wake - ep.start) as usize, value);
            ep.remaining -= 1;
            ep.samples.push(SlotIndex(wake));
            sampled = true;
            if mode == RewardMode::DenseDelta {
                let now = day_fi(ep, ep.day);
                reward += now - ep.day_fi_before;
                ep.day_fi_before = now;
            }
        }
        ep.clock = wake;
        let battery = if budget == 0 { 0.0 } else { ep.remaining as f64 / budget as f64 };
        let step = ep.trajectory.len();
        ep.trajectory.push(TrajectoryRecord { step, slot: wake, action: action.sleep, sampled, battery, reward });
        let done = ep.done;
        Ok(StepResult {
            state: self.state(),
            reward,
            done,
            info: StepInfo { slot: SlotIndex(wake), sampled, day_fi: completed },
        })
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.done)
    }

    /// Slots measured so far in the current episode.
    pub fn samples(&self) -> &[SlotIndex] {
        self.episode.as_ref().map_or(&[], |e| &e.samples)
    }

    pub fn trajectory(&self) -> &[TrajectoryRecord] {
        self.episode.as_ref().map_or(&[], |e| &e.trajectory)
    }

    /// Half-open slot range of the current episode.
    pub fn episode_span(&self) -> (SlotIndex, SlotIndex) {
        let ep = self.episode.as_ref().expect("reset before querying the span");
        (SlotIndex(ep.start), SlotIndex(ep.end))
    }

    /// Current posterior over the episode window (episode plus horizon).
    pub fn posterior(&self) -> Option<&SpanPosterior> {
        self.episode.as_ref().map(|e| &e.posterior)
    }
}

fn day_fi(ep: &Episode, day: u32) -> f64 {
    let lo = (day * SLOTS_PER_DAY) as usize;
    let vars = ep.posterior.variances(lo..lo + SLOTS_PER_DAY as usize);
    fisher_information(&vars).expect("posterior variances are floored above zero")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::Evaluator;
    use crate::timeseries::{generate_synthetic, SyntheticProfile, SLOTS_PER_DAY};

    fn world() -> Arc<SensingWorld> {
        let data = generate_synthetic(&SyntheticProfile::default(), 4 * SLOTS_PER_DAY);
        let context = data.slice(SlotIndex(0), SlotIndex(2 * SLOTS_PER_DAY));
        let mut params = KernelParams::default();
        params.noise_variance = 0.2;
        Arc::new(SensingWorld::new(data, &context, &params).unwrap())
    }

    fn env(config: EnvConfig) -> SensingEnv {
        SensingEnv::new(world(), config).unwrap()
    }

    #[test]
    fn reset_state() {
        let mut e = env(EnvConfig::default());
        let s = e.reset(2).unwrap();
        assert_eq!(s.slot, SlotIndex(192));
        assert_eq!(s.battery, 1.0);
        assert!(s.sigma_horizon.iter().all(|&x| x > 0.0));
        assert_eq!(e.state_vector(&s).len(), EnvConfig::default().observation_dim());
        let again = e.reset(2).unwrap();
        assert_eq!(s, again);
        assert_eq!(e.reset(4), Err(EnvError::SpanError { start_day: 4 }));
    }

    #[test]
    fn sleep_one_measures_next_slot() {
        let mut e = env(EnvConfig::default());
        e.reset(2).unwrap();
        let r = e.step(Action { sleep: 1 }).unwrap();
        assert!(r.info.sampled);
        assert_eq!(r.info.slot, SlotIndex(193));
        assert!((r.state.battery - 13.0 / 14.0).abs() < 1e-12);
        assert_eq!(r.reward, 0.0);
        assert!(matches!(e.step(Action { sleep: 25 }), Err(EnvError::InvalidAction { .. })));
    }

    #[test]
    fn exhausted_battery_skips_measurement() {
        let mut e = env(EnvConfig { budget_per_day: 2, ..EnvConfig::default() });
        e.reset(2).unwrap();
        e.step(Action { sleep: 1 }).unwrap();
        e.step(Action { sleep: 1 }).unwrap();
        let before = e.posterior().unwrap().means().to_vec();
        let r = e.step(Action { sleep: 3 }).unwrap();
        assert!(!r.info.sampled);
        assert_eq!(r.info.slot, SlotIndex(197));
        assert_eq!(e.posterior().unwrap().means(), &before[..]);
        assert_eq!(e.samples().len(), 2);
    }

    #[test]
    fn daily_reward_matches_evaluation_module() {
        let mut e = env(EnvConfig::default());
        e.reset(2).unwrap();
        let mut total = 0.0;
        let mut result = None;
        while !e.is_done() {
            let r = e.step(Action { sleep: 7 }).unwrap();
            total += r.reward;
            result = Some(r);
        }
        let last = result.unwrap();
        assert!(last.done);
        assert_eq!(last.info.day_fi.len(), 1);
        let w = e.world();
        let eval = Evaluator::with_predictor(w.dataset(), w.predictor(), e.episode_span()).unwrap();
        let report = eval.evaluate(e.samples()).unwrap();
        assert!((report.fisher_information - total).abs() < 1e-9);
        assert_eq!(e.samples().len(), 13);
        assert_eq!(e.step(Action { sleep: 1 }), Err(EnvError::EpisodeDone));
    }

    #[test]
    fn dense_rewards_telescope() {
        let mut sparse = env(EnvConfig { episode_days: 2, ..EnvConfig::default() });
        let mut dense = env(EnvConfig { episode_days: 2, reward_mode: RewardMode::DenseDelta, ..EnvConfig::default() });
        sparse.reset(1).unwrap();
        dense.reset(1).unwrap();
        let start_fi = [day_fi(dense.episode.as_ref().unwrap(), 0)];
        let mut sum_sparse = 0.0;
        let mut sum_dense = 0.0;
        let mut day_starts = start_fi.to_vec();
        let mut k = 0;
        while !sparse.is_done() {
            let a = Action { sleep: 3 + (k % 5) };
            let rs = sparse.step(a).unwrap();
            let rd = dense.step(a).unwrap();
            if !rs.info.day_fi.is_empty() && !rs.done {
                // FI of the new day before its first measurement
                let ep = dense.episode.as_ref().unwrap();
                let mut p = ep.posterior.clone();
                if rd.info.sampled {
                    // recompute the baseline from a fresh copy without the last sample
                    p = sparse.window_posterior(ep.start, ep.end);
                    for s in &ep.samples[..ep.samples.len() - 1] {
                        p.observe((s.0 - ep.start) as usize, sparse.world.dataset.get(*s).unwrap());
                    }
                }
                let lo = SLOTS_PER_DAY as usize;
                day_starts.push(fisher_information(&p.variances(lo..2 * lo)).unwrap());
            }
            sum_sparse += rs.reward;
            sum_dense += rd.reward;
            k += 1;
        }
        let expect = sum_sparse - day_starts.iter().sum::<f64>();
        assert!((sum_dense - expect).abs() < 1e-9, "{sum_dense} vs {expect}");
        assert_eq!(sparse.trajectory().len(), k as usize);
    }
}
