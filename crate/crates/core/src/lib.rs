//! Information-driven adaptive sensing: a Gaussian-process predictor of a
//! periodic signal on a 15-minute slot grid, a budget-constrained sensing
//! environment rewarded by mean predictive precision (Fisher information),
//! baseline schedulers, and a PPO learner for sleep-duration policies.
//!
//! The crate is `no_std` and only needs an allocator.

#![no_std]

extern crate alloc;

pub mod env;
pub mod evaluation;
pub mod gp;
pub mod nn;
pub mod policies;
pub mod ppo;
pub mod timeseries;
