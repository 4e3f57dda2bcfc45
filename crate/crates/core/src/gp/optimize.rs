//! Derivative-free marginal-likelihood maximization.
//!
//! Positive hyperparameters are searched in log space: a multi-start random
//! phase around the initial guess, then cyclic golden-section line searches
//! along each free coordinate with a shrinking bracket. Every likelihood
//! evaluation counts against the budget.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GpModel, KernelParams};

const NUM_COORDS: usize = 6;
const LOG_NOISE_FLOOR: f64 = -13.815510557964274; // ln(1e-6)
const INV_PHI: f64 = 0.6180339887498949;

/// Which hyperparameters the search may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperMask {
    pub matern_variance: bool,
    pub matern_length_scale: bool,
    pub periodic_variance: bool,
    pub periodic_length_scale: bool,
    pub period: bool,
    pub noise_variance: bool,
}

impl HyperMask {
    pub fn all() -> Self {
        HyperMask {
            matern_variance: true,
            matern_length_scale: true,
            periodic_variance: true,
            periodic_length_scale: true,
            period: true,
            noise_variance: true,
        }
    }

    /// Everything except the period, which is usually known (daily/weekly).
    pub fn fixed_period() -> Self {
        HyperMask { period: false, ..Self::all() }
    }

    pub fn none() -> Self {
        HyperMask {
            matern_variance: false,
            matern_length_scale: false,
            periodic_variance: false,
            periodic_length_scale: false,
            period: false,
            noise_variance: false,
        }
    }

    fn flags(&self) -> [bool; NUM_COORDS] {
        [
            self.matern_variance,
            self.matern_length_scale,
            self.periodic_variance,
            self.periodic_length_scale,
            self.period,
            self.noise_variance,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOutcome {
    pub params: KernelParams,
    pub log_likelihood: f64,
    pub initial_log_likelihood: f64,
    pub evaluations: usize,
}

fn to_log(p: &KernelParams) -> [f64; NUM_COORDS] {
    let noise = if p.noise_variance > 0.0 { p.noise_variance.ln() } else { LOG_NOISE_FLOOR };
    [
        p.matern.variance.ln(),
        p.matern.length_scale.ln(),
        p.periodic.variance.ln(),
        p.periodic.length_scale.ln(),
        p.periodic.period.ln(),
        noise,
    ]
}

fn from_log(template: &KernelParams, z: &[f64; NUM_COORDS]) -> KernelParams {
    let mut p = *template;
    p.matern.variance = z[0].exp();
    p.matern.length_scale = z[1].exp();
    p.periodic.variance = z[2].exp();
    p.periodic.length_scale = z[3].exp();
    p.periodic.period = z[4].exp();
    p.noise_variance = z[5].exp();
    p
}

struct Objective<'a> {
    inputs: &'a [Vec<f64>],
    targets: &'a [f64],
    prior_mean: f64,
    template: KernelParams,
    evaluations: usize,
    budget: usize,
}

impl Objective<'_> {
    fn exhausted(&self) -> bool {
        self.evaluations >= self.budget
    }

    fn eval(&mut self, z: &[f64; NUM_COORDS]) -> f64 {
        self.evaluations += 1;
        let p = from_log(&self.template, z);
        match GpModel::fit_with_mean(self.inputs, self.targets, &p, self.prior_mean) {
            Ok(m) => {
                let v = m.log_marginal_likelihood();
                if v.is_finite() {
                    v
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Maximizes the log marginal likelihood of `targets` (centered on
/// `prior_mean`) starting from `init`. Never returns parameters worse than
/// `init`.
pub fn optimize_hyperparameters(
    inputs: &[Vec<f64>],
    targets: &[f64],
    prior_mean: f64,
    init: &KernelParams,
    mask: HyperMask,
    budget: usize,
    seed: u64,
) -> OptimizeOutcome {
    let mut obj = Objective {
        inputs,
        targets,
        prior_mean,
        template: *init,
        evaluations: 0,
        budget: budget.max(1),
    };
    let free: Vec<usize> = mask.flags().iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i).collect();

    let z0 = to_log(init);
    let init_ll = obj.eval(&z0);
    let mut best_z = z0;
    let mut best_ll = init_ll;
    if free.is_empty() {
        return OptimizeOutcome {
            params: *init,
            log_likelihood: init_ll,
            initial_log_likelihood: init_ll,
            evaluations: obj.evaluations,
        };
    }

    // Random phase: a third of the budget, uniform within +-ln(10) per coordinate.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = 10.0f64.ln();
    let random_evals = obj.budget / 3;
    for _ in 0..random_evals {
        if obj.exhausted() {
            break;
        }
        let mut z = z0;
        for &c in &free {
            z[c] += rng.random_range(-spread..spread);
        }
        let ll = obj.eval(&z);
        if ll > best_ll {
            best_ll = ll;
            best_z = z;
        }
    }

    // Coordinate refinement with golden-section search.
    let mut half_width = spread;
    let steps_per_line = 8;
    while !obj.exhausted() {
        let mut improved = false;
        for &c in &free {
            if obj.exhausted() {
                break;
            }
            let (z, ll) = golden_line(&mut obj, &best_z, c, half_width, steps_per_line);
            if ll > best_ll {
                best_ll = ll;
                best_z = z;
                improved = true;
            }
        }
        half_width *= if improved { 0.7 } else { 0.4 };
        if half_width < 1e-4 {
            break;
        }
    }

    let params = if best_ll > init_ll { from_log(init, &best_z) } else { *init };
    OptimizeOutcome {
        params,
        log_likelihood: best_ll.max(init_ll),
        initial_log_likelihood: init_ll,
        evaluations: obj.evaluations,
    }
}

fn golden_line(
    obj: &mut Objective<'_>,
    start: &[f64; NUM_COORDS],
    coord: usize,
    half_width: f64,
    steps: usize,
) -> ([f64; NUM_COORDS], f64) {
    let at = |t: f64| {
        let mut z = *start;
        z[coord] = t;
        z
    };
    let (mut a, mut b) = (start[coord] - half_width, start[coord] + half_width);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = obj.eval(&at(c));
    if obj.exhausted() {
        return (at(c), fc);
    }
    let mut fd = obj.eval(&at(d));
    let mut best = if fc >= fd { (at(c), fc) } else { (at(d), fd) };
    for _ in 0..steps {
        if obj.exhausted() {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = obj.eval(&at(c));
            if fc > best.1 {
                best = (at(c), fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = obj.eval(&at(d));
            if fd > best.1 {
                best = (at(d), fd);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{MaternParams, PeriodicParams, Smoothness};
    use alloc::vec;

    #[test]
    fn never_worse_than_init() {
        let xs: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 0.1]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (2.0 * x[0]).sin() + 0.1 * (7.0 * x[0]).cos()).collect();
        let init = KernelParams {
            matern: MaternParams { variance: 1.0, length_scale: 0.2, smoothness: Smoothness::ThreeHalves },
            periodic: PeriodicParams { variance: 0.5, length_scale: 1.0, period: 3.0 },
            noise_variance: 0.1,
        };
        let out = optimize_hyperparameters(&xs, &ys, 0.0, &init, HyperMask::all(), 40, 1);
        assert!(out.log_likelihood >= out.initial_log_likelihood);
        assert!(out.evaluations <= 40);
        let again = optimize_hyperparameters(&xs, &ys, 0.0, &init, HyperMask::all(), 40, 1);
        assert_eq!(out.params, again.params);
    }

    #[test]
    fn empty_mask_returns_init() {
        let xs = vec![vec![0.0], vec![1.0]];
        let init = KernelParams::default();
        let out = optimize_hyperparameters(&xs, &[1.0, 2.0], 0.0, &init, HyperMask::none(), 10, 3);
        assert_eq!(out.params, init);
        assert_eq!(out.evaluations, 1);
    }
}
