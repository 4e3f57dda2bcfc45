//! Matern, periodic and composite covariance functions.
//!
//! A kernel input is a slice whose first component is the time coordinate
//! in days. The periodic term only looks at that component; the Matern term
//! uses the Euclidean distance over the whole slice.

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use core::f64::consts::PI;

/// Closed-form Matern smoothness values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "3/2")]
    ThreeHalves,
    #[serde(rename = "5/2")]
    FiveHalves,
}

impl Smoothness {
    pub fn nu(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaternParams {
    pub variance: f64,
    pub length_scale: f64,
    pub smoothness: Smoothness,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicParams {
    pub variance: f64,
    pub length_scale: f64,
    pub period: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub matern: MaternParams,
    pub periodic: PeriodicParams,
    pub noise_variance: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            matern: MaternParams {
                variance: 4.0,
                length_scale: 0.05,
                smoothness: Smoothness::ThreeHalves,
            },
            periodic: PeriodicParams { variance: 50.0, length_scale: 0.1, period: 7.0 },
            noise_variance: 1.0,
        }
    }
}

impl KernelParams {
    /// True when every hyperparameter is finite and in its domain.
    pub fn is_valid(&self) -> bool {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        pos(self.matern.variance)
            && pos(self.matern.length_scale)
            && pos(self.periodic.variance)
            && pos(self.periodic.length_scale)
            && pos(self.periodic.period)
            && self.noise_variance.is_finite()
            && self.noise_variance >= 0.0
    }

    /// Prior variance `k(x, x)` of the latent function.
    pub fn signal_variance(&self) -> f64 {
        self.matern.variance + self.periodic.variance
    }
}

fn euclidean(xi: &[f64], xj: &[f64]) -> f64 {
    xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub fn matern_from_distance(d: f64, p: &MaternParams) -> f64 {
    let r = d / p.length_scale;
    match p.smoothness {
        Smoothness::Half => p.variance * (-r).exp(),
        Smoothness::ThreeHalves => {
            let s = 3.0f64.sqrt() * r;
            p.variance * (1.0 + s) * (-s).exp()
        }
        Smoothness::FiveHalves => {
            let s = 5.0f64.sqrt() * r;
            p.variance * (1.0 + s + s * s / 3.0) * (-s).exp()
        }
    }
}

pub fn periodic_from_distance(d: f64, p: &PeriodicParams) -> f64 {
    let s = (PI * d / p.period).sin();
    p.variance * (-2.0 * s * s / (p.length_scale * p.length_scale)).exp()
}

pub fn matern_kernel(xi: &[f64], xj: &[f64], p: &MaternParams) -> f64 {
    matern_from_distance(euclidean(xi, xj), p)
}

pub fn periodic_kernel(xi: &[f64], xj: &[f64], p: &PeriodicParams) -> f64 {
    periodic_from_distance((xi[0] - xj[0]).abs(), p)
}

/// Matern over the full input plus periodic over the time coordinate.
pub fn combined_kernel(xi: &[f64], xj: &[f64], p: &KernelParams) -> f64 {
    matern_kernel(xi, xj, &p.matern) + periodic_kernel(xi, xj, &p.periodic)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matern(nu: Smoothness) -> MaternParams {
        MaternParams { variance: 1.0, length_scale: 1.0, smoothness: nu }
    }

    #[test]
    fn zero_distance_gives_variance() {
        for nu in [Smoothness::Half, Smoothness::ThreeHalves, Smoothness::FiveHalves] {
            let p = MaternParams { variance: 2.5, ..matern(nu) };
            assert!((matern_kernel(&[0.3, 1.0], &[0.3, 1.0], &p) - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_case_at_unit_distance() {
        let v = matern_kernel(&[0.0], &[1.0], &matern(Smoothness::Half));
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
        assert!((v - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn periodic_spot_values() {
        let p = PeriodicParams { variance: 1.0, length_scale: 1.0, period: 2.0 };
        assert!((periodic_kernel(&[0.0], &[0.0], &p) - 1.0).abs() < 1e-12);
        assert!((periodic_kernel(&[0.0], &[2.0], &p) - 1.0).abs() < 1e-12);
        assert!((periodic_kernel(&[0.0], &[1.0], &p) - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn periodic_ignores_non_time_components() {
        let p = PeriodicParams { variance: 1.0, length_scale: 0.7, period: 1.0 };
        assert_eq!(periodic_kernel(&[0.2, 5.0], &[0.4, -3.0], &p), periodic_kernel(&[0.2], &[0.4], &p));
    }

    #[test]
    fn combined_is_bounded_by_sum_of_variances() {
        let p = KernelParams::default();
        let bound = p.signal_variance();
        assert!((combined_kernel(&[1.0, 0.0], &[1.0, 0.0], &p) - bound).abs() < 1e-12);
        for k in 0..50 {
            let t = k as f64 * 0.137;
            assert!(combined_kernel(&[0.0, 0.0], &[t, 0.5], &p) <= bound + 1e-12);
        }
    }
}
