//! Joint posterior over a fixed set of query points with exact Gaussian
//! conditioning. Conditioning on one observation costs `O(m²)` for `m`
//! points, independent of how much data the underlying model holds.

use alloc::vec::Vec;

use super::{linalg, GpModel, Matrix, VARIANCE_FLOOR};

#[derive(Debug, Clone)]
pub struct SpanPosterior {
    mean: Vec<f64>,
    /// Latent covariance (observation noise excluded).
    cov: Matrix,
    /// Added to latent variance when reporting predictive variance.
    noise: f64,
    /// Variance of a conditioning observation (noise + jitter).
    obs_noise: f64,
}

impl SpanPosterior {
    pub fn from_model(model: &GpModel, queries: &[Vec<f64>]) -> Self {
        let (mean, cov) = model.predict_joint(queries);
        SpanPosterior {
            mean,
            cov,
            noise: model.params().noise_variance,
            obs_noise: model.observation_noise(),
        }
    }

    pub fn from_parts(mean: Vec<f64>, cov: Matrix, noise: f64, obs_noise: f64) -> Self {
        assert_eq!(mean.len(), cov.dim());
        SpanPosterior { mean, cov, noise, obs_noise }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mean[i]
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn latent_cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn observation_noise(&self) -> f64 {
        self.obs_noise
    }

    /// Predictive variance at point `i`, observation noise included.
    pub fn variance(&self, i: usize) -> f64 {
        (self.cov.get(i, i) + self.noise).max(VARIANCE_FLOOR)
    }

    pub fn variances(&self, range: core::ops::Range<usize>) -> Vec<f64> {
        range.map(|i| self.variance(i)).collect()
    }

    /// Conditions on observing `value` at point `i`.
    pub fn observe(&mut self, i: usize, value: f64) {
        let m = self.len();
        let k: Vec<f64> = self.cov.row(i).to_vec();
        let s = k[i] + self.obs_noise;
        let gain = (value - self.mean[i]) / s;
        for (mu, ki) in self.mean.iter_mut().zip(&k) {
            *mu += ki * gain;
        }
        for r in 0..m {
            let f = k[r] / s;
            if f == 0.0 {
                continue;
            }
            for (c, kc) in self.cov.row_mut(r).iter_mut().zip(&k) {
                *c -= f * kc;
            }
        }
    }

    /// Mean precision over `range` after hypothetically observing point `i`,
    /// without mutating the posterior.
    pub fn fisher_information_if_observed(&self, i: usize, range: core::ops::Range<usize>) -> f64 {
        let k = self.cov.row(i);
        let s = k[i] + self.obs_noise;
        let len = range.len() as f64;
        range
            .map(|t| {
                let v = (self.cov.get(t, t) - k[t] * k[t] / s + self.noise).max(VARIANCE_FLOOR);
                1.0 / v
            })
            .sum::<f64>()
            / len
    }

    /// Independent batch route: mean and predictive variance over `targets`
    /// after conditioning on all `(index, value)` observations at once.
    pub fn batch_condition(&self, observed: &[(usize, f64)], targets: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let o = observed.len();
        if o == 0 {
            let mean = targets.iter().map(|&t| self.mean[t]).collect();
            let var = targets.iter().map(|&t| self.variance(t)).collect();
            return (mean, var);
        }
        let mut a = Matrix::from_fn(o, |p, q| {
            self.cov.get(observed[p].0, observed[q].0) + if p == q { self.obs_noise } else { 0.0 }
        });
        linalg::cholesky_in_place(&mut a).expect("observation covariance is positive definite");
        let mut resid: Vec<f64> = observed.iter().map(|&(i, y)| y - self.mean[i]).collect();
        linalg::cholesky_solve(&a, &mut resid);
        let mut mean = Vec::with_capacity(targets.len());
        let mut var = Vec::with_capacity(targets.len());
        for &t in targets {
            let mut k: Vec<f64> = observed.iter().map(|&(i, _)| self.cov.get(t, i)).collect();
            mean.push(self.mean[t] + linalg::dot(&k, &resid));
            linalg::forward_solve(&a, &mut k);
            var.push((self.cov.get(t, t) - linalg::dot(&k, &k) + self.noise).max(VARIANCE_FLOOR));
        }
        (mean, var)
    }
}
