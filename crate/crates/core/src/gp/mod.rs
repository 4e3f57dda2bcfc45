//! Exact Gaussian-process regression with a Matern + periodic kernel.

pub mod inputs;
pub mod kernel;
pub mod linalg;
pub mod optimize;
pub mod posterior;
pub mod predictor;

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;
use core::f64::consts::PI;


pub use inputs::InputEncoder;
pub use kernel::{
    combined_kernel, matern_kernel, periodic_kernel, KernelParams, MaternParams, PeriodicParams,
    Smoothness,
};
pub use linalg::Matrix;
pub use optimize::{optimize_hyperparameters, HyperMask, OptimizeOutcome};
pub use posterior::SpanPosterior;
pub use predictor::SlotPredictor;

/// Smallest reported predictive variance.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Default cap on the number of conditioning points (two weeks of slots).
pub const DEFAULT_WINDOW: usize = 1344;

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GpError {
    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("inputs ({inputs}) and targets ({targets}) differ in length")]
    ShapeMismatch { inputs: usize, targets: usize },
    #[error("no training points")]
    Empty,
    #[error("kernel hyperparameters out of domain")]
    InvalidParams,
}

/// Predictive mean and variance (observation noise included) per query.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// A conditioned GP: training set, factorization and weights.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    prior_mean: f64,
    params: KernelParams,
    jitter: f64,
    chol: Matrix,
    alpha: Vec<f64>,
    window: Option<usize>,
}

fn gram(inputs: &[Vec<f64>], params: &KernelParams) -> Matrix {
    let n = inputs.len();
    let mut k = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let v = combined_kernel(&inputs[i], &inputs[j], params);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// Factor `K + (noise + jitter) I`, escalating jitter tenfold from
/// `1e-8 * mean(diag K)` up to `1e-2 * mean(diag K)`.
fn factor_with_jitter(k: &Matrix, noise: f64) -> Result<(Matrix, f64), GpError> {
    let n = k.dim();
    let scale = k.diagonal().iter().sum::<f64>() / n as f64;
    let mut rel = JITTER_START;
    loop {
        let jitter = rel * scale;
        let mut a = k.clone();
        for i in 0..n {
            a.set(i, i, a.get(i, i) + noise + jitter);
        }
        if linalg::cholesky_in_place(&mut a).is_ok() {
            return Ok((a, jitter));
        }
        if rel >= JITTER_MAX * (1.0 - 1e-9) {
            return Err(GpError::NotPositiveDefinite { jitter });
        }
        rel *= 10.0;
    }
}

impl GpModel {
    /// Zero-mean fit.
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], params: &KernelParams) -> Result<Self, GpError> {
        Self::fit_with_mean(inputs, targets, params, 0.0)
    }

    /// Fit with a constant prior mean subtracted from the targets.
    pub fn fit_with_mean(
        inputs: &[Vec<f64>],
        targets: &[f64],
        params: &KernelParams,
        prior_mean: f64,
    ) -> Result<Self, GpError> {
        if inputs.len() != targets.len() {
            return Err(GpError::ShapeMismatch { inputs: inputs.len(), targets: targets.len() });
        }
        if inputs.is_empty() {
            return Err(GpError::Empty);
        }
        if !params.is_valid() {
            return Err(GpError::InvalidParams);
        }
        let k = gram(inputs, params);
        let (chol, jitter) = factor_with_jitter(&k, params.noise_variance)?;
        let mut model = GpModel {
            inputs: inputs.to_vec(),
            targets: targets.to_vec(),
            prior_mean,
            params: *params,
            jitter,
            chol,
            alpha: Vec::new(),
            window: None,
        };
        model.refresh_alpha();
        Ok(model)
    }

    /// Caps the conditioning set; `condition` evicts oldest points beyond it.
    pub fn with_window(mut self, window: Option<usize>) -> Self {
        self.window = window;
        self
    }

    fn refresh_alpha(&mut self) {
        let mut a: Vec<f64> = self.targets.iter().map(|y| y - self.prior_mean).collect();
        linalg::cholesky_solve(&self.chol, &mut a);
        self.alpha = a;
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Noise variance applied to each conditioning observation
    /// (`noise_variance + jitter`).
    pub fn observation_noise(&self) -> f64 {
        self.params.noise_variance + self.jitter
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn cholesky(&self) -> &Matrix {
        &self.chol
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Model conditioned on the first `k` training points only. The leading
    /// block of the factor is the factor of the leading block.
    pub fn prefix(&self, k: usize) -> Result<Self, GpError> {
        if k == 0 {
            return Err(GpError::Empty);
        }
        let k = k.min(self.len());
        let mut model = GpModel {
            inputs: self.inputs[..k].to_vec(),
            targets: self.targets[..k].to_vec(),
            prior_mean: self.prior_mean,
            params: self.params,
            jitter: self.jitter,
            chol: self.chol.leading(k),
            alpha: Vec::new(),
            window: self.window,
        };
        model.refresh_alpha();
        Ok(model)
    }

    fn cross_cov(&self, x: &[f64]) -> Vec<f64> {
        self.inputs.iter().map(|xi| combined_kernel(xi, x, &self.params)).collect()
    }

    pub fn predict(&self, queries: &[Vec<f64>]) -> Prediction {
        let mut mean = Vec::with_capacity(queries.len());
        let mut variance = Vec::with_capacity(queries.len());
        for q in queries {
            let mut v = self.cross_cov(q);
            mean.push(self.prior_mean + linalg::dot(&v, &self.alpha));
            linalg::forward_solve(&self.chol, &mut v);
            let prior = combined_kernel(q, q, &self.params) + self.params.noise_variance;
            variance.push((prior - linalg::dot(&v, &v)).max(VARIANCE_FLOOR));
        }
        Prediction { mean, variance }
    }

    /// Posterior mean and full latent covariance (no observation noise) at
    /// the queries.
    pub fn predict_joint(&self, queries: &[Vec<f64>]) -> (Vec<f64>, Matrix) {
        let m = queries.len();
        let mut mean = Vec::with_capacity(m);
        let mut solved: Vec<Vec<f64>> = Vec::with_capacity(m);
        for q in queries {
            let mut v = self.cross_cov(q);
            mean.push(self.prior_mean + linalg::dot(&v, &self.alpha));
            linalg::forward_solve(&self.chol, &mut v);
            solved.push(v);
        }
        let mut cov = Matrix::zeros(m);
        for i in 0..m {
            for j in 0..=i {
                let c = combined_kernel(&queries[i], &queries[j], &self.params)
                    - linalg::dot(&solved[i], &solved[j]);
                cov.set(i, j, c);
                cov.set(j, i, c);
            }
        }
        (mean, cov)
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let quad: f64 = self
            .targets
            .iter()
            .zip(&self.alpha)
            .map(|(y, a)| (y - self.prior_mean) * a)
            .sum();
        let log_det_half: f64 = (0..self.len()).map(|i| self.chol.get(i, i).ln()).sum();
        -0.5 * quad - log_det_half - 0.5 * n * (2.0 * PI).ln()
    }

    /// Adds one observation at unchanged hyperparameters.
    ///
    /// The factor is extended by one row; when the new pivot is not
    /// positive at the current jitter the augmented set is refitted from
    /// scratch. Beyond the window the oldest point is dropped by a rank-one
    /// update of the trailing factor.
    pub fn condition(&self, x: &[f64], y: f64) -> Result<Self, GpError> {
        let n = self.len();
        let mut row = self.cross_cov(x);
        linalg::forward_solve(&self.chol, &mut row);
        let pivot = combined_kernel(x, x, &self.params) + self.observation_noise()
            - linalg::dot(&row, &row);
        let mut next = if pivot > 1e-12 * self.params.signal_variance() {
            let mut chol = self.chol.grown();
            chol.row_mut(n)[..n].copy_from_slice(&row);
            chol.set(n, n, pivot.sqrt());
            let mut inputs = self.inputs.clone();
            inputs.push(x.to_vec());
            let mut targets = self.targets.clone();
            targets.push(y);
            GpModel {
                inputs,
                targets,
                prior_mean: self.prior_mean,
                params: self.params,
                jitter: self.jitter,
                chol,
                alpha: Vec::new(),
                window: self.window,
            }
        } else {
            let mut inputs = self.inputs.clone();
            inputs.push(x.to_vec());
            let mut targets = self.targets.clone();
            targets.push(y);
            let refit = GpModel::fit_with_mean(&inputs, &targets, &self.params, self.prior_mean)?;
            refit.with_window(self.window)
        };
        if let Some(w) = self.window {
            while next.len() > w.max(1) {
                next.evict_oldest();
            }
        }
        next.refresh_alpha();
        Ok(next)
    }

    fn evict_oldest(&mut self) {
        let n = self.len();
        let mut col: Vec<f64> = (1..n).map(|i| self.chol.get(i, 0)).collect();
        let mut trailing = Matrix::zeros(n - 1);
        for i in 1..n {
            trailing.row_mut(i - 1)[..i].copy_from_slice(&self.chol.row(i)[1..=i]);
        }
        linalg::rank_one_update(&mut trailing, &mut col);
        self.chol = trailing;
        self.inputs.remove(0);
        self.targets.remove(0);
    }
}

/// Log marginal likelihood of zero-mean data under `params`.
pub fn log_marginal_likelihood(
    inputs: &[Vec<f64>],
    targets: &[f64],
    params: &KernelParams,
) -> Result<f64, GpError> {
    GpModel::fit(inputs, targets, params).map(|m| m.log_marginal_likelihood())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit_params() -> KernelParams {
        KernelParams {
            matern: MaternParams { variance: 1.0, length_scale: 0.5, smoothness: Smoothness::ThreeHalves },
            periodic: PeriodicParams { variance: 1.0, length_scale: 1.0, period: 1.0 },
            noise_variance: 0.0,
        }
    }

    #[test]
    fn single_point_factor() {
        let m = GpModel::fit(&[vec![0.3]], &[4.0], &unit_params()).unwrap();
        let l = m.cholesky().get(0, 0);
        assert!((l - 2.0f64.sqrt()).abs() < 1e-7);
        assert!((m.alpha()[0] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn interpolates_training_points_without_noise() {
        let xs: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 0.17]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin()).collect();
        let m = GpModel::fit(&xs, &ys, &unit_params()).unwrap();
        let p = m.predict(&xs);
        for i in 0..xs.len() {
            assert!((p.mean[i] - ys[i]).abs() < 1e-6);
            assert!(p.variance[i] <= m.jitter() + 1e-6);
        }
    }

    #[test]
    fn duplicate_inputs_resolved_by_jitter() {
        let xs = vec![vec![0.5], vec![0.5], vec![0.9]];
        let m = GpModel::fit(&xs, &[1.0, 1.0, 2.0], &unit_params()).unwrap();
        assert!(m.jitter() > 0.0);
    }

    #[test]
    fn shape_and_empty_errors() {
        let p = unit_params();
        assert_eq!(
            GpModel::fit(&[vec![0.0]], &[1.0, 2.0], &p).err(),
            Some(GpError::ShapeMismatch { inputs: 1, targets: 2 })
        );
        assert_eq!(GpModel::fit(&[], &[], &p).err(), Some(GpError::Empty));
    }

    #[test]
    fn zero_targets_likelihood_is_log_det_only() {
        let xs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.3]).collect();
        let m = GpModel::fit(&xs, &[0.0; 5], &unit_params()).unwrap();
        let logdet: f64 = (0..5).map(|i| m.cholesky().get(i, i).ln()).sum();
        let expected = -logdet - 2.5 * (2.0 * PI).ln();
        assert!((m.log_marginal_likelihood() - expected).abs() < 1e-12);
    }

    #[test]
    fn prefix_equals_fit_on_prefix() {
        let mut p = unit_params();
        p.noise_variance = 0.1;
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.21]).collect();
        let ys: Vec<f64> = (0..10).map(|i| i as f64 * 0.5 - 2.0).collect();
        let full = GpModel::fit_with_mean(&xs, &ys, &p, 1.0).unwrap();
        let pre = full.prefix(6).unwrap();
        let direct = GpModel::fit_with_mean(&xs[..6], &ys[..6], &p, 1.0).unwrap();
        let q = [vec![0.33], vec![1.7]];
        let (a, b) = (pre.predict(&q), direct.predict(&q));
        for i in 0..2 {
            assert!((a.mean[i] - b.mean[i]).abs() < 1e-10);
            assert!((a.variance[i] - b.variance[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn window_evicts_oldest() {
        let mut p = unit_params();
        p.noise_variance = 0.05;
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.3]).collect();
        let ys: Vec<f64> = (0..6).map(|i| (i as f64).cos()).collect();
        let m = GpModel::fit(&xs[..5], &ys[..5], &p).unwrap().with_window(Some(5));
        let c = m.condition(&xs[5], ys[5]).unwrap();
        assert_eq!(c.len(), 5);
        let direct = GpModel::fit(&xs[1..], &ys[1..], &p).unwrap();
        let q = [vec![0.1], vec![1.05], vec![2.2]];
        let (a, b) = (c.predict(&q), direct.predict(&q));
        for i in 0..3 {
            assert!((a.mean[i] - b.mean[i]).abs() < 1e-9);
            assert!((a.variance[i] - b.variance[i]).abs() < 1e-9);
        }
    }
}
