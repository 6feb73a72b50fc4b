use candle_core::Tensor;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{bail_shape, bail_validation, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 2e-2,
        }
    }
}

/// Linear-beta noise schedule. Timesteps are 1-based; `alpha_bar(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn new(config: &ScheduleConfig) -> Result<Self> {
        let t = config.steps;
        if t == 0 {
            bail_validation!("schedule needs at least one step");
        }
        let betas: Vec<f64> = (0..t)
            .map(|i| {
                let frac = if t == 1 { 1.0 } else { i as f64 / (t - 1) as f64 };
                config.beta_start + frac * (config.beta_end - config.beta_start)
            })
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            bail_validation!("schedule needs at least one step");
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            bail_validation!("beta {b} outside (0, 1)");
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let last = *alpha_bars.last().unwrap();
        if last >= 0.01 {
            bail_validation!("final alpha_bar {last:.4} must fall below 0.01");
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            bail_validation!("timestep {t} outside 1..={}", self.steps());
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// `sqrt(ab_t) x0 + sqrt(1 - ab_t) eps` for one sequence.
    pub fn q_sample(&self, x0: ArrayView2<f64>, t: usize, noise: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(t)?;
        if x0.dim() != noise.dim() {
            bail_shape!("noise {:?} does not match x0 {:?}", noise.dim(), x0.dim());
        }
        let ab = self.alpha_bar(t);
        Ok(&x0 * ab.sqrt() + &noise * (1.0 - ab).sqrt())
    }

    /// Batched forward noising of `(B, L, D)` tensors with one timestep per item.
    pub fn q_sample_tensor(&self, x0: &Tensor, t: &[usize], noise: &Tensor) -> Result<Tensor> {
        let (b, _, _) = x0.dims3()?;
        if t.len() != b || x0.dims() != noise.dims() {
            bail_shape!("q_sample batch mismatch");
        }
        for &ti in t {
            self.check(ti)?;
        }
        let (signal, sigma) = self.coefficients(t, x0)?;
        Ok((x0.broadcast_mul(&signal)? + noise.broadcast_mul(&sigma)?)?)
    }

    /// `(sqrt(ab_t), sqrt(1 - ab_t))` as `(B, 1, 1)` tensors shaped like `like`.
    pub(crate) fn coefficients(&self, t: &[usize], like: &Tensor) -> Result<(Tensor, Tensor)> {
        let signal: Vec<f64> = t.iter().map(|&ti| self.alpha_bar(ti).sqrt()).collect();
        let sigma: Vec<f64> = t.iter().map(|&ti| (1.0 - self.alpha_bar(ti)).sqrt()).collect();
        let mk = |v: Vec<f64>| -> Result<Tensor> {
            Ok(Tensor::from_vec(v, (t.len(), 1, 1), like.device())?.to_dtype(like.dtype())?)
        };
        Ok((mk(signal)?, mk(sigma)?))
    }
}
