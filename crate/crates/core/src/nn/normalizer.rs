use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::MotionSequence;

const STD_FLOOR: f64 = 1e-2;

/// Per-feature affine standardisation fitted on training frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn fit<'a>(motions: impl IntoIterator<Item = &'a MotionSequence>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for m in motions {
            if sum.is_empty() {
                sum = vec![0.0; m.dim()];
                sq = vec![0.0; m.dim()];
            }
            if m.dim() != sum.len() {
                return Err(Error::Shape("mixed feature dimensions".into()));
            }
            for row in m.frames().rows() {
                for (k, v) in row.iter().enumerate() {
                    sum[k] += v;
                    sq[k] += v * v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Validation("cannot fit normaliser on no frames".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n - m * m).max(0.0).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn tensors(&self, dtype: DType, device: &Device) -> Result<(Tensor, Tensor)> {
        let d = self.dim();
        let mean = Tensor::from_vec(self.mean.clone(), (1, 1, d), device)?.to_dtype(dtype)?;
        let std = Tensor::from_vec(self.std.clone(), (1, 1, d), device)?.to_dtype(dtype)?;
        Ok((mean, std))
    }

    /// `(x - mean) / std` on a `(B, L, D)` tensor.
    pub fn normalize(&self, x: &Tensor) -> Result<Tensor> {
        let (mean, std) = self.tensors(x.dtype(), x.device())?;
        Ok(x.broadcast_sub(&mean)?.broadcast_div(&std)?)
    }

    /// `x * std + mean` on a `(B, L, D)` tensor; differentiable in `x`.
    pub fn denormalize(&self, x: &Tensor) -> Result<Tensor> {
        let (mean, std) = self.tensors(x.dtype(), x.device())?;
        Ok(x.broadcast_mul(&std)?.broadcast_add(&mean)?)
    }
}
