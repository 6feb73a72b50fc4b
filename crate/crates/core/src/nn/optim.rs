use candle_core::{Tensor, Var};
use candle_nn::{AdamW, Optimizer as _, ParamsAdamW};

use crate::error::{Error, Result};

/// AdamW with optional global-norm gradient clipping.
pub struct Optimizer {
    inner: AdamW,
    vars: Vec<Var>,
    clip: Option<f64>,
}

impl Optimizer {
    pub fn new(vars: Vec<Var>, lr: f64, weight_decay: f64, clip: Option<f64>) -> Result<Self> {
        let params = ParamsAdamW {
            lr,
            weight_decay,
            ..ParamsAdamW::default()
        };
        Ok(Self {
            inner: AdamW::new(vars.clone(), params)?,
            vars,
            clip,
        })
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.inner.set_learning_rate(lr);
    }

    /// Backpropagates `loss`, clips and applies one update. Returns the
    /// pre-clip global gradient norm.
    pub fn step(&mut self, loss: &Tensor) -> Result<f64> {
        let mut grads = loss.backward()?;
        let mut sq = 0.0;
        for v in &self.vars {
            if let Some(g) = grads.get(v.as_tensor()) {
                sq += g.sqr()?.sum_all()?.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
            }
        }
        let norm = sq.sqrt();
        if !norm.is_finite() {
            return Err(Error::Numerical(format!("gradient norm is {norm}")));
        }
        if let Some(max) = self.clip {
            if norm > max {
                let scale = max / norm;
                for v in &self.vars {
                    if let Some(g) = grads.remove(v.as_tensor()) {
                        grads.insert(v.as_tensor(), (g * scale)?);
                    }
                }
            }
        }
        self.inner.step(&grads)?;
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[test]
    fn minimises_a_quadratic() {
        let v = Var::from_tensor(&Tensor::new(&[3.0f64, -2.0], &Device::Cpu).unwrap()).unwrap();
        let mut opt = Optimizer::new(vec![v.clone()], 0.1, 0.0, Some(1.0)).unwrap();
        for _ in 0..300 {
            let loss = v.as_tensor().sqr().unwrap().sum_all().unwrap();
            opt.step(&loss).unwrap();
        }
        let x = v.as_tensor().to_dtype(DType::F64).unwrap().to_vec1::<f64>().unwrap();
        assert!(x.iter().all(|x| x.abs() < 1e-2), "{x:?}");
    }
}
