use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
    /// Uniform on `[-a, a]`.
    Uniform(f64),
}

#[derive(Debug, Clone)]
enum Param {
    Trainable(Var),
    Frozen(Tensor),
}

impl Param {
    fn tensor(&self) -> Tensor {
        match self {
            Param::Trainable(v) => v.as_tensor().clone(),
            Param::Frozen(t) => t.clone(),
        }
    }
}

/// Named parameters of one model.
///
/// A fresh store initialises parameters on first request. A store built from
/// checkpoint tensors only hands out what it holds and errors on unknown
/// names. Frozen stores hold plain tensors that never receive gradients.
#[derive(Debug, Clone)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
    device: Device,
    dtype: DType,
    rng: ChaCha8Rng,
    loaded: bool,
    frozen: bool,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType, device: Device) -> Self {
        Self {
            params: BTreeMap::new(),
            device,
            dtype,
            rng: ChaCha8Rng::seed_from_u64(seed),
            loaded: false,
            frozen: false,
        }
    }

    /// Store backed by existing tensors (e.g. from a checkpoint).
    pub fn from_tensors(
        tensors: BTreeMap<String, Tensor>,
        dtype: DType,
        device: Device,
        trainable: bool,
    ) -> Result<Self> {
        let mut params = BTreeMap::new();
        for (name, t) in tensors {
            let t = t.to_dtype(dtype)?.to_device(&device)?;
            let p = if trainable {
                Param::Trainable(Var::from_tensor(&t)?)
            } else {
                Param::Frozen(t.detach())
            };
            params.insert(name, p);
        }
        Ok(Self {
            params,
            device,
            dtype,
            rng: ChaCha8Rng::seed_from_u64(0),
            loaded: true,
            frozen: !trainable,
        })
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if let Some(p) = self.params.get(name) {
            let t = p.tensor();
            if t.dims() != shape {
                return Err(Error::Shape(format!(
                    "parameter {name} has shape {:?}, model expects {shape:?}",
                    t.dims()
                )));
            }
            return Ok(t);
        }
        if self.loaded {
            return Err(Error::Validation(format!(
                "parameter {name} missing from checkpoint"
            )));
        }
        let count: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; count],
            Init::Ones => vec![1.0; count],
            Init::Normal(std) => (0..count)
                .map(|_| std * self.rng.sample::<f64, _>(StandardNormal))
                .collect(),
            Init::Uniform(a) => (0..count).map(|_| self.rng.random_range(-a..=a)).collect(),
        };
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let p = if self.frozen {
            Param::Frozen(t)
        } else {
            Param::Trainable(Var::from_tensor(&t)?)
        };
        let out = p.tensor();
        self.params.insert(name.to_string(), p);
        Ok(out)
    }

    /// Trainable variables in name order.
    pub fn vars(&self) -> Vec<Var> {
        self.params
            .values()
            .filter_map(|p| match p {
                Param::Trainable(v) => Some(v.clone()),
                Param::Frozen(_) => None,
            })
            .collect()
    }

    pub fn named_vars(&self) -> Vec<(String, Var)> {
        self.params
            .iter()
            .filter_map(|(n, p)| match p {
                Param::Trainable(v) => Some((n.clone(), v.clone())),
                Param::Frozen(_) => None,
            })
            .collect()
    }

    /// Detached copies of every parameter.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Tensor>> {
        self.params
            .iter()
            .map(|(n, p)| Ok((n.clone(), p.tensor().detach().copy()?)))
            .collect()
    }

    /// Overwrites trainable variables in place from a snapshot.
    pub fn restore(&self, snapshot: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, p) in &self.params {
            if let Param::Trainable(v) = p {
                let src = snapshot.get(name).ok_or_else(|| {
                    Error::Validation(format!("snapshot lacks parameter {name}"))
                })?;
                v.set(src)?;
            }
        }
        Ok(())
    }

    /// Overwrites one trainable parameter.
    pub fn assign(&self, name: &str, value: &Tensor) -> Result<()> {
        match self.params.get(name) {
            Some(Param::Trainable(v)) => Ok(v.set(&value.to_dtype(self.dtype)?)?),
            Some(Param::Frozen(_)) => Err(Error::Validation(format!("parameter {name} is frozen"))),
            None => Err(Error::Validation(format!("unknown parameter {name}"))),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(|p| p.tensor().elem_count()).sum()
    }
}
