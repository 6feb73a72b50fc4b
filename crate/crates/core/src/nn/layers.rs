use candle_core::{Tensor, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Init, ParamStore};
use crate::error::Result;

/// Forward-pass context. Dropout is active only when a training RNG is present.
pub struct Ctx {
    rng: Option<ChaCha8Rng>,
}

impl Ctx {
    pub fn eval() -> Self {
        Self { rng: None }
    }

    pub fn train(seed: u64) -> Self {
        Self {
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn is_train(&self) -> bool {
        self.rng.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct Dropout {
    p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        Self { p }
    }

    pub fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let Some(rng) = ctx.rng.as_mut() else {
            return Ok(x.clone());
        };
        if self.p <= 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 / (1.0 - self.p);
        let mask: Vec<f32> = (0..x.elem_count())
            .map(|_| if rng.random::<f64>() < self.p { 0.0 } else { keep as f32 })
            .collect();
        let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
        Ok((x * mask)?)
    }
}

/// `y = x W + b` with `W` stored as `(in, out)`.
#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Option<Tensor>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize) -> Result<Self> {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = store.get(&format!("{name}.weight"), &[input, output], Init::Uniform(bound))?;
        let bias = store.get(&format!("{name}.bias"), &[output], Init::Zeros)?;
        Ok(Self {
            weight,
            bias: Some(bias),
        })
    }

    pub fn no_bias(store: &mut ParamStore, name: &str, input: usize, output: usize) -> Result<Self> {
        let bound = 1.0 / (input as f64).sqrt();
        let weight = store.get(&format!("{name}.weight"), &[input, output], Init::Uniform(bound))?;
        Ok(Self { weight, bias: None })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> Option<&Tensor> {
        self.bias.as_ref()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let input = *dims.last().expect("non-scalar input");
        let rows = x.elem_count() / input;
        let y = x.reshape((rows, input))?.matmul(&self.weight)?;
        let y = match &self.bias {
            Some(b) => y.broadcast_add(b)?,
            None => y,
        };
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = self.weight.dim(1)?;
        Ok(y.reshape(out_dims)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.get(&format!("{name}.gamma"), &[dim], Init::Ones)?,
            beta: store.get(&format!("{name}.beta"), &[dim], Init::Zeros)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
    head_dim: usize,
    dropout: Dropout,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        dropout: f64,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(crate::Error::Validation(format!(
                "latent dim {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), dim, dim)?,
            k: Linear::new(store, &format!("{name}.k"), dim, dim)?,
            v: Linear::new(store, &format!("{name}.v"), dim, dim)?,
            o: Linear::new(store, &format!("{name}.o"), dim, dim)?,
            heads,
            head_dim: dim / heads,
            dropout: Dropout::new(dropout),
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, l, _) = x.dims3()?;
        Ok(x
            .reshape((b, l, self.heads, self.head_dim))?
            .transpose(1, 2)?
            .contiguous()?)
    }

    /// `query` is `(B, Lq, D)`, `context` is `(B, Lk, D)`.
    pub fn forward(&self, query: &Tensor, context: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let (b, lq, dim) = query.dims3()?;
        let q = self.split_heads(&self.q.forward(query)?)?;
        let k = self.split_heads(&self.k.forward(context)?)?;
        let v = self.split_heads(&self.v.forward(context)?)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?;
        let weights = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let out = weights
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, lq, dim))?;
        self.dropout.forward(&self.o.forward(&out)?, ctx)
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        hidden: usize,
        out: usize,
    ) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), dim, hidden)?,
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, out)?,
        })
    }

    pub fn output_layer(&self) -> &Linear {
        &self.fc2
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.silu()?)
    }
}

/// Pre-norm self-attention layer:
/// `h = x + Self(Ln(x))`, `out = h + Mlp(Ln(h))`.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    mlp: Mlp,
    dropout: Dropout,
}

impl TransformerLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        mlp_ratio: usize,
        dropout: f64,
    ) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim)?,
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, dropout)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim)?,
            mlp: Mlp::new(store, &format!("{name}.mlp"), dim, mlp_ratio * dim, dim)?,
            dropout: Dropout::new(dropout),
        })
    }

    pub fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let normed = self.ln1.forward(x)?;
        let h = (x + self.attn.forward(&normed, &normed, ctx)?)?;
        let m = self.dropout.forward(&self.mlp.forward(&self.ln2.forward(&h)?)?, ctx)?;
        Ok((h + m)?)
    }
}

/// Standard sinusoidal embedding of integer timesteps, `(B, dim)`.
pub fn sinusoidal_embedding(
    timesteps: &[usize],
    dim: usize,
    dtype: candle_core::DType,
    device: &candle_core::Device,
) -> Result<Tensor> {
    let half = dim / 2;
    let mut data = Vec::with_capacity(timesteps.len() * dim);
    for &t in timesteps {
        for i in 0..dim {
            let k = (i % half.max(1)) as f64;
            let freq = (-(10_000f64.ln()) * k / half.max(1) as f64).exp();
            let arg = t as f64 * freq;
            data.push(if i < half { arg.sin() } else { arg.cos() });
        }
    }
    Ok(Tensor::from_vec(data, (timesteps.len(), dim), device)?.to_dtype(dtype)?)
}
