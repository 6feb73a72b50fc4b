//! Minimal transformer building blocks over `candle` tensors.
//!
//! Parameters live in a [`ParamStore`] that initialises them from a seeded
//! ChaCha stream, so model construction is reproducible on CPU. Dropout masks
//! are drawn from the RNG carried in [`Ctx`].

mod checkpoint;
#[cfg(any(test, feature = "testing"))]
pub mod gradcheck;
mod layers;
mod normalizer;
mod optim;
mod params;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, tensor_from_bytes, tensor_to_bytes, TENSOR_MAGIC,
};
pub use layers::{
    sinusoidal_embedding, Ctx, Dropout, LayerNorm, Linear, Mlp, MultiHeadAttention,
    TransformerLayer,
};
pub use normalizer::FeatureNormalizer;
pub use optim::Optimizer;
pub use params::{Init, ParamStore};

use candle_core::{DType, Device, Tensor};

/// Packs equally-shaped row-major `f64` matrices into a `(B, rows, cols)` tensor.
pub fn stack_rows(
    batch: &[ndarray::ArrayView2<'_, f64>],
    dtype: DType,
    device: &Device,
) -> crate::Result<Tensor> {
    let (rows, cols) = batch
        .first()
        .map(|a| a.dim())
        .ok_or_else(|| crate::Error::Validation("empty batch".into()))?;
    let mut data = Vec::with_capacity(batch.len() * rows * cols);
    for a in batch {
        if a.dim() != (rows, cols) {
            return Err(crate::Error::Shape(format!(
                "batch element is {:?}, expected {:?}",
                a.dim(),
                (rows, cols)
            )));
        }
        data.extend(a.iter().copied());
    }
    Ok(Tensor::from_vec(data, (batch.len(), rows, cols), device)?.to_dtype(dtype)?)
}

/// Inverse of [`stack_rows`] for one batch element.
pub fn tensor_to_rows(t: &Tensor) -> crate::Result<ndarray::Array2<f64>> {
    let (rows, cols) = t.dims2()?;
    let v = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    Ok(ndarray::Array2::from_shape_vec((rows, cols), v).expect("dims2 shape"))
}
