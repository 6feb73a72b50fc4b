use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::error::{bail_shape, bail_validation, Error, Result};
use crate::motion::{MotionSequence, NUM_EMOTIONS};
use crate::nn::{
    load_checkpoint, save_checkpoint, stack_rows, Ctx, FeatureNormalizer, Init, Linear, Mlp,
    ParamStore, TransformerLayer,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub latent_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub classes: usize,
    pub mlp_ratio: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl EncoderConfig {
    pub fn desk() -> Self {
        Self {
            latent_dim: 64,
            layers: 4,
            heads: 4,
            dropout: 0.1,
            max_len: 64,
            classes: NUM_EMOTIONS,
            mlp_ratio: 2,
        }
    }

    /// Full-size model. Eight heads keep the 1024-wide latent evenly divisible.
    pub fn paper() -> Self {
        Self {
            latent_dim: 1024,
            layers: 8,
            heads: 8,
            dropout: 0.3,
            max_len: 300,
            classes: NUM_EMOTIONS,
            mlp_ratio: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.latent_dim % self.heads != 0 {
            bail_validation!(
                "latent_dim {} must be divisible by heads {}",
                self.latent_dim,
                self.heads
            );
        }
        if self.layers == 0 {
            bail_validation!("encoder needs at least one layer");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bail_validation!("dropout {} outside [0, 1)", self.dropout);
        }
        if self.classes != NUM_EMOTIONS {
            bail_validation!("class count must be {NUM_EMOTIONS}, got {}", self.classes);
        }
        if self.max_len < 2 || self.mlp_ratio == 0 {
            bail_validation!("max_len must be at least 2 and mlp_ratio positive");
        }
        Ok(())
    }
}

/// Sequence-level emotion token: a finite vector of length `D_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionEmbedding(Vec<f64>);

impl EmotionEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite emotion embedding".into()));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EncoderArchive {
    encoder: EncoderConfig,
    feature_dim: usize,
    normalizer: FeatureNormalizer,
}

/// Transformer over `[cls, frames] + temporal embedding`; the updated class
/// token is the emotion embedding and a small MLP maps it to class logits.
#[derive(Debug, Clone)]
pub struct EmotionEncoder {
    config: EncoderConfig,
    feature_dim: usize,
    normalizer: FeatureNormalizer,
    store: ParamStore,
    input: Linear,
    cls: Tensor,
    temporal: Tensor,
    layers: Vec<TransformerLayer>,
    head: Mlp,
}

impl EmotionEncoder {
    pub fn new(
        config: EncoderConfig,
        normalizer: FeatureNormalizer,
        seed: u64,
        dtype: DType,
    ) -> Result<Self> {
        let store = ParamStore::new(seed, dtype, Device::Cpu);
        Self::build(config, normalizer, store)
    }

    fn build(
        config: EncoderConfig,
        normalizer: FeatureNormalizer,
        mut store: ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        let de = config.latent_dim;
        let feature_dim = normalizer.dim();
        let input = Linear::new(&mut store, "input", feature_dim, de)?;
        let cls = store.get("cls", &[1, 1, de], Init::Normal(0.02))?;
        let temporal = store.get("temporal", &[config.max_len + 1, de], Init::Normal(0.02))?;
        let layers = (0..config.layers)
            .map(|i| {
                TransformerLayer::new(
                    &mut store,
                    &format!("layer{i}"),
                    de,
                    config.heads,
                    config.mlp_ratio,
                    config.dropout,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let head = Mlp::new(&mut store, "head", de, de, config.classes)?;
        Ok(Self {
            config,
            feature_dim,
            normalizer,
            store,
            input,
            cls,
            temporal,
            layers,
            head,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Sets the classification head's output layer to zero.
    pub fn zero_head(&self) -> Result<()> {
        let fc = self.head.output_layer();
        self.store
            .assign("head.fc2.weight", &fc.weight().zeros_like()?)?;
        if let Some(b) = fc.bias() {
            self.store.assign("head.fc2.bias", &b.zeros_like()?)?;
        }
        Ok(())
    }

    /// Copy whose parameters are plain tensors detached from any optimiser.
    pub fn frozen(&self) -> Result<Self> {
        let store =
            ParamStore::from_tensors(self.store.snapshot()?, self.dtype(), Device::Cpu, false)?;
        Self::build(self.config.clone(), self.normalizer.clone(), store)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let archive = EncoderArchive {
            encoder: self.config.clone(),
            feature_dim: self.feature_dim,
            normalizer: self.normalizer.clone(),
        };
        save_checkpoint(dir, &archive, &self.store.snapshot()?)
    }

    /// Loads a frozen encoder.
    pub fn load(dir: &Path, dtype: DType) -> Result<Self> {
        let (config, tensors) = load_checkpoint(dir)?;
        let archive: EncoderArchive = serde_json::from_value(config)
            .map_err(|e| Error::format(dir.join("config.json"), e.to_string()))?;
        Self::from_parts(archive, tensors, dtype)
    }

    fn from_parts(
        archive: EncoderArchive,
        tensors: BTreeMap<String, Tensor>,
        dtype: DType,
    ) -> Result<Self> {
        if archive.normalizer.dim() != archive.feature_dim {
            bail_shape!("normaliser width does not match feature_dim");
        }
        let store = ParamStore::from_tensors(tensors, dtype, Device::Cpu, false)?;
        Self::build(archive.encoder, archive.normalizer, store)
    }

    /// Embeds a `(B, L, D)` batch of raw features into `(B, D_e)`.
    pub fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let (b, l, d) = x.dims3()?;
        if d != self.feature_dim {
            bail_shape!("encoder expects {} features, got {d}", self.feature_dim);
        }
        if l > self.config.max_len {
            bail_validation!(
                "sequence of {l} frames exceeds encoder max_len {}",
                self.config.max_len
            );
        }
        let h = self.input.forward(&self.normalizer.normalize(x)?)?;
        let cls = self.cls.broadcast_as((b, 1, self.config.latent_dim))?;
        let tokens = Tensor::cat(&[&cls, &h], 1)?;
        let pos = self.temporal.narrow(0, 0, l + 1)?.unsqueeze(0)?;
        let mut h = tokens.broadcast_add(&pos)?;
        for layer in &self.layers {
            h = layer.forward(&h, ctx)?;
        }
        Ok(h.narrow(1, 0, 1)?.squeeze(1)?.contiguous()?)
    }

    /// Class logits for `(B, D_e)` embeddings.
    pub fn logits(&self, embeddings: &Tensor) -> Result<Tensor> {
        self.head.forward(embeddings)
    }

    fn batch_tensor(&self, motions: &[&MotionSequence]) -> Result<Tensor> {
        let views: Vec<_> = motions.iter().map(|m| m.frames()).collect();
        stack_rows(&views, self.dtype(), &Device::Cpu)
    }

    fn grouped<T>(
        &self,
        motions: &[&MotionSequence],
        batch: usize,
        f: impl Fn(&Tensor) -> Result<Vec<T>>,
    ) -> Result<Vec<T>> {
        let mut out: Vec<Option<T>> = (0..motions.len()).map(|_| None).collect();
        let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, m) in motions.iter().enumerate() {
            by_len.entry(m.len()).or_default().push(i);
        }
        for idx in by_len.values() {
            for chunk in idx.chunks(batch.max(1)) {
                let group: Vec<&MotionSequence> = chunk.iter().map(|&i| motions[i]).collect();
                let results = f(&self.batch_tensor(&group)?)?;
                for (&i, r) in chunk.iter().zip(results) {
                    out[i] = Some(r);
                }
            }
        }
        Ok(out.into_iter().map(|r| r.expect("every motion grouped")).collect())
    }

    pub fn embed(&self, motion: &MotionSequence) -> Result<EmotionEmbedding> {
        Ok(self.embed_batch(&[motion])?.remove(0))
    }

    /// Eval-mode embeddings; sequences of different lengths are allowed.
    pub fn embed_batch(&self, motions: &[&MotionSequence]) -> Result<Vec<EmotionEmbedding>> {
        self.grouped(motions, 64, |x| {
            let e = self.forward(x, &mut Ctx::eval())?;
            e.to_dtype(DType::F64)?
                .to_vec2::<f64>()?
                .into_iter()
                .map(EmotionEmbedding::new)
                .collect()
        })
    }

    pub fn classify(&self, motion: &MotionSequence) -> Result<Vec<f64>> {
        Ok(self.classify_batch(&[motion])?.remove(0))
    }

    /// Eval-mode class probabilities.
    pub fn classify_batch(&self, motions: &[&MotionSequence]) -> Result<Vec<Vec<f64>>> {
        self.grouped(motions, 64, |x| {
            let e = self.forward(x, &mut Ctx::eval())?;
            let p = candle_nn::ops::softmax(&self.logits(&e)?.to_dtype(DType::F64)?, D::Minus1)?;
            Ok(p.to_vec2::<f64>()?)
        })
    }

    pub fn predict_batch(&self, motions: &[&MotionSequence]) -> Result<Vec<usize>> {
        Ok(self
            .classify_batch(motions)?
            .iter()
            .map(|p| argmax(p))
            .collect())
    }
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::EmotionLabel;
    use crate::synth::generate_pair;

    fn tiny() -> EncoderConfig {
        EncoderConfig {
            latent_dim: 16,
            layers: 2,
            heads: 2,
            dropout: 0.1,
            max_len: 32,
            classes: NUM_EMOTIONS,
            mlp_ratio: 2,
        }
    }

    fn motion(len: usize) -> MotionSequence {
        generate_pair(EmotionLabel::Anger, len, 16.0, 4).unwrap().reactor
    }

    fn encoder() -> EmotionEncoder {
        let m = motion(20);
        let norm = FeatureNormalizer::fit([&m]).unwrap();
        EmotionEncoder::new(tiny(), norm, 1, DType::F64).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::desk().validate().is_ok());
        assert!(EncoderConfig::paper().validate().is_ok());
        let mut c = tiny();
        c.heads = 3;
        assert!(c.validate().is_err());
        c = tiny();
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        c = tiny();
        c.layers = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn embedding_is_deterministic_in_eval_mode() {
        let enc = encoder();
        let m = motion(20);
        assert_eq!(enc.embed(&m).unwrap(), enc.embed(&m).unwrap());
    }

    #[test]
    fn frame_order_matters() {
        let enc = encoder();
        let m = motion(20);
        let mut rev = m.frames().to_owned();
        rev.invert_axis(ndarray::Axis(0));
        let r = MotionSequence::new(rev, m.fps(), m.skeleton().clone()).unwrap();
        assert_ne!(enc.embed(&m).unwrap(), enc.embed(&r).unwrap());
    }

    #[test]
    fn truncated_input_still_embeds() {
        let enc = encoder();
        let m = motion(20);
        let t = m.window(0, 19).unwrap();
        let out = enc.embed_batch(&[&m, &t]).unwrap();
        assert!(out.iter().all(|e| e.len() == 16));
    }

    #[test]
    fn too_long_is_rejected() {
        let enc = encoder();
        assert!(enc.embed(&motion(40)).is_err());
    }

    #[test]
    fn probabilities_normalise_and_zero_head_is_uniform() {
        let enc = encoder();
        let m = motion(20);
        let p = enc.classify(&m).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
        enc.zero_head().unwrap();
        let p = enc.classify(&m).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 7.0).abs() < 1e-12));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = motion(20);
        let norm = FeatureNormalizer::fit([&m]).unwrap();
        let enc = EmotionEncoder::new(tiny(), norm, 1, DType::F32).unwrap();
        enc.save(dir.path()).unwrap();
        let back = EmotionEncoder::load(dir.path(), DType::F32).unwrap();
        assert_eq!(enc.embed(&m).unwrap(), back.embed(&m).unwrap());
        assert!(back.params().is_frozen());
    }
}
