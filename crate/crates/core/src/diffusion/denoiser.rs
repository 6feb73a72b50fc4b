use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{bail_shape, bail_validation, Error, Result};
use crate::motion::{InteractionPair, MotionSequence, SkeletonSpec, NUM_EMOTIONS};
use crate::nn::{
    load_checkpoint, save_checkpoint, sinusoidal_embedding, Ctx, FeatureNormalizer, Init,
    LayerNorm, Linear, Mlp, MultiHeadAttention, ParamStore,
};

/// How the actor stream is encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Shared projection and blocks for both streams; actor kept clean.
    Symmetric,
    /// Actor gets its own projection and block parameters.
    Asymmetric,
    /// Shared weights, but the actor is noised to the reactor's timestep.
    NonFixed,
}

/// What the emotion token is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionMode {
    /// A draw from the class Gaussian of the emotion prior.
    Sampled,
    /// The class mean of the emotion prior.
    Centroid,
    /// A one-hot class vector through a linear layer; the prior is not consulted.
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub reconstruction: f64,
    pub react: f64,
    pub bone: f64,
    pub smooth: f64,
    pub foot: f64,
    pub emotion: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            reconstruction: 1.0,
            react: 1.0,
            bone: 1.0,
            smooth: 1.0,
            foot: 1.0,
            emotion: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    pub latent_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub dropout: f64,
    pub time_dim: usize,
    pub mlp_ratio: usize,
    pub max_len: usize,
    pub architecture: Architecture,
    pub condition: ConditionMode,
    pub weights: LossWeights,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl DenoiserConfig {
    pub fn desk() -> Self {
        Self {
            latent_dim: 64,
            layers: 3,
            heads: 4,
            dropout: 0.1,
            time_dim: 64,
            mlp_ratio: 2,
            max_len: 64,
            architecture: Architecture::Symmetric,
            condition: ConditionMode::Sampled,
            weights: LossWeights::default(),
        }
    }

    pub fn paper() -> Self {
        Self {
            latent_dim: 1024,
            layers: 8,
            heads: 8,
            dropout: 0.1,
            time_dim: 256,
            mlp_ratio: 4,
            max_len: 300,
            ..Self::desk()
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
        if self.layers == 0 || self.mlp_ratio == 0 || self.time_dim < 2 || self.max_len < 2 {
            bail_validation!("denoiser layers, mlp_ratio, time_dim and max_len must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bail_validation!("dropout {} outside [0, 1)", self.dropout);
        }
        let w = &self.weights;
        for v in [w.reconstruction, w.react, w.bone, w.smooth, w.foot, w.emotion] {
            if !(v.is_finite() && v >= 0.0) {
                bail_validation!("loss weights must be finite and non-negative");
            }
        }
        Ok(())
    }
}

/// Emotion condition for one batch.
#[derive(Debug, Clone)]
pub enum Condition {
    /// `(B, D_e)` emotion embeddings.
    Embedding(Tensor),
    /// One class index per batch item (one-hot models).
    Class(Vec<usize>),
    None,
}

/// Paired block: self-attention, cross-attention to the other stream plus
/// condition tokens, then an MLP, each pre-normed with a residual. The
/// condition tokens are normed with the attended stream so their scale does
/// not depend on the encoder's embedding norm.
#[derive(Debug, Clone)]
struct PairedBlock {
    ln_self: LayerNorm,
    self_attn: MultiHeadAttention,
    ln_cross: LayerNorm,
    cross_attn: MultiHeadAttention,
    ln_mlp: LayerNorm,
    mlp: Mlp,
}

impl PairedBlock {
    fn new(store: &mut ParamStore, name: &str, c: &DenoiserConfig) -> Result<Self> {
        let d = c.latent_dim;
        Ok(Self {
            ln_self: LayerNorm::new(store, &format!("{name}.ln_self"), d)?,
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self"), d, c.heads, c.dropout)?,
            ln_cross: LayerNorm::new(store, &format!("{name}.ln_cross"), d)?,
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross"), d, c.heads, c.dropout)?,
            ln_mlp: LayerNorm::new(store, &format!("{name}.ln_mlp"), d)?,
            mlp: Mlp::new(store, &format!("{name}.mlp"), d, c.mlp_ratio * d, d)?,
        })
    }

    fn self_step(&self, h: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let n = self.ln_self.forward(h)?;
        Ok((h + self.self_attn.forward(&n, &n, ctx)?)?)
    }

    fn cross_step(&self, h: &Tensor, other: &Tensor, extra: &[&Tensor], ctx: &mut Ctx) -> Result<Tensor> {
        let q = self.ln_cross.forward(h)?;
        let mut parts = vec![other.clone()];
        parts.extend(extra.iter().map(|t| (*t).clone()));
        let context = self.ln_cross.forward(&Tensor::cat(&parts, 1)?)?;
        Ok((h + self.cross_attn.forward(&q, &context, ctx)?)?)
    }

    fn mlp_step(&self, h: &Tensor) -> Result<Tensor> {
        Ok((h + self.mlp.forward(&self.ln_mlp.forward(h)?)?)?)
    }
}

/// Feature normaliser plus the per-feature range of normalised training
/// reactors, used to clamp x0 predictions while sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub normalizer: FeatureNormalizer,
    pub x0_min: Vec<f64>,
    pub x0_max: Vec<f64>,
}

impl FeatureStats {
    /// Normaliser over both roles; clamp range over reactors.
    pub fn fit(pairs: &[&InteractionPair]) -> Result<Self> {
        let normalizer = FeatureNormalizer::fit(pairs.iter().flat_map(|p| [&p.actor, &p.reactor]))?;
        let d = normalizer.dim();
        let mut x0_min = vec![f64::INFINITY; d];
        let mut x0_max = vec![f64::NEG_INFINITY; d];
        for p in pairs {
            for row in p.reactor.frames().rows() {
                for (k, v) in row.iter().enumerate() {
                    let z = (v - normalizer.mean[k]) / normalizer.std[k];
                    x0_min[k] = x0_min[k].min(z);
                    x0_max[k] = x0_max[k].max(z);
                }
            }
        }
        Ok(Self {
            normalizer,
            x0_min,
            x0_max,
        })
    }

    /// Stats with no effective clamp.
    pub fn unbounded(normalizer: FeatureNormalizer) -> Self {
        let d = normalizer.dim();
        Self {
            normalizer,
            x0_min: vec![f64::MIN; d],
            x0_max: vec![f64::MAX; d],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DenoiserArchive {
    denoiser: DenoiserConfig,
    emotion_dim: usize,
    fps: f64,
    skeleton: SkeletonSpec,
    stats: FeatureStats,
}

/// Actor-reactor x0 denoiser operating on normalised features.
#[derive(Debug, Clone)]
pub struct ReactionDenoiser {
    archive: DenoiserArchive,
    store: ParamStore,
    input: Linear,
    actor_input: Option<Linear>,
    temporal: Tensor,
    time_fc1: Linear,
    time_fc2: Linear,
    emotion_proj: Linear,
    class_proj: Linear,
    blocks: Vec<PairedBlock>,
    actor_blocks: Option<Vec<PairedBlock>>,
    out_ln: LayerNorm,
    output: Linear,
}

impl ReactionDenoiser {
    /// `emotion_dim` must equal the encoder's latent width.
    pub fn new(
        config: DenoiserConfig,
        emotion_dim: usize,
        skeleton: SkeletonSpec,
        fps: f64,
        stats: FeatureStats,
        seed: u64,
        dtype: DType,
    ) -> Result<Self> {
        let archive = DenoiserArchive {
            denoiser: config,
            emotion_dim,
            fps,
            skeleton,
            stats,
        };
        Self::build(archive, ParamStore::new(seed, dtype, Device::Cpu))
    }

    fn build(archive: DenoiserArchive, mut store: ParamStore) -> Result<Self> {
        let c = archive.denoiser.clone();
        c.validate()?;
        let d = archive.stats.normalizer.dim();
        if d != archive.skeleton.feature_dim() {
            bail_shape!("normaliser width {d} does not match the skeleton");
        }
        if archive.stats.x0_min.len() != d || archive.stats.x0_max.len() != d {
            bail_shape!("x0 range must have {d} entries");
        }
        let dl = c.latent_dim;
        let input = Linear::new(&mut store, "input", d, dl)?;
        let actor_input = match c.architecture {
            Architecture::Asymmetric => Some(Linear::new(&mut store, "actor_input", d, dl)?),
            _ => None,
        };
        let temporal = store.get("temporal", &[c.max_len, dl], Init::Normal(0.02))?;
        let time_fc1 = Linear::new(&mut store, "time.fc1", c.time_dim, dl)?;
        let time_fc2 = Linear::new(&mut store, "time.fc2", dl, dl)?;
        let emotion_proj = Linear::new(&mut store, "emotion_proj", archive.emotion_dim, dl)?;
        let class_proj = Linear::new(&mut store, "class_proj", NUM_EMOTIONS, dl)?;
        let blocks = (0..c.layers)
            .map(|i| PairedBlock::new(&mut store, &format!("block{i}"), &c))
            .collect::<Result<Vec<_>>>()?;
        let actor_blocks = match c.architecture {
            Architecture::Asymmetric => Some(
                (0..c.layers)
                    .map(|i| PairedBlock::new(&mut store, &format!("actor_block{i}"), &c))
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        let out_ln = LayerNorm::new(&mut store, "out_ln", dl)?;
        let output = Linear::new(&mut store, "output", dl, d)?;
        Ok(Self {
            archive,
            store,
            input,
            actor_input,
            temporal,
            time_fc1,
            time_fc2,
            emotion_proj,
            class_proj,
            blocks,
            actor_blocks,
            out_ln,
            output,
        })
    }

    /// Loss weights only affect training, so they may change after construction.
    pub fn set_loss_weights(&mut self, weights: LossWeights) {
        self.archive.denoiser.weights = weights;
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.archive.denoiser
    }

    pub fn architecture(&self) -> Architecture {
        self.archive.denoiser.architecture
    }

    pub fn condition_mode(&self) -> ConditionMode {
        self.archive.denoiser.condition
    }

    pub fn emotion_dim(&self) -> usize {
        self.archive.emotion_dim
    }

    pub fn skeleton(&self) -> &SkeletonSpec {
        &self.archive.skeleton
    }

    pub fn fps(&self) -> f64 {
        self.archive.fps
    }

    pub fn normalizer(&self) -> &FeatureNormalizer {
        &self.archive.stats.normalizer
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(dir, &self.archive, &self.store.snapshot()?)
    }

    /// Loads a frozen denoiser.
    pub fn load(dir: &Path, dtype: DType) -> Result<Self> {
        let (config, tensors) = load_checkpoint(dir)?;
        let archive: DenoiserArchive = serde_json::from_value(config)
            .map_err(|e| Error::format(dir.join("config.json"), e.to_string()))?;
        let store = ParamStore::from_tensors(tensors, dtype, Device::Cpu, false)?;
        Self::build(archive, store)
    }

    /// Copy whose parameters are plain tensors detached from any optimiser.
    pub fn frozen(&self) -> Result<Self> {
        let store = ParamStore::from_tensors(self.store.snapshot()?, self.dtype(), Device::Cpu, false)?;
        Self::build(self.archive.clone(), store)
    }

    /// Normalised `(B, L, D)` batch from raw sequences.
    pub fn normalize_batch(&self, motions: &[&MotionSequence]) -> Result<Tensor> {
        let views: Vec<_> = motions.iter().map(|m| m.frames()).collect();
        let x = crate::nn::stack_rows(&views, self.dtype(), &Device::Cpu)?;
        self.archive.stats.normalizer.normalize(&x)
    }

    /// Reactor-path input projection of normalised frames.
    pub fn project_reactor(&self, x: &Tensor) -> Result<Tensor> {
        self.input.forward(x)
    }

    /// Actor-path input projection; the reactor's projection unless the
    /// architecture is asymmetric.
    pub fn project_actor(&self, x: &Tensor) -> Result<Tensor> {
        self.actor_input.as_ref().unwrap_or(&self.input).forward(x)
    }

    pub(crate) fn clamp_x0(&self, x0: &Tensor) -> Result<Tensor> {
        let d = self.archive.stats.x0_min.len();
        let mk = |v: &Vec<f64>| -> Result<Tensor> {
            Ok(Tensor::from_vec(v.clone(), (1, 1, d), x0.device())?.to_dtype(x0.dtype())?)
        };
        Ok(x0
            .broadcast_maximum(&mk(&self.archive.stats.x0_min)?)?
            .broadcast_minimum(&mk(&self.archive.stats.x0_max)?)?)
    }

    fn condition_token(&self, cond: &Condition, batch: usize) -> Result<Option<Tensor>> {
        match cond {
            Condition::None => Ok(None),
            Condition::Embedding(e) => {
                let (b, de) = e.dims2()?;
                if b != batch || de != self.archive.emotion_dim {
                    bail_shape!("emotion embeddings {b}x{de} do not match batch {batch} and D_e {}", self.archive.emotion_dim);
                }
                Ok(Some(self.emotion_proj.forward(&e.to_dtype(self.dtype())?)?.unsqueeze(1)?))
            }
            Condition::Class(c) => {
                if c.len() != batch || c.iter().any(|c| *c >= NUM_EMOTIONS) {
                    bail_validation!("class condition must hold {batch} valid labels");
                }
                let mut one_hot = vec![0.0f64; batch * NUM_EMOTIONS];
                for (i, c) in c.iter().enumerate() {
                    one_hot[i * NUM_EMOTIONS + c] = 1.0;
                }
                let one_hot = Tensor::from_vec(one_hot, (batch, NUM_EMOTIONS), &Device::Cpu)?.to_dtype(self.dtype())?;
                Ok(Some(self.class_proj.forward(&one_hot)?.unsqueeze(1)?))
            }
        }
    }

    /// Predicts normalised clean reactor features from the noised reactor
    /// `x_t` and (normalised) actor, both `(B, L, D)`.
    pub fn forward(
        &self,
        x_t: &Tensor,
        t: &[usize],
        actor: &Tensor,
        cond: &Condition,
        ctx: &mut Ctx,
    ) -> Result<Tensor> {
        let (b, l, d) = x_t.dims3()?;
        if actor.dims() != x_t.dims() {
            bail_shape!("actor {:?} and reactor {:?} streams differ", actor.dims(), x_t.dims());
        }
        if d != self.archive.stats.normalizer.dim() {
            bail_shape!("denoiser expects {} features, got {d}", self.archive.stats.normalizer.dim());
        }
        if l > self.archive.denoiser.max_len {
            bail_validation!("sequence of {l} frames exceeds max_len {}", self.archive.denoiser.max_len);
        }
        if t.len() != b {
            bail_shape!("{} timesteps for batch of {b}", t.len());
        }
        let pos = self.temporal.narrow(0, 0, l)?.unsqueeze(0)?;
        let mut hr = self.project_reactor(x_t)?.broadcast_add(&pos)?;
        let mut ha = self.project_actor(actor)?.broadcast_add(&pos)?;

        let temb = sinusoidal_embedding(t, self.archive.denoiser.time_dim, self.dtype(), x_t.device())?;
        let t_tok = self.time_fc2.forward(&self.time_fc1.forward(&temb)?.silu()?)?.unsqueeze(1)?;
        let e_tok = self.condition_token(cond, b)?;
        let mut reactor_extra = vec![&t_tok];
        if let Some(e) = e_tok.as_ref() {
            reactor_extra.push(e);
        }

        for (i, block) in self.blocks.iter().enumerate() {
            let actor_block = self.actor_blocks.as_ref().map_or(block, |a| &a[i]);
            if self.actor_blocks.is_none() {
                let both = block.self_step(&Tensor::cat(&[&hr, &ha], 0)?, ctx)?;
                hr = both.narrow(0, 0, b)?;
                ha = both.narrow(0, b, b)?;
            } else {
                hr = block.self_step(&hr, ctx)?;
                ha = actor_block.self_step(&ha, ctx)?;
            }
            let hr_next = block.cross_step(&hr, &ha, &reactor_extra, ctx)?;
            let ha_next = actor_block.cross_step(&ha, &hr, &[&t_tok], ctx)?;
            hr = block.mlp_step(&hr_next)?;
            ha = actor_block.mlp_step(&ha_next)?;
        }
        self.output.forward(&self.out_ln.forward(&hr)?)
    }
}
