use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampling::{sample_ddim, sample_ddpm};
use super::train::condition_for;
use super::{Condition, DiffusionSchedule, ReactionDenoiser};
use crate::error::{bail_shape, bail_validation, Error, Result};
use crate::motion::{EmotionLabel, MotionSequence};
use crate::nn::tensor_to_rows;
use crate::prior::{argmax, EmotionEncoder, EmotionPrior};

pub const DEFAULT_DDIM_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "emotion")]
pub enum GenerationMode {
    /// Condition on a chosen emotion.
    Edited(EmotionLabel),
    /// Condition on the emotion the classifier reads from the actor.
    Empathetic,
    /// No emotion token.
    Unconditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sampler {
    Ddpm,
    Ddim { steps: usize },
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler::Ddim { steps: DEFAULT_DDIM_STEPS }
    }
}

impl Sampler {
    pub fn validate(&self, schedule: &DiffusionSchedule) -> Result<()> {
        if let Sampler::Ddim { steps } = *self {
            if steps == 0 || steps > schedule.steps() {
                bail_validation!("DDIM steps must lie in 1..={}, got {steps}", schedule.steps());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub actor: MotionSequence,
    pub mode: GenerationMode,
    pub sampler: Sampler,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub mode: GenerationMode,
    /// Class used for conditioning; `None` when unconditional.
    pub emotion: Option<EmotionLabel>,
    pub seed: u64,
    pub sampler: Sampler,
}

impl GenerationMeta {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub reactor: MotionSequence,
    pub meta: GenerationMeta,
}

/// Trained, frozen artifacts needed for generation.
pub struct Models {
    pub encoder: EmotionEncoder,
    pub prior: EmotionPrior,
    pub denoiser: ReactionDenoiser,
    pub schedule: DiffusionSchedule,
}

impl Models {
    pub fn new(
        encoder: EmotionEncoder,
        prior: EmotionPrior,
        denoiser: ReactionDenoiser,
        schedule: DiffusionSchedule,
    ) -> Result<Self> {
        if !encoder.params().is_frozen() {
            bail_validation!("generation needs a frozen emotion encoder");
        }
        if encoder.latent_dim() != prior.dim() || denoiser.emotion_dim() != prior.dim() {
            bail_shape!(
                "encoder ({}), prior ({}) and denoiser ({}) emotion widths differ",
                encoder.latent_dim(),
                prior.dim(),
                denoiser.emotion_dim()
            );
        }
        let denoiser = if denoiser.params().is_frozen() { denoiser } else { denoiser.frozen()? };
        Ok(Self { encoder, prior, denoiser, schedule })
    }

    /// Conditioning class per mode; empathetic mode classifies the actors.
    pub fn resolve_emotions(&self, actors: &[&MotionSequence], modes: &[GenerationMode]) -> Result<Vec<Option<EmotionLabel>>> {
        let empathetic: Vec<&MotionSequence> = actors
            .iter()
            .zip(modes)
            .filter(|(_, m)| **m == GenerationMode::Empathetic)
            .map(|(a, _)| *a)
            .collect();
        let mut predicted = self.encoder.classify_batch(&empathetic)?.into_iter();
        modes
            .iter()
            .map(|m| match m {
                GenerationMode::Edited(c) => Ok(Some(*c)),
                GenerationMode::Empathetic => {
                    let p = predicted.next().expect("one prediction per empathetic request");
                    Ok(Some(EmotionLabel::from_index(argmax(&p))?))
                }
                GenerationMode::Unconditional => Ok(None),
            })
            .collect()
    }

    /// Single request; all randomness comes from `request.seed`.
    pub fn generate(&self, request: &GenerationRequest) -> Result<Generated> {
        let mut out = self.generate_batch(&[&request.actor], &[request.mode], request.sampler, request.seed)?;
        Ok(out.pop().expect("one output"))
    }

    /// Samples one reactor per actor in a single batched chain. The output is
    /// a pure function of the inputs and `seed`.
    pub fn generate_batch(
        &self,
        actors: &[&MotionSequence],
        modes: &[GenerationMode],
        sampler: Sampler,
        seed: u64,
    ) -> Result<Vec<Generated>> {
        if actors.is_empty() || actors.len() != modes.len() {
            bail_validation!("need one mode per actor and at least one actor");
        }
        sampler.validate(&self.schedule)?;
        let len = actors[0].len();
        let skeleton = actors[0].skeleton().clone();
        for a in actors {
            if a.len() != len || a.skeleton() != &skeleton {
                bail_shape!("batched actors must share length and skeleton");
            }
        }
        if *skeleton != *self.denoiser.skeleton() {
            bail_validation!("actor skeleton differs from the denoiser's");
        }
        let emotions = self.resolve_emotions(actors, modes)?;
        let conditional = emotions.iter().filter(|e| e.is_some()).count();
        if conditional != 0 && conditional != emotions.len() {
            bail_validation!("a batch cannot mix unconditional and conditional requests");
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cond = if conditional == 0 {
            Condition::None
        } else {
            let classes: Vec<EmotionLabel> = emotions.iter().map(|e| e.expect("checked")).collect();
            condition_for(self.denoiser.condition_mode(), &self.prior, &classes, self.denoiser.dtype(), &mut rng)?
        };
        let actor = self.denoiser.normalize_batch(actors)?;
        let x0 = match sampler {
            Sampler::Ddpm => sample_ddpm(&self.denoiser, &self.schedule, &actor, &cond, &mut rng)?,
            Sampler::Ddim { steps } => sample_ddim(&self.denoiser, &self.schedule, &actor, &cond, steps, &mut rng)?,
        };
        let raw = self.denoiser.normalizer().denormalize(&x0)?;
        let contacts = actors[0].layout().contacts();
        let fps = self.denoiser.fps();
        let mut out = Vec::with_capacity(actors.len());
        for (i, (mode, emotion)) in modes.iter().zip(emotions).enumerate() {
            let mut frames = tensor_to_rows(&raw.get(i)?)?;
            // Contact channels are flags; snap them back to {0, 1}.
            for c in contacts.clone() {
                frames.column_mut(c).mapv_inplace(|v| if v >= 0.5 { 1.0 } else { 0.0 });
            }
            out.push(Generated {
                reactor: MotionSequence::new(frames, fps, Arc::clone(&skeleton))?,
                meta: GenerationMeta { mode: *mode, emotion, seed, sampler },
            });
        }
        Ok(out)
    }
}
