use candle_core::{DType, Device, Tensor};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{loss_emotion, loss_geometric, loss_react, loss_reconstruction, Geometry};
use super::sampling::gaussian_like;
use super::{Architecture, Condition, ConditionMode, DiffusionSchedule, ReactionDenoiser};
use crate::error::{bail_validation, Error, Result};
use crate::motion::{EmotionLabel, InteractionPair};
use crate::nn::{stack_rows, Ctx, Optimizer};
use crate::prior::{sample_emotion, EmotionEncoder, EmotionPrior};
use crate::synth::{Dataset, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip: Option<f64>,
    /// Include unlabeled pairs, conditioned on the classifier's prediction.
    pub use_unlabeled: bool,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for DiffusionTrainConfig {
    fn default() -> Self {
        Self {
            steps: 1500,
            batch: 16,
            learning_rate: 5e-4,
            weight_decay: 0.01,
            grad_clip: Some(1.0),
            use_unlabeled: true,
            log_every: 50,
            seed: 0,
        }
    }
}

/// Training pairs with the emotion used for conditioning each one.
#[derive(Debug, Clone, Default)]
pub struct DiffusionData {
    pub pairs: Vec<(InteractionPair, EmotionLabel)>,
}

impl DiffusionData {
    /// Labeled pairs keep their label; unlabeled pairs (when requested) take
    /// the frozen classifier's prediction on the ground-truth reactor.
    pub fn from_dataset(dataset: &Dataset, encoder: &EmotionEncoder, use_unlabeled: bool) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in dataset.load(Split::LabeledTrain)? {
            let e = item
                .pair
                .emotion
                .ok_or_else(|| Error::Validation(format!("{} lacks a label", item.id)))?;
            pairs.push((item.pair, e));
        }
        if use_unlabeled {
            let items = dataset.load(Split::UnlabeledTrain)?;
            let reactors: Vec<_> = items.iter().map(|i| &i.pair.reactor).collect();
            let predicted = encoder.predict_batch(&reactors)?;
            for (item, c) in items.into_iter().zip(predicted) {
                pairs.push((item.pair, EmotionLabel::from_index(c)?));
            }
        }
        Ok(Self { pairs })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub react: f64,
    pub bone: f64,
    pub smooth: f64,
    pub foot: f64,
    pub emotion: f64,
}

impl LossBreakdown {
    fn add_scaled(&mut self, other: &LossBreakdown, s: f64) {
        self.total += s * other.total;
        self.reconstruction += s * other.reconstruction;
        self.react += s * other.react;
        self.bone += s * other.bone;
        self.smooth += s * other.smooth;
        self.foot += s * other.foot;
        self.emotion += s * other.emotion;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionRecord {
    pub step: usize,
    pub losses: LossBreakdown,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffusionHistory {
    /// Mean losses over each logging window.
    pub records: Vec<DiffusionRecord>,
}

impl DiffusionHistory {
    pub fn initial_total(&self) -> Option<f64> {
        self.records.first().map(|r| r.losses.total)
    }

    pub fn final_total(&self) -> Option<f64> {
        self.records.last().map(|r| r.losses.total)
    }
}

/// Everything the loss stack needs besides the denoiser.
pub struct LossContext<'a> {
    pub geometry: Geometry,
    pub encoder: &'a EmotionEncoder,
    pub prior: &'a EmotionPrior,
}

/// Emotion condition for a batch of classes under the model's condition mode.
pub fn condition_for(
    mode: ConditionMode,
    prior: &EmotionPrior,
    classes: &[EmotionLabel],
    dtype: DType,
    rng: &mut ChaCha8Rng,
) -> Result<Condition> {
    let rows: Vec<f64> = match mode {
        ConditionMode::OneHot => return Ok(Condition::Class(classes.iter().map(|c| c.index()).collect())),
        ConditionMode::Sampled => classes
            .iter()
            .flat_map(|c| sample_emotion(prior, *c, rng).into_vec())
            .collect(),
        ConditionMode::Centroid => classes.iter().flat_map(|c| prior.mean(*c).to_vec()).collect(),
    };
    let t = Tensor::from_vec(rows, (classes.len(), prior.dim()), &Device::Cpu)?.to_dtype(dtype)?;
    Ok(Condition::Embedding(t))
}

/// Weighted loss stack for one batch. `actor`, `reactor` are raw features.
pub fn training_loss(
    denoiser: &ReactionDenoiser,
    schedule: &DiffusionSchedule,
    losses: &LossContext<'_>,
    actor: &Tensor,
    reactor: &Tensor,
    classes: &[EmotionLabel],
    t: &[usize],
    rng: &mut ChaCha8Rng,
    ctx: &mut Ctx,
) -> Result<(Tensor, LossBreakdown)> {
    let norm = denoiser.normalizer();
    let x0 = norm.normalize(reactor)?;
    let a0 = norm.normalize(actor)?;
    let x_t = schedule.q_sample_tensor(&x0, t, &gaussian_like(&x0, rng)?)?;
    let a_in = if denoiser.architecture() == Architecture::NonFixed {
        schedule.q_sample_tensor(&a0, t, &gaussian_like(&a0, rng)?)?
    } else {
        a0
    };
    let cond = condition_for(denoiser.condition_mode(), losses.prior, classes, denoiser.dtype(), rng)?;
    let pred = denoiser.forward(&x_t, t, &a_in, &cond, ctx)?;
    let pred_raw = norm.denormalize(&pred)?;

    let w = &denoiser.config().weights;
    let rc = loss_reconstruction(&pred, &x0)?;
    let react = loss_react(&losses.geometry, actor, reactor, &pred_raw)?;
    let geo = loss_geometric(&losses.geometry, &pred_raw, reactor)?;
    let class_idx: Vec<usize> = classes.iter().map(|c| c.index()).collect();
    let emo = if w.emotion > 0.0 {
        loss_emotion(losses.encoder, losses.prior, &pred_raw, &class_idx)?
    } else {
        Tensor::zeros((), pred.dtype(), pred.device())?
    };
    let terms = [
        (&rc, w.reconstruction),
        (&react, w.react),
        (&geo.bone, w.bone),
        (&geo.smooth, w.smooth),
        (&geo.foot, w.foot),
        (&emo, w.emotion),
    ];
    let mut total = Tensor::zeros((), pred.dtype(), pred.device())?;
    for (term, weight) in terms {
        if weight > 0.0 {
            total = (total + (term * weight)?)?;
        }
    }
    let v = |t: &Tensor| -> Result<f64> { Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?) };
    let breakdown = LossBreakdown {
        total: v(&total)?,
        reconstruction: v(&rc)?,
        react: v(&react)?,
        bone: v(&geo.bone)?,
        smooth: v(&geo.smooth)?,
        foot: v(&geo.foot)?,
        emotion: v(&emo)?,
    };
    Ok((total, breakdown))
}

fn step_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_mul(0xD1B5_4A32_D192_ED03) ^ (step as u64).wrapping_mul(0x94D0_49BB_1331_11EB)
}

pub fn train_diffusion(
    denoiser: &mut ReactionDenoiser,
    data: &DiffusionData,
    schedule: &DiffusionSchedule,
    encoder: &EmotionEncoder,
    prior: &EmotionPrior,
    config: &DiffusionTrainConfig,
) -> Result<DiffusionHistory> {
    if !encoder.params().is_frozen() {
        bail_validation!("diffusion training needs a frozen emotion encoder");
    }
    if data.pairs.is_empty() || config.batch == 0 || config.steps == 0 {
        bail_validation!("diffusion training needs pairs, a positive batch and steps");
    }
    if denoiser.emotion_dim() != prior.dim() {
        bail_validation!("denoiser emotion width {} does not match the prior ({})", denoiser.emotion_dim(), prior.dim());
    }
    let losses = LossContext {
        geometry: Geometry::new(denoiser.skeleton(), denoiser.fps())?,
        encoder,
        prior,
    };
    let mut opt = Optimizer::new(
        denoiser.params().vars(),
        config.learning_rate,
        config.weight_decay,
        config.grad_clip,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let indices: Vec<usize> = (0..data.pairs.len()).collect();
    let mut history = DiffusionHistory::default();
    let mut window = LossBreakdown::default();
    let mut in_window = 0usize;
    let log_every = config.log_every.max(1);
    let dtype = denoiser.dtype();

    for step in 0..config.steps {
        let picked: Vec<usize> = (0..config.batch)
            .map(|_| *indices.choose(&mut rng).expect("non-empty"))
            .collect();
        let actors: Vec<_> = picked.iter().map(|&i| data.pairs[i].0.actor.frames()).collect();
        let reactors: Vec<_> = picked.iter().map(|&i| data.pairs[i].0.reactor.frames()).collect();
        let classes: Vec<EmotionLabel> = picked.iter().map(|&i| data.pairs[i].1).collect();
        let actor = stack_rows(&actors, dtype, &Device::Cpu)?;
        let reactor = stack_rows(&reactors, dtype, &Device::Cpu)?;
        let t: Vec<usize> = (0..config.batch)
            .map(|_| rng.random_range(1..=schedule.steps()))
            .collect();
        let mut ctx = Ctx::train(step_seed(config.seed, step));
        let (total, breakdown) = training_loss(
            denoiser, schedule, &losses, &actor, &reactor, &classes, &t, &mut rng, &mut ctx,
        )?;
        if !breakdown.total.is_finite() {
            return Err(Error::Numerical(format!(
                "diffusion loss became non-finite at step {step}: {breakdown:?}"
            )));
        }
        opt.step(&total)?;
        window.add_scaled(&breakdown, 1.0);
        in_window += 1;
        if in_window == log_every || step + 1 == config.steps {
            let mut mean = LossBreakdown::default();
            mean.add_scaled(&window, 1.0 / in_window as f64);
            log::info!("diffusion step {}: total {:.4} rc {:.4} emo {:.4}", step + 1, mean.total, mean.reconstruction, mean.emotion);
            history.records.push(DiffusionRecord { step: step + 1, losses: mean });
            window = LossBreakdown::default();
            in_window = 0;
        }
    }
    Ok(history)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::diffusion::denoiser::tests::tiny_denoiser;
    use crate::diffusion::{LossWeights, ScheduleConfig};
    use crate::motion::NUM_EMOTIONS;
    use crate::nn::gradcheck::check_gradients;
    use crate::nn::FeatureNormalizer;
    use crate::prior::EncoderConfig;
    use candle_core::Var;

    pub(crate) fn tiny_encoder(pair: &InteractionPair, dtype: DType) -> EmotionEncoder {
        let config = EncoderConfig {
            latent_dim: 8,
            layers: 1,
            heads: 2,
            dropout: 0.0,
            max_len: 24,
            classes: NUM_EMOTIONS,
            mlp_ratio: 2,
        };
        let norm = FeatureNormalizer::fit([&pair.actor, &pair.reactor]).unwrap();
        EmotionEncoder::new(config, norm, 11, dtype).unwrap().frozen().unwrap()
    }

    pub(crate) fn tiny_prior(dim: usize) -> EmotionPrior {
        let means = (0..NUM_EMOTIONS).map(|c| vec![0.1 * c as f64; dim]).collect();
        EmotionPrior::new(means, vec![vec![0.5; dim]; NUM_EMOTIONS]).unwrap()
    }

    pub(crate) fn short_schedule() -> DiffusionSchedule {
        DiffusionSchedule::new(&ScheduleConfig { steps: 50, beta_start: 1e-3, beta_end: 0.2 }).unwrap()
    }

    fn raw(m: &crate::motion::MotionSequence, dtype: DType) -> Tensor {
        stack_rows(&[m.frames()], dtype, &Device::Cpu).unwrap()
    }

    #[test]
    fn emotion_and_reconstruction_gradients_match_finite_differences() {
        let (den, pair) = tiny_denoiser(Architecture::Symmetric, DType::F64);
        let encoder = tiny_encoder(&pair, DType::F64);
        let prior = tiny_prior(8);
        let target = den.normalize_batch(&[&pair.reactor]).unwrap();
        let wobble: Vec<f64> = (0..target.elem_count()).map(|i| 0.1 * (i as f64 * 0.917).cos()).collect();
        let start = (&target + Tensor::from_vec(wobble, target.shape(), &Device::Cpu).unwrap()).unwrap();
        let pred = Var::from_tensor(&start).unwrap();
        let vars = vec![("pred".to_string(), pred.clone())];
        let emo = check_gradients(
            &vars,
            || loss_emotion(&encoder, &prior, &den.normalizer().denormalize(pred.as_tensor())?, &[3]),
            1e-5,
            60,
            1,
        )
        .unwrap();
        assert!(emo.worst_relative_error < 1e-4, "{emo:?}");
        let rc = check_gradients(&vars, || loss_reconstruction(pred.as_tensor(), &target), 1e-5, 60, 2).unwrap();
        assert!(rc.worst_relative_error < 1e-6, "{rc:?}");
    }

    #[test]
    fn end_to_end_denoiser_gradients_match_finite_differences() {
        for arch in [Architecture::Symmetric, Architecture::Asymmetric] {
            let (den, pair) = tiny_denoiser(arch, DType::F64);
            let encoder = tiny_encoder(&pair, DType::F64);
            let prior = tiny_prior(8);
            let schedule = short_schedule();
            let losses = LossContext {
                geometry: Geometry::new(den.skeleton(), den.fps()).unwrap(),
                encoder: &encoder,
                prior: &prior,
            };
            let actor = raw(&pair.actor, DType::F64);
            let reactor = raw(&pair.reactor, DType::F64);
            let loss = || {
                let mut rng = ChaCha8Rng::seed_from_u64(5);
                let (total, _) = training_loss(
                    &den,
                    &schedule,
                    &losses,
                    &actor,
                    &reactor,
                    &[EmotionLabel::Anger],
                    &[20],
                    &mut rng,
                    &mut Ctx::eval(),
                )?;
                Ok(total)
            };
            let report = check_gradients(&den.params().named_vars(), loss, 1e-4, 4, 3).unwrap();
            assert!(report.checked > 50);
            assert!(report.worst_relative_error < 1e-3, "{arch:?}: {report:?}");
        }
    }

    fn tiny_data(pair: &InteractionPair) -> DiffusionData {
        DiffusionData { pairs: vec![(pair.clone(), EmotionLabel::Happiness)] }
    }

    #[test]
    fn reconstruction_only_training_decreases_loss() {
        let (mut den, pair) = tiny_denoiser(Architecture::Symmetric, DType::F32);
        den.set_loss_weights(LossWeights {
            reconstruction: 1.0,
            react: 0.0,
            bone: 0.0,
            smooth: 0.0,
            foot: 0.0,
            emotion: 0.0,
        });
        let encoder = tiny_encoder(&pair, DType::F32);
        let prior = tiny_prior(8);
        let config = DiffusionTrainConfig { steps: 60, batch: 4, learning_rate: 3e-3, log_every: 10, ..Default::default() };
        let history = train_diffusion(&mut den, &tiny_data(&pair), &short_schedule(), &encoder, &prior, &config).unwrap();
        assert_eq!(history.records.len(), 6);
        let first = history.initial_total().unwrap();
        let last = history.final_total().unwrap();
        assert!(last < first, "{first} -> {last}");
        assert!(history.records.iter().all(|r| (r.losses.total - r.losses.reconstruction).abs() < 1e-6));
    }

    #[test]
    fn frozen_encoder_is_untouched_by_training() {
        let (mut den, pair) = tiny_denoiser(Architecture::Symmetric, DType::F32);
        let encoder = tiny_encoder(&pair, DType::F32);
        let before = encoder.params().snapshot().unwrap();
        let den_before = den.params().snapshot().unwrap();
        let prior = tiny_prior(8);
        let config = DiffusionTrainConfig { steps: 2, batch: 2, ..Default::default() };
        train_diffusion(&mut den, &tiny_data(&pair), &short_schedule(), &encoder, &prior, &config).unwrap();
        let after = encoder.params().snapshot().unwrap();
        for (name, t) in &before {
            let diff = (t - &after[name]).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
            assert_eq!(diff, 0.0, "{name} moved");
        }
        let moved = den_before.iter().any(|(name, t)| {
            let now = &den.params().snapshot().unwrap()[name];
            (t - now).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap() > 0.0
        });
        assert!(moved);
    }

    #[test]
    fn training_is_deterministic_and_validates_inputs() {
        let run = || {
            let (mut den, pair) = tiny_denoiser(Architecture::NonFixed, DType::F32);
            let encoder = tiny_encoder(&pair, DType::F32);
            let config = DiffusionTrainConfig { steps: 3, batch: 2, log_every: 1, ..Default::default() };
            let h = train_diffusion(&mut den, &tiny_data(&pair), &short_schedule(), &encoder, &tiny_prior(8), &config).unwrap();
            (h, den.params().snapshot().unwrap())
        };
        let (h1, p1) = run();
        let (h2, p2) = run();
        assert_eq!(h1, h2);
        for (name, t) in &p1 {
            assert_eq!(t.flatten_all().unwrap().to_vec1::<f32>().unwrap(), p2[name].flatten_all().unwrap().to_vec1::<f32>().unwrap());
        }

        let (mut den, pair) = tiny_denoiser(Architecture::Symmetric, DType::F32);
        let trainable = EmotionEncoder::new(tiny_encoder(&pair, DType::F32).config().clone(), den.normalizer().clone(), 1, DType::F32).unwrap();
        let config = DiffusionTrainConfig { steps: 1, batch: 1, ..Default::default() };
        let schedule = short_schedule();
        assert!(train_diffusion(&mut den, &tiny_data(&pair), &schedule, &trainable, &tiny_prior(8), &config).is_err());
        let frozen = tiny_encoder(&pair, DType::F32);
        assert!(train_diffusion(&mut den, &DiffusionData::default(), &schedule, &frozen, &tiny_prior(8), &config).is_err());
        assert!(train_diffusion(&mut den, &tiny_data(&pair), &schedule, &frozen, &tiny_prior(4), &config).is_err());
    }

    #[test]
    fn condition_modes_build_expected_tokens() {
        let prior = tiny_prior(8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let classes = [EmotionLabel::Fear, EmotionLabel::Neutral];
        match condition_for(ConditionMode::OneHot, &prior, &classes, DType::F64, &mut rng).unwrap() {
            Condition::Class(c) => assert_eq!(c, vec![EmotionLabel::Fear.index(), EmotionLabel::Neutral.index()]),
            other => panic!("{other:?}"),
        }
        match condition_for(ConditionMode::Centroid, &prior, &classes, DType::F64, &mut rng).unwrap() {
            Condition::Embedding(e) => {
                let rows = e.to_vec2::<f64>().unwrap();
                assert_eq!(rows[0], prior.mean(EmotionLabel::Fear));
                assert_eq!(rows[1], prior.mean(EmotionLabel::Neutral));
            }
            other => panic!("{other:?}"),
        }
        match condition_for(ConditionMode::Sampled, &prior, &classes, DType::F64, &mut rng).unwrap() {
            Condition::Embedding(e) => {
                let rows = e.to_vec2::<f64>().unwrap();
                assert_ne!(rows[0], prior.mean(EmotionLabel::Fear));
            }
            other => panic!("{other:?}"),
        }
    }
}
