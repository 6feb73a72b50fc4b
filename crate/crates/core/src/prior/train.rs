use candle_core::{Device, Tensor};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cross_entropy_from_logits, loss_consistency, EmotionEncoder};
use crate::error::{bail_validation, Error, Result};
use crate::motion::{EmotionLabel, MotionSequence};
use crate::nn::{stack_rows, Ctx, Optimizer};
use crate::synth::{resample_clips, Dataset, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorTrainConfig {
    pub epochs: usize,
    pub labeled_batch: usize,
    /// Unlabeled sequences per step; each contributes `C(k, 2)` clip pairs.
    pub unlabeled_batch: usize,
    pub clips_per_sequence: usize,
    /// Clip length in frames; half the parent length when unset.
    pub clip_len: Option<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip: Option<f64>,
    pub ce_weight: f64,
    pub consistency_weight: f64,
    /// Epochs over which the consistency weight ramps linearly up to
    /// `consistency_weight`; 0 applies the full weight from the start.
    pub consistency_rampup: usize,
    /// Evaluate every this many epochs (and after the last one).
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for PriorTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            labeled_batch: 32,
            unlabeled_batch: 16,
            clips_per_sequence: 2,
            clip_len: None,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            grad_clip: Some(1.0),
            ce_weight: 1.0,
            consistency_weight: 1.0,
            consistency_rampup: 5,
            eval_every: 5,
            seed: 0,
        }
    }
}

/// Training material for the encoder. Both roles of a labeled pair carry the
/// pair's emotion.
#[derive(Debug, Clone, Default)]
pub struct EncoderData {
    pub labeled: Vec<(MotionSequence, EmotionLabel)>,
    pub unlabeled: Vec<MotionSequence>,
    pub eval: Vec<(MotionSequence, EmotionLabel)>,
}

impl EncoderData {
    /// Loads every split; `unlabeled_limit` keeps only the first that many
    /// unlabeled pairs (`Some(0)` for supervised-only training).
    pub fn from_dataset(dataset: &Dataset, unlabeled_limit: Option<usize>) -> Result<Self> {
        let labeled_roles = |split| -> Result<Vec<(MotionSequence, EmotionLabel)>> {
            let mut out = Vec::new();
            for item in dataset.load(split)? {
                let e = item
                    .pair
                    .emotion
                    .ok_or_else(|| Error::Validation(format!("{} lacks a label", item.id)))?;
                out.push((item.pair.actor, e));
                out.push((item.pair.reactor, e));
            }
            Ok(out)
        };
        let mut unlabeled_items = dataset.load(Split::UnlabeledTrain)?;
        if let Some(n) = unlabeled_limit {
            unlabeled_items.truncate(n);
        }
        Ok(Self {
            labeled: labeled_roles(Split::LabeledTrain)?,
            unlabeled: unlabeled_items
                .into_iter()
                .flat_map(|i| [i.pair.actor, i.pair.reactor])
                .collect(),
            eval: labeled_roles(Split::Eval)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorRecord {
    pub epoch: usize,
    pub loss_ce: f64,
    pub loss_consistency: f64,
    pub loss_total: f64,
    pub eval_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorHistory {
    pub records: Vec<PriorRecord>,
    pub best_epoch: Option<usize>,
    pub best_accuracy: Option<f64>,
}

/// Fraction of motions whose arg-max class matches the label.
pub fn evaluate_accuracy(
    encoder: &EmotionEncoder,
    data: &[(MotionSequence, EmotionLabel)],
) -> Result<f64> {
    if data.is_empty() {
        bail_validation!("accuracy needs at least one example");
    }
    let motions: Vec<&MotionSequence> = data.iter().map(|(m, _)| m).collect();
    let predicted = encoder.predict_batch(&motions)?;
    let correct = predicted
        .iter()
        .zip(data)
        .filter(|(p, (_, e))| **p == e.index())
        .count();
    Ok(correct as f64 / data.len() as f64)
}

fn step_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (step as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Semi-supervised encoder training: cross-entropy on labeled batches plus
/// clip consistency on unlabeled batches. Keeps the parameters of the epoch
/// with the best eval accuracy when an eval set is given.
pub fn train_prior_encoder(
    encoder: &mut EmotionEncoder,
    data: &EncoderData,
    config: &PriorTrainConfig,
) -> Result<PriorHistory> {
    if data.labeled.is_empty() {
        bail_validation!("labeled set is empty");
    }
    if config.labeled_batch == 0 || config.epochs == 0 {
        bail_validation!("labeled_batch and epochs must be positive");
    }
    let mut opt = Optimizer::new(
        encoder.params().vars(),
        config.learning_rate,
        config.weight_decay,
        config.grad_clip,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dtype = encoder.dtype();
    let mut history = PriorHistory::default();
    let mut best = None;
    let mut order: Vec<usize> = (0..data.labeled.len()).collect();
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let con_weight = if config.consistency_rampup == 0 {
            config.consistency_weight
        } else {
            config.consistency_weight
                * ((epoch + 1) as f64 / config.consistency_rampup as f64).min(1.0)
        };
        let (mut sum_ce, mut sum_con, mut sum_total, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(config.labeled_batch) {
            let mut ctx = Ctx::train(step_seed(config.seed, step));
            let views: Vec<_> = chunk.iter().map(|&i| data.labeled[i].0.frames()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labeled[i].1.index()).collect();
            let x = stack_rows(&views, dtype, &Device::Cpu)?;
            let logits = encoder.logits(&encoder.forward(&x, &mut ctx)?)?;
            let ce = cross_entropy_from_logits(&logits, &labels)?;
            let mut total = (&ce * config.ce_weight)?;
            let mut con_value = 0.0;
            if !data.unlabeled.is_empty() && config.unlabeled_batch > 0 {
                let con = consistency_batch(encoder, data, config, &mut rng, &mut ctx)?;
                con_value = scalar(&con)?;
                total = (total + (con * con_weight)?)?;
            }
            let total_value = scalar(&total)?;
            if !total_value.is_finite() {
                return Err(Error::Numerical(format!(
                    "prior loss became {total_value} at epoch {epoch}"
                )));
            }
            opt.step(&total)?;
            sum_ce += scalar(&ce)?;
            sum_con += con_value;
            sum_total += total_value;
            batches += 1;
            step += 1;
        }
        let n = batches as f64;
        let evaluate = !data.eval.is_empty()
            && ((epoch + 1) % config.eval_every.max(1) == 0 || epoch + 1 == config.epochs);
        let eval_accuracy = if evaluate {
            Some(evaluate_accuracy(encoder, &data.eval)?)
        } else {
            None
        };
        log::info!(
            "prior epoch {epoch}: ce {:.4} con {:.4}{}",
            sum_ce / n,
            sum_con / n,
            eval_accuracy.map(|a| format!(" eval acc {a:.3}")).unwrap_or_default()
        );
        if let Some(acc) = eval_accuracy {
            if history.best_accuracy.is_none_or(|b| acc > b) {
                history.best_accuracy = Some(acc);
                history.best_epoch = Some(epoch);
                best = Some(encoder.params().snapshot()?);
            }
        }
        history.records.push(PriorRecord {
            epoch,
            loss_ce: sum_ce / n,
            loss_consistency: sum_con / n,
            loss_total: sum_total / n,
            eval_accuracy,
        });
    }
    if let Some(snapshot) = best {
        encoder.params().restore(&snapshot)?;
    }
    Ok(history)
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?)
}

fn consistency_batch(
    encoder: &EmotionEncoder,
    data: &EncoderData,
    config: &PriorTrainConfig,
    rng: &mut ChaCha8Rng,
    ctx: &mut Ctx,
) -> Result<Tensor> {
    let k = config.clips_per_sequence;
    let picked: Vec<&MotionSequence> = data
        .unlabeled
        .choose_multiple(rng, config.unlabeled_batch)
        .collect();
    let mut clips = Vec::with_capacity(picked.len() * k);
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (s, seq) in picked.iter().enumerate() {
        let clip_len = config.clip_len.unwrap_or(seq.len() / 2).max(2);
        let pairs = resample_clips(seq, "", k, clip_len, rng)?;
        let base = (s * k) as u32;
        // Pairs enumerate (i, j) with i < j over the k clips; recover the k
        // windows from the first clip of each index.
        let mut windows = vec![None; k];
        let mut p = 0;
        for i in 0..k {
            for j in i + 1..k {
                windows[i].get_or_insert_with(|| pairs[p].first.clone());
                windows[j].get_or_insert_with(|| pairs[p].second.clone());
                left.push(base + i as u32);
                right.push(base + j as u32);
                p += 1;
            }
        }
        clips.extend(windows.into_iter().map(|w| w.expect("k >= 2")));
    }
    let views: Vec<_> = clips.iter().map(|c| c.frames()).collect();
    let x = stack_rows(&views, encoder.dtype(), &Device::Cpu)?;
    let e = encoder.forward(&x, ctx)?;
    let dev = Device::Cpu;
    let a = e.index_select(&Tensor::new(left.as_slice(), &dev)?, 0)?;
    let b = e.index_select(&Tensor::new(right.as_slice(), &dev)?, 0)?;
    loss_consistency(&a, &b)
}
