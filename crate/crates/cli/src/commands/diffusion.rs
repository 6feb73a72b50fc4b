use std::path::Path;

use candle_core::DType;
use ereact_core::diffusion::{
    train_diffusion, DiffusionData, DiffusionHistory, DiffusionSchedule, FeatureStats, ReactionDenoiser,
    ScheduleConfig,
};
use ereact_core::motion::InteractionPair;
use ereact_core::prior::{EmotionEncoder, EmotionPrior};
use ereact_core::synth::Dataset;

use super::{read_json, require, write_json, Session, TrainDiffusionArgs};
use crate::error::{CliError, Result};
use crate::layout;

pub(crate) fn load_prior_artifacts(dir: &Path) -> Result<(EmotionEncoder, EmotionPrior)> {
    let enc_dir = dir.join(layout::ENCODER_DIR);
    let prior_path = dir.join(layout::PRIOR_FILE);
    require(&enc_dir)?;
    require(&prior_path)?;
    Ok((EmotionEncoder::load(&enc_dir, DType::F32)?, EmotionPrior::load(&prior_path)?))
}

pub(crate) fn load_schedule(dir: &Path) -> Result<DiffusionSchedule> {
    let config: ScheduleConfig = read_json(&dir.join(layout::SCHEDULE_FILE))?;
    Ok(DiffusionSchedule::new(&config)?)
}

pub(super) fn run(session: &Session, args: &TrainDiffusionArgs) -> Result<()> {
    let mut config = session.config.clone();
    if let Some(c) = args.condition {
        config.denoiser.condition = c.into();
    }
    if let Some(a) = args.architecture {
        config.denoiser.architecture = a.into();
    }
    if let Some(steps) = args.steps {
        config.diffusion_train.steps = steps;
    }
    let (encoder, prior) = load_prior_artifacts(&args.prior)?;
    let dataset = Dataset::open(&args.dataset)?;
    let length = dataset.manifest().length;
    if length > config.denoiser.max_len {
        return Err(CliError::Usage(format!(
            "dataset sequences have {length} frames but denoiser.max_len is {}",
            config.denoiser.max_len
        )));
    }
    let schedule = DiffusionSchedule::new(&config.schedule)?;
    let out = session.out_dir()?;

    let data = DiffusionData::from_dataset(&dataset, &encoder, config.diffusion_train.use_unlabeled)?;
    let pairs: Vec<&InteractionPair> = data.pairs.iter().map(|(p, _)| p).collect();
    let stats = FeatureStats::fit(&pairs)?;
    let mut denoiser = ReactionDenoiser::new(
        config.denoiser.clone(),
        encoder.latent_dim(),
        dataset.skeleton().as_ref().clone(),
        dataset.manifest().fps,
        stats,
        config.diffusion_train.seed,
        DType::F32,
    )?;
    log::info!(
        "training {:?}/{:?} denoiser on {} pairs for {} steps",
        config.denoiser.architecture,
        config.denoiser.condition,
        data.pairs.len(),
        config.diffusion_train.steps
    );
    let history: DiffusionHistory = train_diffusion(&mut denoiser, &data, &schedule, &encoder, &prior, &config.diffusion_train)?;

    denoiser.save(&out.join(layout::DENOISER_DIR))?;
    write_json(&out.join(layout::SCHEDULE_FILE), &config.schedule)?;
    write_json(&out.join(layout::DIFFUSION_LOG_FILE), &history)?;
    config.write_resolved(out)?;
    println!(
        "denoiser {}: loss {:.4} -> {:.4} over {} steps",
        out.display(),
        history.initial_total().unwrap_or(f64::NAN),
        history.final_total().unwrap_or(f64::NAN),
        config.diffusion_train.steps
    );
    Ok(())
}
