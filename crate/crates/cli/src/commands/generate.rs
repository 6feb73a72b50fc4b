use std::path::Path;
use std::sync::Arc;

use candle_core::DType;
use ereact_core::diffusion::{GenerationMode, GenerationRequest, Models, ReactionDenoiser};
use ereact_core::motion::file::{read_motion_blob, write_motion_blob};
use ereact_core::motion::{EmotionLabel, MotionSequence};

use super::diffusion::{load_prior_artifacts, load_schedule};
use super::{require, GenerateArgs, Session};
use crate::error::{CliError, Result};
use crate::export::export;
use crate::layout;

pub(crate) fn load_models(prior_dir: &Path, diffusion_dir: &Path) -> Result<Models> {
    let (encoder, prior) = load_prior_artifacts(prior_dir)?;
    let den_dir = diffusion_dir.join(layout::DENOISER_DIR);
    require(&den_dir)?;
    let denoiser = ReactionDenoiser::load(&den_dir, DType::F32)?;
    let schedule = load_schedule(diffusion_dir)?;
    Ok(Models::new(encoder, prior, denoiser, schedule)?)
}

/// Reads a motion blob in the denoiser's skeleton and frame rate.
pub(crate) fn read_actor(path: &Path, denoiser: &ReactionDenoiser) -> Result<MotionSequence> {
    require(path)?;
    let frames = read_motion_blob(path)?;
    Ok(MotionSequence::new(frames, denoiser.fps(), Arc::new(denoiser.skeleton().clone()))?)
}

fn mode(args: &GenerateArgs) -> Result<GenerationMode> {
    Ok(match (&args.emotion, args.empathetic, args.unconditional) {
        (Some(name), false, false) => GenerationMode::Edited(name.parse::<EmotionLabel>()?),
        (None, true, false) => GenerationMode::Empathetic,
        (None, false, true) => GenerationMode::Unconditional,
        _ => return Err(CliError::Usage("choose one of --emotion, --empathetic, --unconditional".into())),
    })
}

pub(super) fn run(session: &Session, args: &GenerateArgs) -> Result<()> {
    let mode = mode(args)?;
    let sampler = args.sampler.resolve(session.config.metrics.sampler)?;
    let models = load_models(&args.prior, &args.diffusion)?;
    let actor = read_actor(&args.actor, &models.denoiser)?;
    let seed = session.config.metrics.seed;
    let out = session.out_dir()?;
    let generated = models.generate(&GenerationRequest { actor: actor.clone(), mode, sampler, seed })?;

    write_motion_blob(&out.join(layout::REACTOR_FILE), generated.reactor.frames())?;
    let actor_copy = out.join(layout::ACTOR_FILE);
    std::fs::copy(&args.actor, &actor_copy).map_err(|e| CliError::io(&actor_copy, e))?;
    generated.meta.save(&out.join(layout::META_FILE))?;
    if let Some(format) = args.export {
        export(&generated.reactor, format, &out.join(format!("reactor.{}", format.extension())))?;
        export(&actor, format, &out.join(format!("actor.{}", format.extension())))?;
    }
    session.config.write_resolved(out)?;
    println!(
        "generated {}: emotion {}",
        out.join(layout::REACTOR_FILE).display(),
        generated.meta.emotion.map_or("none", EmotionLabel::name)
    );
    Ok(())
}
