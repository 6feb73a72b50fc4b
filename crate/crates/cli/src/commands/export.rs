use std::sync::Arc;

use ereact_core::motion::file::read_motion_blob;
use ereact_core::motion::{MotionSequence, SkeletonSpec};
use ereact_core::synth::{Dataset, DatasetConfig};

use super::{read_json, require, ExportArgs, Session};
use crate::error::{CliError, Result};
use crate::export::export;

pub(super) fn run(session: &Session, args: &ExportArgs) -> Result<()> {
    require(&args.motion)?;
    let (mut skeleton, mut fps) = (SkeletonSpec::humanoid(), DatasetConfig::default().fps);
    if let Some(dir) = &args.dataset {
        let dataset = Dataset::open(dir)?;
        skeleton = dataset.skeleton().as_ref().clone();
        fps = dataset.manifest().fps;
    }
    if let Some(path) = &args.skeleton {
        skeleton = read_json(path)?;
    }
    if let Some(f) = args.fps {
        fps = f;
    }
    let frames = read_motion_blob(&args.motion)?;
    let motion = MotionSequence::new(frames, fps, Arc::new(skeleton))?;
    let out = session.out_dir()?;
    let stem = args
        .motion
        .file_stem()
        .ok_or_else(|| CliError::Usage(format!("{} has no file name", args.motion.display())))?;
    let path = out.join(stem).with_extension(args.format.extension());
    export(&motion, args.format, &path)?;
    session.config.write_resolved(out)?;
    println!("exported {} ({} frames)", path.display(), motion.len());
    Ok(())
}
