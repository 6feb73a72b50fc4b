use ereact_core::synth::make_dataset;

use super::Session;
use crate::error::Result;

pub(super) fn run(session: &Session) -> Result<()> {
    let out = session.out_dir()?;
    let manifest = make_dataset(&session.config.dataset, out)?;
    session.config.write_resolved(out)?;
    let c = manifest.counts;
    println!(
        "dataset {}: {} labeled, {} unlabeled, {} eval sequences of {} frames at {} fps",
        out.display(),
        c.labeled_train,
        c.unlabeled_train,
        c.eval,
        manifest.length,
        manifest.fps
    );
    Ok(())
}
