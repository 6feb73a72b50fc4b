//! File names of the artifacts each command writes.

pub const ENCODER_DIR: &str = "encoder";
pub const PRIOR_FILE: &str = "prior.json";
pub const PRIOR_LOG_FILE: &str = "prior_log.json";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const SWEEP_FILE: &str = "sweep.json";

pub const DENOISER_DIR: &str = "denoiser";
pub const SCHEDULE_FILE: &str = "schedule.json";
pub const DIFFUSION_LOG_FILE: &str = "diffusion_log.json";

pub const REACTOR_FILE: &str = "reactor.emo";
pub const ACTOR_FILE: &str = "actor.emo";
pub const META_FILE: &str = "meta.json";

pub const REPORT_FILE: &str = "report.json";
pub const AGREEMENT_FILE: &str = "cluster_agreement.json";
