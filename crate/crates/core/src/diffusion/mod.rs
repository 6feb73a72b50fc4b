//! Actor-reactor diffusion: the noise schedule, the paired-stream x0
//! denoiser, its loss stack, DDPM/DDIM samplers and generation modes.

mod denoiser;
mod generate;
mod losses;
mod sampling;
mod schedule;
mod train;

pub use denoiser::{
    Architecture, Condition, ConditionMode, DenoiserConfig, FeatureStats, LossWeights, ReactionDenoiser,
};
pub use generate::{
    Generated, GenerationMeta, GenerationMode, GenerationRequest, Models, Sampler, DEFAULT_DDIM_STEPS,
};
pub use losses::{
    distance_map, emotion_alignment, interaction_distance_map, loss_emotion, loss_geometric, loss_react,
    loss_reconstruction, GeometricLosses, Geometry,
};
pub use sampling::{ddim_timesteps, gaussian_like, sample_ddim, sample_ddpm, X0Predictor};
pub use schedule::{DiffusionSchedule, ScheduleConfig};
pub use train::{
    condition_for, train_diffusion, training_loss, DiffusionData, DiffusionHistory, DiffusionRecord,
    DiffusionTrainConfig, LossBreakdown, LossContext,
};
