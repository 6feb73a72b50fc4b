//! Emotion-driven human reaction generation.
//!
//! The crate is organised bottom-up:
//!
//! * [`motion`]: skeletons, per-frame features, 6D rotations, forward kinematics
//!   and the on-disk motion blob format.
//! * [`synth`]: procedural two-person interaction data with emotion styles.
//! * [`nn`]: small transformer building blocks on top of `candle`.
//! * [`prior`]: the semi-supervised emotion encoder and the per-class Gaussian prior.
//! * [`diffusion`]: noise schedule, actor-reactor denoiser, losses, samplers.
//! * [`metrics`]: FID, diversity, multimodality and accuracy.

pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod motion;
pub mod nn;
pub mod prior;
pub mod synth;

pub use error::{Error, Result};
