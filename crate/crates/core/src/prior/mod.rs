//! Emotion encoder, its semi-supervised training and the per-class Gaussian
//! prior over its class-token space.

mod encoder;
mod fit;
mod losses;
mod train;

pub use encoder::{argmax, EmotionEmbedding, EmotionEncoder, EncoderConfig};
pub use fit::{
    cluster_agreement, fit_prior, fit_prior_from_embeddings, sample_emotion, EmotionPrior,
    PriorFit, KMEANS_MAX_ITERS, VARIANCE_FLOOR,
};
pub use losses::{
    consistency_distance, cross_entropy_from_logits, loss_consistency, loss_cross_entropy,
    PROBABILITY_FLOOR,
};
pub use train::{
    evaluate_accuracy, train_prior_encoder, EncoderData, PriorHistory, PriorRecord,
    PriorTrainConfig,
};

