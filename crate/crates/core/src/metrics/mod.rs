//! Evaluation over frozen-encoder features: FID, diversity, multimodality
//! and emotion accuracy, plus the end-to-end evaluation protocol.

mod accuracy;
mod diversity;
mod evaluate;
mod features;
mod fid;

pub use accuracy::{accuracy, accuracy_from_predictions, EmotionClassifier};
pub use diversity::{diversity, multimodality, DEFAULT_DIVERSITY_PAIRS, DEFAULT_MULTIMODALITY_PAIRS};
pub use evaluate::{bootstrap_std, evaluate, evaluate_ground_truth, report_from_features, EvalConfig, MetricReport, MetricStd, ReportCounts};
pub use features::FeatureSet;
pub use fid::{fid, frechet_distance, gaussian_stats, COVARIANCE_RIDGE};
