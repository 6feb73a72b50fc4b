//! Procedural two-person interactions with emotion-specific motion styles.
//!
//! The actor walks toward the reactor and gestures; the reactor responds by
//! approaching or retreating and gesturing. Both characters express the pair's
//! emotion through gesture amplitude and frequency, posture and tempo, so the
//! emotion is recoverable from either role.

mod clips;
mod dataset;
mod generator;

use serde::{Deserialize, Serialize};

use crate::motion::EmotionLabel;

pub use clips::{resample_clips, ClipPair};
pub use dataset::{
    make_dataset, sequence_seed, Dataset, DatasetConfig, DatasetItem, DatasetManifest,
    EvaluationAccess, HiddenLabels, ManifestEntry, Split, HIDDEN_LABELS_FILE, MANIFEST_FILE,
};
pub use generator::{generate_pair, PairGenerator, MIN_ROOT_DISTANCE};

/// Motion style of one emotion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    /// Peak hand excursion of gestures (m).
    pub gesture_amplitude: f64,
    /// Gesture oscillation frequency (Hz).
    pub gesture_frequency: f64,
    /// Reactor speed along the line to the actor (m/s); negative retreats.
    pub approach_speed: f64,
    /// Forward lean of the spine (rad); negative leans back.
    pub posture_pitch: f64,
    /// Global speed multiplier for locomotion and secondary motion.
    pub tempo: f64,
}

impl StyleParams {
    pub fn for_emotion(emotion: EmotionLabel) -> Self {
        let (a, f, v, p, t) = match emotion {
            EmotionLabel::Anger => (0.35, 2.2, 0.55, 0.20, 1.4),
            EmotionLabel::Disgust => (0.15, 0.9, -0.45, -0.20, 0.9),
            EmotionLabel::Fear => (0.22, 3.0, -0.70, 0.30, 1.2),
            EmotionLabel::Happiness => (0.45, 1.6, 0.30, -0.05, 1.3),
            EmotionLabel::Neutral => (0.10, 0.6, 0.05, 0.0, 1.0),
            EmotionLabel::Sadness => (0.05, 0.4, -0.10, 0.40, 0.6),
            EmotionLabel::Surprise => (0.40, 1.0, -0.25, -0.30, 1.6),
        };
        Self {
            gesture_amplitude: a,
            gesture_frequency: f,
            approach_speed: v,
            posture_pitch: p,
            tempo: t,
        }
    }

    #[cfg(test)]
    fn as_array(&self) -> [f64; 5] {
        [
            self.gesture_amplitude,
            self.gesture_frequency,
            self.approach_speed,
            self.posture_pitch,
            self.tempo,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn styles_are_valid_and_pairwise_distinct() {
        for a in EmotionLabel::ALL {
            let s = StyleParams::for_emotion(a);
            assert!(s.gesture_amplitude > 0.0 && s.gesture_frequency > 0.0 && s.tempo > 0.0);
            for b in EmotionLabel::ALL.into_iter().filter(|b| *b > a) {
                let t = StyleParams::for_emotion(b);
                let differing = s
                    .as_array()
                    .iter()
                    .zip(t.as_array())
                    .filter(|(x, y)| (*x - y).abs() > 1e-9)
                    .count();
                assert!(differing >= 2, "{a} vs {b}");
            }
        }
    }
}
