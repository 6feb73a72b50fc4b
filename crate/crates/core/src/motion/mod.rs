//! Skeletal motion representation.
//!
//! A frame of motion is the concatenation `[j, v, r, f]`: global joint
//! positions (3N), global joint velocities (3N), parent-local 6D rotations of
//! every non-root joint (6(N-1)) and four foot-contact flags, giving a feature
//! dimension of `12N - 2`. Positions are in meters with `+y` up and the rest
//! pose facing `+z`.

mod features;
pub mod file;
mod kinematics;
mod rotation;
mod skeleton;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{bail_shape, bail_validation, Error, Result};

pub use features::{decode_positions, detect_foot_contacts, encode_sequence, ContactThresholds};
pub use kinematics::{forward_kinematics, forward_kinematics_rooted};
pub use rotation::{
    axis_angle, euler_zyx_from_matrix, rot6d_from_matrix, rot6d_to_matrix, Rot6d,
    ORTHONORMAL_TOLERANCE,
};
pub use skeleton::SkeletonSpec;

/// Number of emotion categories.
pub const NUM_EMOTIONS: usize = 7;

/// The seven emotion categories, in canonical (index) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Anger,
    Disgust,
    Fear,
    Happiness,
    Neutral,
    Sadness,
    Surprise,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; NUM_EMOTIONS] = [
        EmotionLabel::Anger,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Happiness,
        EmotionLabel::Neutral,
        EmotionLabel::Sadness,
        EmotionLabel::Surprise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL.get(index).copied().ok_or_else(|| {
            Error::Validation(format!(
                "emotion index {index} out of range 0..{NUM_EMOTIONS}"
            ))
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Anger => "anger",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Fear => "fear",
            EmotionLabel::Happiness => "happiness",
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Sadness => "sadness",
            EmotionLabel::Surprise => "surprise",
        }
    }

    /// Comma-separated list of valid names, for error messages.
    pub fn valid_names() -> String {
        Self::ALL.map(|e| e.name()).join(", ")
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|e| e.name() == lower)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown emotion '{s}'; expected one of: {}",
                    Self::valid_names()
                ))
            })
    }
}

/// Column ranges of the per-frame feature vector for an `N`-joint skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    joints: usize,
}

impl FeatureLayout {
    pub fn new(joints: usize) -> Self {
        Self { joints }
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn dim(&self) -> usize {
        12 * self.joints - 2
    }

    pub fn positions(&self) -> std::ops::Range<usize> {
        0..3 * self.joints
    }

    pub fn velocities(&self) -> std::ops::Range<usize> {
        3 * self.joints..6 * self.joints
    }

    pub fn rotations(&self) -> std::ops::Range<usize> {
        6 * self.joints..12 * self.joints - 6
    }

    pub fn contacts(&self) -> std::ops::Range<usize> {
        12 * self.joints - 6..12 * self.joints - 2
    }
}

/// `L` frames of `[j, v, r, f]` features sampled at `fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    frames: Array2<f64>,
    fps: f64,
    skeleton: Arc<SkeletonSpec>,
}

impl MotionSequence {
    pub fn new(frames: Array2<f64>, fps: f64, skeleton: Arc<SkeletonSpec>) -> Result<Self> {
        let (len, dim) = frames.dim();
        if len < 2 {
            bail_validation!("motion sequence needs at least 2 frames, got {len}");
        }
        if dim != skeleton.feature_dim() {
            bail_shape!(
                "feature dimension {dim} does not match skeleton ({} joints -> {})",
                skeleton.joint_count(),
                skeleton.feature_dim()
            );
        }
        if !(fps.is_finite() && fps > 0.0) {
            bail_validation!("fps must be positive, got {fps}");
        }
        if let Some(pos) = frames.iter().position(|v| !v.is_finite()) {
            bail_validation!(
                "non-finite value at frame {}, feature {}",
                pos / dim,
                pos % dim
            );
        }
        Ok(Self {
            frames,
            fps,
            skeleton,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn skeleton(&self) -> &Arc<SkeletonSpec> {
        &self.skeleton
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::new(self.skeleton.joint_count())
    }

    pub fn frames(&self) -> ArrayView2<'_, f64> {
        self.frames.view()
    }

    pub fn frame(&self, i: usize) -> ArrayView1<'_, f64> {
        self.frames.row(i)
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    /// Contiguous sub-window `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if len < 2 || start + len > self.len() {
            bail_validation!(
                "window [{start}, {}) invalid for sequence of {} frames",
                start + len,
                self.len()
            );
        }
        Ok(Self {
            frames: self.frames.slice(s![start..start + len, ..]).to_owned(),
            fps: self.fps,
            skeleton: self.skeleton.clone(),
        })
    }

    /// Mean joint speed (m/s) from the velocity channel.
    pub fn mean_joint_speed(&self) -> f64 {
        let layout = self.layout();
        let n = layout.joints();
        let vel = self.frames.slice(s![.., layout.velocities()]);
        let mut total = 0.0;
        for row in vel.rows() {
            for j in 0..n {
                let (x, y, z) = (row[3 * j], row[3 * j + 1], row[3 * j + 2]);
                total += (x * x + y * y + z * z).sqrt();
            }
        }
        total / (self.len() * n) as f64
    }
}

/// An actor/reactor pair sharing one skeleton, length and world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionPair {
    pub actor: MotionSequence,
    pub reactor: MotionSequence,
    pub emotion: Option<EmotionLabel>,
}

impl InteractionPair {
    pub fn new(
        actor: MotionSequence,
        reactor: MotionSequence,
        emotion: Option<EmotionLabel>,
    ) -> Result<Self> {
        if actor.len() != reactor.len() {
            bail_shape!(
                "actor has {} frames but reactor has {}",
                actor.len(),
                reactor.len()
            );
        }
        if actor.skeleton() != reactor.skeleton() {
            bail_validation!("actor and reactor must share one skeleton");
        }
        if actor.fps() != reactor.fps() {
            bail_validation!("actor and reactor frame rates differ");
        }
        Ok(Self {
            actor,
            reactor,
            emotion,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_dim_is_12n_minus_2() {
        for n in [1, 5, 16, 22] {
            let layout = FeatureLayout::new(n);
            assert_eq!(layout.dim(), 12 * n - 2);
            assert_eq!(layout.contacts().end, layout.dim());
            assert_eq!(layout.rotations().len(), 6 * (n - 1));
        }
        assert_eq!(FeatureLayout::new(22).dim(), 262);
    }

    #[test]
    fn emotion_names_round_trip() {
        for e in EmotionLabel::ALL {
            assert_eq!(e.name().parse::<EmotionLabel>().unwrap(), e);
            assert_eq!(EmotionLabel::from_index(e.index()).unwrap(), e);
        }
        let err = "joy".parse::<EmotionLabel>().unwrap_err().to_string();
        for name in [
            "anger",
            "disgust",
            "fear",
            "happiness",
            "neutral",
            "sadness",
            "surprise",
        ] {
            assert!(err.contains(name), "{err}");
        }
    }

    #[test]
    fn sequence_rejects_bad_shapes() {
        let sk = Arc::new(SkeletonSpec::chain(3, 0.5).unwrap());
        let ok = Array2::<f64>::zeros((4, sk.feature_dim()));
        assert!(MotionSequence::new(ok.clone(), 20.0, sk.clone()).is_ok());
        let short = Array2::<f64>::zeros((1, sk.feature_dim()));
        assert!(MotionSequence::new(short, 20.0, sk.clone()).is_err());
        let wide = Array2::<f64>::zeros((4, sk.feature_dim() + 1));
        assert!(matches!(
            MotionSequence::new(wide, 20.0, sk.clone()),
            Err(Error::Shape(_))
        ));
        let mut nan = ok;
        nan[[2, 3]] = f64::NAN;
        assert!(MotionSequence::new(nan, 20.0, sk).is_err());
    }
}
