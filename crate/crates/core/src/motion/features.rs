use std::sync::Arc;

use nalgebra::Matrix3;
use ndarray::{Array2, Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use super::{rot6d_from_matrix, FeatureLayout, MotionSequence, SkeletonSpec};
use crate::error::{bail_shape, bail_validation, Result};

/// A foot joint is in contact when it is below `height` (m) and slower than
/// `speed` (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactThresholds {
    pub height: f64,
    pub speed: f64,
}

impl Default for ContactThresholds {
    fn default() -> Self {
        Self {
            height: 0.05,
            speed: 0.10,
        }
    }
}

/// Forward-difference velocity of `positions` (L, N, 3) scaled by `fps`; the
/// last frame repeats the second-to-last.
fn finite_difference(positions: &ArrayView3<f64>, fps: f64) -> Array3<f64> {
    let (l, n, _) = positions.dim();
    let mut vel = Array3::zeros((l, n, 3));
    for i in 0..l - 1 {
        for j in 0..n {
            for c in 0..3 {
                vel[[i, j, c]] = (positions[[i + 1, j, c]] - positions[[i, j, c]]) * fps;
            }
        }
    }
    for j in 0..n {
        for c in 0..3 {
            vel[[l - 1, j, c]] = vel[[l - 2, j, c]];
        }
    }
    vel
}

pub fn detect_foot_contacts(
    positions: ArrayView3<f64>,
    foot_joints: [usize; 4],
    height_thresh: f64,
    vel_thresh: f64,
    fps: f64,
) -> Result<Array2<f64>> {
    let (l, n, c) = positions.dim();
    if c != 3 {
        bail_shape!("positions must be (L, N, 3), got trailing dimension {c}");
    }
    if l < 2 {
        bail_validation!("contact detection needs at least 2 frames, got {l}");
    }
    if !(height_thresh > 0.0 && vel_thresh > 0.0 && fps > 0.0) {
        bail_validation!(
            "thresholds and fps must be positive (height {height_thresh}, speed {vel_thresh}, fps {fps})"
        );
    }
    if let Some(bad) = foot_joints.iter().find(|&&f| f >= n) {
        bail_validation!("foot joint {bad} out of range for {n} joints");
    }
    let vel = finite_difference(&positions, fps);
    let mut flags = Array2::zeros((l, 4));
    for i in 0..l {
        for (k, &joint) in foot_joints.iter().enumerate() {
            let height = positions[[i, joint, 1]];
            let speed = (0..3)
                .map(|c| vel[[i, joint, c]].powi(2))
                .sum::<f64>()
                .sqrt();
            if height < height_thresh && speed < vel_thresh {
                flags[[i, k]] = 1.0;
            }
        }
    }
    Ok(flags)
}

/// Builds `[j, v, r, f]` features from global positions `(L, N, 3)` and
/// parent-local rotations of the non-root joints.
pub fn encode_sequence(
    positions: ArrayView3<f64>,
    local_rotations: &[Vec<Matrix3<f64>>],
    skeleton: Arc<SkeletonSpec>,
    fps: f64,
    thresholds: ContactThresholds,
) -> Result<MotionSequence> {
    let (l, n, c) = positions.dim();
    if n != skeleton.joint_count() || c != 3 {
        bail_shape!(
            "positions are ({l}, {n}, {c}); skeleton needs ({l}, {}, 3)",
            skeleton.joint_count()
        );
    }
    if l < 2 {
        bail_validation!("motion sequence needs at least 2 frames, got {l}");
    }
    if local_rotations.len() != l {
        bail_shape!("{} rotation frames for {l} position frames", local_rotations.len());
    }
    if positions.iter().any(|v| !v.is_finite()) {
        bail_validation!("non-finite joint position");
    }
    let layout = FeatureLayout::new(n);
    let contacts = detect_foot_contacts(
        positions,
        skeleton.foot_joints(),
        thresholds.height,
        thresholds.speed,
        fps,
    )?;
    let vel = finite_difference(&positions, fps);
    let mut frames = Array2::zeros((l, layout.dim()));
    for i in 0..l {
        let rots = &local_rotations[i];
        if rots.len() != n - 1 {
            bail_shape!("frame {i}: {} rotations for {} non-root joints", rots.len(), n - 1);
        }
        let mut row = frames.row_mut(i);
        for j in 0..n {
            for c in 0..3 {
                row[3 * j + c] = positions[[i, j, c]];
                row[layout.velocities().start + 3 * j + c] = vel[[i, j, c]];
            }
        }
        let r0 = layout.rotations().start;
        for (k, r) in rots.iter().enumerate() {
            let d = rot6d_from_matrix(r)?;
            for (m, v) in d.iter().enumerate() {
                row[r0 + 6 * k + m] = *v;
            }
        }
        let f0 = layout.contacts().start;
        for k in 0..4 {
            row[f0 + k] = contacts[[i, k]];
        }
    }
    MotionSequence::new(frames, fps, skeleton)
}

/// The `j` channel reshaped to `(L, N, 3)`.
pub fn decode_positions(motion: &MotionSequence) -> Array3<f64> {
    let n = motion.skeleton().joint_count();
    let l = motion.len();
    let mut out = Array3::zeros((l, n, 3));
    for i in 0..l {
        let row = motion.frame(i);
        for j in 0..n {
            for c in 0..3 {
                out[[i, j, c]] = row[3 * j + c];
            }
        }
    }
    out
}
