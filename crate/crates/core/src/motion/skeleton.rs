use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{bail_validation, Error, Result};

/// Joint tree shared by both characters.
///
/// Joints are stored in topological order: `parents[0]` is `None` and every
/// other joint's parent has a smaller index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSkeleton", into = "RawSkeleton")]
pub struct SkeletonSpec {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    rest_offsets: Vec<Vector3<f64>>,
    foot_joints: [usize; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSkeleton {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    rest_offsets: Vec<[f64; 3]>,
    foot_joints: [usize; 4],
}

impl TryFrom<RawSkeleton> for SkeletonSpec {
    type Error = Error;

    fn try_from(raw: RawSkeleton) -> Result<Self> {
        SkeletonSpec::new(
            raw.names,
            raw.parents,
            raw.rest_offsets.into_iter().map(Vector3::from).collect(),
            raw.foot_joints,
        )
    }
}

impl From<SkeletonSpec> for RawSkeleton {
    fn from(s: SkeletonSpec) -> Self {
        RawSkeleton {
            names: s.names,
            parents: s.parents,
            rest_offsets: s.rest_offsets.iter().map(|v| [v.x, v.y, v.z]).collect(),
            foot_joints: s.foot_joints,
        }
    }
}

impl SkeletonSpec {
    pub fn new(
        names: Vec<String>,
        parents: Vec<Option<usize>>,
        rest_offsets: Vec<Vector3<f64>>,
        foot_joints: [usize; 4],
    ) -> Result<Self> {
        let n = parents.len();
        if n == 0 {
            bail_validation!("skeleton needs at least one joint");
        }
        if names.len() != n || rest_offsets.len() != n {
            bail_validation!(
                "skeleton arrays disagree: {} names, {} parents, {} offsets",
                names.len(),
                n,
                rest_offsets.len()
            );
        }
        if parents[0].is_some() {
            bail_validation!("joint 0 must be the root (parent = null)");
        }
        for (i, p) in parents.iter().enumerate().skip(1) {
            match p {
                None => bail_validation!("joint {i} has no parent; only joint 0 may be a root"),
                Some(p) if *p >= i => {
                    bail_validation!("joint {i} has parent {p}; parents must precede children")
                }
                Some(_) => {}
            }
            let len = rest_offsets[i].norm();
            if !(len.is_finite() && len > 0.0) {
                bail_validation!("bone ending at joint {i} has non-positive rest length {len}");
            }
        }
        if let Some(bad) = foot_joints.iter().find(|&&f| f >= n) {
            bail_validation!("foot joint {bad} out of range for {n} joints");
        }
        Ok(Self {
            names,
            parents,
            rest_offsets,
            foot_joints,
        })
    }

    /// Generic 22-joint humanoid in a T-pose, pelvis as root.
    pub fn humanoid() -> Self {
        #[rustfmt::skip]
        let joints: [(&str, Option<usize>, [f64; 3]); 22] = [
            ("pelvis", None, [0.0, 0.0, 0.0]),
            ("spine1", Some(0), [0.0, 0.10, 0.0]),
            ("spine2", Some(1), [0.0, 0.12, 0.0]),
            ("spine3", Some(2), [0.0, 0.12, 0.0]),
            ("neck", Some(3), [0.0, 0.12, 0.0]),
            ("head", Some(4), [0.0, 0.10, 0.0]),
            ("left_collar", Some(3), [0.07, 0.08, 0.0]),
            ("left_shoulder", Some(6), [0.11, 0.0, 0.0]),
            ("left_elbow", Some(7), [0.27, 0.0, 0.0]),
            ("left_wrist", Some(8), [0.25, 0.0, 0.0]),
            ("right_collar", Some(3), [-0.07, 0.08, 0.0]),
            ("right_shoulder", Some(10), [-0.11, 0.0, 0.0]),
            ("right_elbow", Some(11), [-0.27, 0.0, 0.0]),
            ("right_wrist", Some(12), [-0.25, 0.0, 0.0]),
            ("left_hip", Some(0), [0.09, -0.06, 0.0]),
            ("left_knee", Some(14), [0.0, -0.41, 0.0]),
            ("left_ankle", Some(15), [0.0, -0.41, 0.0]),
            ("left_toe", Some(16), [0.0, -0.03, 0.12]),
            ("right_hip", Some(0), [-0.09, -0.06, 0.0]),
            ("right_knee", Some(18), [0.0, -0.41, 0.0]),
            ("right_ankle", Some(19), [0.0, -0.41, 0.0]),
            ("right_toe", Some(20), [0.0, -0.03, 0.12]),
        ];
        Self::new(
            joints.iter().map(|j| j.0.to_string()).collect(),
            joints.iter().map(|j| j.1).collect(),
            joints.iter().map(|j| Vector3::from(j.2)).collect(),
            [16, 17, 20, 21],
        )
        .expect("built-in humanoid is valid")
    }

    /// Vertical chain of `n` joints spaced `bone_length` apart along `-y`.
    /// The last four joints serve as foot joints (repeated for short chains).
    pub fn chain(n: usize, bone_length: f64) -> Result<Self> {
        if n == 0 {
            bail_validation!("chain needs at least one joint");
        }
        let names = (0..n).map(|i| format!("joint{i}")).collect();
        let parents = (0..n).map(|i| i.checked_sub(1)).collect();
        let offsets = (0..n)
            .map(|i| {
                if i == 0 {
                    Vector3::zeros()
                } else {
                    Vector3::new(0.0, -bone_length, 0.0)
                }
            })
            .collect();
        let last = n - 1;
        let feet = [
            last.saturating_sub(3),
            last.saturating_sub(2),
            last.saturating_sub(1),
            last,
        ];
        Self::new(names, parents, offsets, feet)
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    /// `12N - 2`.
    pub fn feature_dim(&self) -> usize {
        12 * self.joint_count() - 2
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn rest_offsets(&self) -> &[Vector3<f64>] {
        &self.rest_offsets
    }

    pub fn foot_joints(&self) -> [usize; 4] {
        self.foot_joints
    }

    /// Rest length of the bone ending at each non-root joint (index `i - 1`
    /// holds joint `i`).
    pub fn rest_bone_lengths(&self) -> Vec<f64> {
        self.rest_offsets[1..].iter().map(|o| o.norm()).collect()
    }

    pub fn children(&self, joint: usize) -> impl Iterator<Item = usize> + '_ {
        self.parents
            .iter()
            .enumerate()
            .filter(move |(_, p)| **p == Some(joint))
            .map(|(i, _)| i)
    }
}
