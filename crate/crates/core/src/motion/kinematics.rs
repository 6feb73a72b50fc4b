use nalgebra::{Matrix3, Vector3};

use super::SkeletonSpec;
use crate::error::{bail_shape, Result};

/// Joint positions from a root position and parent-local rotations of the
/// `N - 1` non-root joints. The root itself carries no rotation; a joint's
/// rotation orients the offsets of its children.
pub fn forward_kinematics(
    root_position: Vector3<f64>,
    local_rotations: &[Matrix3<f64>],
    skeleton: &SkeletonSpec,
) -> Result<Vec<Vector3<f64>>> {
    forward_kinematics_rooted(root_position, &Matrix3::identity(), local_rotations, skeleton)
}

/// As [`forward_kinematics`] with an explicit root orientation.
pub fn forward_kinematics_rooted(
    root_position: Vector3<f64>,
    root_rotation: &Matrix3<f64>,
    local_rotations: &[Matrix3<f64>],
    skeleton: &SkeletonSpec,
) -> Result<Vec<Vector3<f64>>> {
    let n = skeleton.joint_count();
    if local_rotations.len() != n - 1 {
        bail_shape!(
            "expected {} local rotations, got {}",
            n - 1,
            local_rotations.len()
        );
    }
    let offsets = skeleton.rest_offsets();
    let mut global_rot = Vec::with_capacity(n);
    let mut pos = Vec::with_capacity(n);
    global_rot.push(*root_rotation);
    pos.push(root_position);
    for i in 1..n {
        let p = skeleton.parent(i).expect("validated tree");
        pos.push(pos[p] + global_rot[p] * offsets[i]);
        global_rot.push(global_rot[p] * local_rotations[i - 1]);
    }
    Ok(pos)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::motion::axis_angle;

    #[test]
    fn identity_pose_accumulates_offsets() {
        let sk = SkeletonSpec::humanoid();
        let root = Vector3::new(0.5, 0.92, -1.0);
        let rots = vec![Matrix3::identity(); 21];
        let pos = forward_kinematics(root, &rots, &sk).unwrap();
        for i in 0..22 {
            let mut expected = root;
            let mut j = i;
            while let Some(p) = sk.parent(j) {
                expected += sk.rest_offsets()[j];
                j = p;
            }
            assert_abs_diff_eq!((pos[i] - expected).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn half_turn_reflects_subtree_through_joint() {
        // chain root(0,0,0) -> j1 (0,-1,0) -> j2 (0,-2,0); turning j1 by pi about z
        // sends j2 to the reflection of (0,-2,0) through (0,-1,0), i.e. the origin.
        let sk = SkeletonSpec::chain(3, 1.0).unwrap();
        let rots = vec![axis_angle(Vector3::z(), PI), Matrix3::identity()];
        let pos = forward_kinematics(Vector3::zeros(), &rots, &sk).unwrap();
        assert_abs_diff_eq!((pos[1] - Vector3::new(0.0, -1.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pos[2].norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn wrong_rotation_count_is_an_error() {
        let sk = SkeletonSpec::chain(3, 1.0).unwrap();
        assert!(forward_kinematics(Vector3::zeros(), &[Matrix3::identity()], &sk).is_err());
    }

    proptest! {
        #[test]
        fn bone_lengths_are_preserved(
            angles in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.1..1.0f64, -PI..PI), 21)
        ) {
            let sk = SkeletonSpec::humanoid();
            let rots: Vec<_> = angles
                .iter()
                .map(|&(x, y, z, a)| axis_angle(Vector3::new(x, y, z), a))
                .collect();
            let pos = forward_kinematics(Vector3::new(0.1, 0.9, 0.3), &rots, &sk).unwrap();
            for (i, rest) in sk.rest_bone_lengths().iter().enumerate() {
                let j = i + 1;
                let len = (pos[j] - pos[sk.parent(j).unwrap()]).norm();
                prop_assert!((len - rest).abs() < 1e-6);
            }
        }
    }
}
