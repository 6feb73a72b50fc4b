//! 6D rotation representation: the first two columns of a rotation matrix,
//! completed back to a matrix by Gram-Schmidt.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{bail_validation, Result};

/// Tolerance on `|R^T R - I|` and `|det R - 1|` accepted as a rotation.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-5;

const DEGENERATE_NORM: f64 = 1e-8;

/// `(c0.x, c0.y, c0.z, c1.x, c1.y, c1.z)`.
pub type Rot6d = [f64; 6];

pub fn rot6d_from_matrix(r: &Matrix3<f64>) -> Result<Rot6d> {
    let err = (r.transpose() * r - Matrix3::identity())
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let det = r.determinant();
    if !(err <= ORTHONORMAL_TOLERANCE && (det - 1.0).abs() <= ORTHONORMAL_TOLERANCE) {
        bail_validation!(
            "matrix is not a rotation (orthonormality error {err:.3e}, det {det:.6})"
        );
    }
    Ok([r[(0, 0)], r[(1, 0)], r[(2, 0)], r[(0, 1)], r[(1, 1)], r[(2, 1)]])
}

pub fn rot6d_to_matrix(d: &Rot6d) -> Result<Matrix3<f64>> {
    let a = Vector3::new(d[0], d[1], d[2]);
    let b = Vector3::new(d[3], d[4], d[5]);
    let an = a.norm();
    if !(an > DEGENERATE_NORM) {
        bail_validation!("6D rotation column 0 is degenerate (norm {an:.3e})");
    }
    let c0 = a / an;
    let u = b - c0 * c0.dot(&b);
    let un = u.norm();
    if !(un > DEGENERATE_NORM) {
        bail_validation!(
            "6D rotation column 1 is degenerate (zero or parallel to column 0, residual {un:.3e})"
        );
    }
    let c1 = u / un;
    let c2 = c0.cross(&c1);
    Ok(Matrix3::from_columns(&[c0, c1, c2]))
}

/// Rotation of `angle` radians about `axis` (need not be unit length).
pub fn axis_angle(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner()
}

/// Intrinsic Z-Y-X Euler angles in degrees, `R = Rz(z) * Ry(y) * Rx(x)`.
/// Returns `[z, y, x]`.
pub fn euler_zyx_from_matrix(r: &Matrix3<f64>) -> [f64; 3] {
    let sy = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let y = sy.asin();
    let (z, x) = if sy.abs() < 1.0 - 1e-9 {
        (r[(1, 0)].atan2(r[(0, 0)]), r[(2, 1)].atan2(r[(2, 2)]))
    } else {
        // gimbal lock: fold everything into z
        ((-r[(0, 1)]).atan2(r[(1, 1)]), 0.0)
    };
    [z.to_degrees(), y.to_degrees(), x.to_degrees()]
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn max_abs(m: &Matrix3<f64>) -> f64 {
        m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    #[test]
    fn identity_to_6d() {
        let d = rot6d_from_matrix(&Matrix3::identity()).unwrap();
        assert_eq!(d, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn quarter_turn_about_z() {
        // columns of Rz(90) are (0,1,0), (-1,0,0), (0,0,1)
        let r = axis_angle(Vector3::z(), FRAC_PI_2);
        let d = rot6d_from_matrix(&r).unwrap();
        let expected = [0.0, 1.0, 0.0, -1.0, 0.0, 0.0];
        for (a, b) in d.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gram_schmidt_cases() {
        let id = Matrix3::identity();
        assert_abs_diff_eq!(
            max_abs(&(rot6d_to_matrix(&[1., 0., 0., 0., 1., 0.]).unwrap() - id)),
            0.0
        );
        assert_abs_diff_eq!(
            max_abs(&(rot6d_to_matrix(&[2., 0., 0., 0., 3., 0.]).unwrap() - id)),
            0.0
        );
        // (1,1,0) minus its projection on (1,0,0) is (0,1,0)
        assert_abs_diff_eq!(
            max_abs(&(rot6d_to_matrix(&[1., 0., 0., 1., 1., 0.]).unwrap() - id)),
            0.0
        );
    }

    #[test]
    fn degenerate_inputs_name_the_column() {
        let e = rot6d_to_matrix(&[0., 0., 0., 0., 1., 0.]).unwrap_err();
        assert!(e.to_string().contains("column 0"));
        let e = rot6d_to_matrix(&[1., 0., 0., 2., 0., 0.]).unwrap_err();
        assert!(e.to_string().contains("column 1"));
        let e = rot6d_to_matrix(&[1., 0., 0., 0., 0., 0.]).unwrap_err();
        assert!(e.to_string().contains("column 1"));
    }

    #[test]
    fn non_rotations_are_rejected() {
        let scaled = Matrix3::identity() * 1.1;
        assert!(rot6d_from_matrix(&scaled).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(rot6d_from_matrix(&reflection).is_err());
    }

    #[test]
    fn euler_zyx_reconstructs() {
        let r = axis_angle(Vector3::z(), 0.3)
            * axis_angle(Vector3::y(), -0.7)
            * axis_angle(Vector3::x(), 1.1);
        let [z, y, x] = euler_zyx_from_matrix(&r);
        assert_abs_diff_eq!(z, 0.3_f64.to_degrees(), epsilon = 1e-9);
        assert_abs_diff_eq!(y, (-0.7_f64).to_degrees(), epsilon = 1e-9);
        assert_abs_diff_eq!(x, 1.1_f64.to_degrees(), epsilon = 1e-9);
    }

    fn arb_rotation() -> impl Strategy<Value = Matrix3<f64>> {
        (
            -1.0..1.0f64,
            -1.0..1.0f64,
            -1.0..1.0f64,
            -std::f64::consts::PI..std::f64::consts::PI,
        )
            .prop_filter("axis", |(x, y, z, _)| x * x + y * y + z * z > 1e-4)
            .prop_map(|(x, y, z, a)| axis_angle(Vector3::new(x, y, z), a))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn round_trip_recovers_matrix(r in arb_rotation()) {
            let back = rot6d_to_matrix(&rot6d_from_matrix(&r).unwrap()).unwrap();
            prop_assert!(max_abs(&(back - r)) < 1e-6);
        }

        #[test]
        fn reconstruction_is_a_rotation(d in prop::array::uniform6(-3.0..3.0f64)) {
            let a = Vector3::new(d[0], d[1], d[2]);
            let b = Vector3::new(d[3], d[4], d[5]);
            prop_assume!(a.norm() > 1e-3 && a.normalize().cross(&b).norm() > 1e-3);
            let r = rot6d_to_matrix(&d).unwrap();
            prop_assert!(max_abs(&(r.transpose() * r - Matrix3::identity())) < 1e-6);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-6);
            // idempotent on already-valid 6D input
            let again = rot6d_to_matrix(&rot6d_from_matrix(&r).unwrap()).unwrap();
            prop_assert!(max_abs(&(again - r)) < 1e-9);
        }
    }
}
