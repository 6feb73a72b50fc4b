//! Motion blob: magic `EMO1`, little-endian `u32 L`, `u32 D`, then `L * D`
//! `f32` values in row-major order.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const MOTION_MAGIC: &[u8; 4] = b"EMO1";

pub fn motion_to_bytes(frames: ArrayView2<f64>) -> Vec<u8> {
    let (l, d) = frames.dim();
    let mut out = Vec::with_capacity(12 + 4 * l * d);
    out.extend_from_slice(MOTION_MAGIC);
    out.extend_from_slice(&(l as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in frames.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn motion_from_bytes(bytes: &[u8], origin: &Path) -> Result<Array2<f64>> {
    if bytes.len() < 12 || &bytes[..4] != MOTION_MAGIC {
        return Err(Error::format(origin, "missing EMO1 header"));
    }
    let l = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != 4 * l * d {
        return Err(Error::format(
            origin,
            format!("header says {l}x{d} floats but body has {} bytes", body.len()),
        ));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Array2::from_shape_vec((l, d), values).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn write_motion_blob(path: &Path, frames: ArrayView2<f64>) -> Result<()> {
    fs::write(path, motion_to_bytes(frames)).map_err(|e| Error::io(path, e))
}

pub fn read_motion_blob(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    motion_from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let a = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
        let b = motion_to_bytes(a.view());
        assert_eq!(&b[..4], b"EMO1");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 3);
        assert_eq!(f32::from_le_bytes(b[12..16].try_into().unwrap()), 1.0);
        assert_eq!(b.len(), 12 + 24);
    }

    #[test]
    fn corrupt_blobs_are_rejected() {
        let p = Path::new("x.emo");
        assert!(motion_from_bytes(b"EMO2\0\0\0\0\0\0\0\0", p).is_err());
        let mut b = motion_to_bytes(Array2::<f64>::zeros((2, 2)).view());
        b.pop();
        assert!(motion_from_bytes(&b, p).is_err());
    }

    proptest! {
        #[test]
        fn f32_values_round_trip(v in prop::collection::vec(-1e3f32..1e3, 1..64)) {
            let n = v.len();
            let a = Array2::from_shape_vec((1, n), v.iter().map(|x| *x as f64).collect()).unwrap();
            let back = motion_from_bytes(&motion_to_bytes(a.view()), Path::new("p")).unwrap();
            prop_assert_eq!(back, a);
        }
    }
}
