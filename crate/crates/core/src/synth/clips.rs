use rand::Rng;

use crate::error::{bail_validation, Result};
use crate::motion::MotionSequence;

/// Two equal-length windows cut from one parent sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPair {
    pub first: MotionSequence,
    pub second: MotionSequence,
    pub first_start: usize,
    pub second_start: usize,
    pub parent_id: String,
}

/// Cuts `k` windows of `clip_len` frames at uniform random offsets and returns
/// every unordered pair of them.
pub fn resample_clips<R: Rng + ?Sized>(
    seq: &MotionSequence,
    parent_id: &str,
    k: usize,
    clip_len: usize,
    rng: &mut R,
) -> Result<Vec<ClipPair>> {
    if k < 2 {
        bail_validation!("need at least 2 clips per sequence, got {k}");
    }
    if clip_len < 2 || clip_len > seq.len() {
        bail_validation!(
            "clip length {clip_len} must lie in 2..={} (parent length)",
            seq.len()
        );
    }
    let max_start = seq.len() - clip_len;
    let clips = (0..k)
        .map(|_| {
            let start = rng.random_range(0..=max_start);
            seq.window(start, clip_len).map(|c| (start, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            pairs.push(ClipPair {
                first: clips[i].1.clone(),
                second: clips[j].1.clone(),
                first_start: clips[i].0,
                second_start: clips[j].0,
                parent_id: parent_id.to_string(),
            });
        }
    }
    Ok(pairs)
}
