use std::collections::BTreeMap;

use ndarray::ArrayView1;
use rand::Rng;

use super::FeatureSet;
use crate::error::{bail_validation, Result};

pub const DEFAULT_DIVERSITY_PAIRS: usize = 300;
pub const DEFAULT_MULTIMODALITY_PAIRS: usize = 100;

fn distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn mean_pair_distance<R: Rng + ?Sized>(features: &FeatureSet, rows: &[usize], pairs: usize, rng: &mut R) -> f64 {
    let m = rows.len();
    let x = features.rows();
    let total: f64 = (0..pairs.max(1))
        .map(|_| {
            let i = rng.random_range(0..m);
            let j = (i + rng.random_range(1..m)) % m;
            distance(x.row(rows[i]), x.row(rows[j]))
        })
        .sum();
    total / pairs.max(1) as f64
}

/// Mean Euclidean distance over `pair_count` uniformly drawn pairs of
/// distinct rows.
pub fn diversity<R: Rng + ?Sized>(features: &FeatureSet, pair_count: usize, rng: &mut R) -> Result<f64> {
    if features.len() < 2 {
        bail_validation!("diversity needs at least 2 rows, got {}", features.len());
    }
    let rows: Vec<usize> = (0..features.len()).collect();
    Ok(mean_pair_distance(features, &rows, pair_count, rng))
}

/// Mean over classes (with at least 2 rows) of within-class diversity.
pub fn multimodality<R: Rng + ?Sized>(features: &FeatureSet, per_class_pairs: usize, rng: &mut R) -> Result<f64> {
    let Some(classes) = features.classes() else {
        bail_validation!("multimodality needs a class per row");
    };
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in classes.iter().enumerate() {
        groups.entry(*c).or_default().push(i);
    }
    let values: Vec<f64> = groups
        .values()
        .filter(|rows| rows.len() >= 2)
        .map(|rows| mean_pair_distance(features, rows, per_class_pairs, rng))
        .collect();
    if values.is_empty() {
        bail_validation!("multimodality needs a class with at least 2 rows");
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
