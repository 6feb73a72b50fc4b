use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EmotionEmbedding, EmotionEncoder};
use crate::error::{bail_shape, bail_validation, Error, Result};
use crate::motion::{EmotionLabel, MotionSequence, NUM_EMOTIONS};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const KMEANS_MAX_ITERS: usize = 100;

/// Diagonal Gaussian per emotion class over the encoder's token space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionPrior {
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl EmotionPrior {
    pub fn new(means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let prior = Self { means, variances };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.len() != NUM_EMOTIONS || self.variances.len() != NUM_EMOTIONS {
            bail_validation!("prior must hold {NUM_EMOTIONS} classes");
        }
        let dim = self.dim();
        for (m, v) in self.means.iter().zip(&self.variances) {
            if m.len() != dim || v.len() != dim {
                bail_shape!("prior class dimensions are inconsistent");
            }
            if m.iter().any(|x| !x.is_finite()) {
                bail_validation!("prior mean is not finite");
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= VARIANCE_FLOOR)) {
                bail_validation!("prior variance below floor {VARIANCE_FLOOR}");
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn mean(&self, emotion: EmotionLabel) -> &[f64] {
        &self.means[emotion.index()]
    }

    pub fn variance(&self, emotion: EmotionLabel) -> &[f64] {
        &self.variances[emotion.index()]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let prior: Self =
            serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
        prior.validate()?;
        Ok(prior)
    }
}

/// `mu_c + sigma_c * z` with `z` standard normal.
pub fn sample_emotion<R: Rng + ?Sized>(
    prior: &EmotionPrior,
    emotion: EmotionLabel,
    rng: &mut R,
) -> EmotionEmbedding {
    let values = prior
        .mean(emotion)
        .iter()
        .zip(prior.variance(emotion))
        .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    EmotionEmbedding::new(values).expect("finite prior yields finite samples")
}

#[derive(Debug, Clone)]
pub struct PriorFit {
    pub prior: EmotionPrior,
    /// Cluster index of every embedding in the full set (empty when no
    /// k-means iteration ran).
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Classes whose cluster ended empty and fell back to labeled statistics.
    pub fallback_classes: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn gaussian(points: &[&[f64]], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p.iter()) {
            *m += x / n;
        }
    }
    let mut var = vec![0.0; dim];
    for p in points {
        for ((v, x), m) in var.iter_mut().zip(p.iter()).zip(&mean) {
            *v += (x - m).powi(2) / n;
        }
    }
    for v in &mut var {
        *v = v.max(VARIANCE_FLOOR);
    }
    (mean, var)
}

fn nearest(centers: &[Vec<f64>], p: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(center, p);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// k-means (k = 7) over `all`, initialised at the labeled class means, then a
/// diagonal Gaussian per final cluster. Ties go to the lowest class index.
pub fn fit_prior_from_embeddings(
    labeled: &[(Vec<f64>, usize)],
    all: &[Vec<f64>],
    max_iters: usize,
) -> Result<PriorFit> {
    let dim = labeled
        .first()
        .map(|(e, _)| e.len())
        .ok_or_else(|| Error::Validation("no labeled embeddings".into()))?;
    if labeled.iter().any(|(e, _)| e.len() != dim) || all.iter().any(|e| e.len() != dim) {
        bail_shape!("embeddings have inconsistent dimensions");
    }
    let mut per_class: Vec<Vec<&[f64]>> = vec![Vec::new(); NUM_EMOTIONS];
    for (e, c) in labeled {
        if *c >= NUM_EMOTIONS {
            bail_validation!("label {c} out of range");
        }
        per_class[*c].push(e.as_slice());
    }
    if let Some(c) = per_class.iter().position(|p| p.len() < 2) {
        bail_validation!(
            "class {} needs at least 2 labeled examples, has {}",
            EmotionLabel::ALL[c],
            per_class[c].len()
        );
    }
    let labeled_stats: Vec<_> = per_class.iter().map(|p| gaussian(p, dim)).collect();

    if max_iters == 0 || all.is_empty() {
        let (means, variances) = labeled_stats.into_iter().unzip();
        return Ok(PriorFit {
            prior: EmotionPrior::new(means, variances)?,
            assignments: Vec::new(),
            iterations: 0,
            converged: false,
            fallback_classes: Vec::new(),
        });
    }

    let mut centers: Vec<Vec<f64>> = labeled_stats.iter().map(|(m, _)| m.clone()).collect();
    let mut assignments: Vec<usize> = all.iter().map(|p| nearest(&centers, p)).collect();
    let mut iterations = 1;
    let mut converged = false;
    while iterations < max_iters {
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64]> = all
                .iter()
                .zip(&assignments)
                .filter(|(_, a)| **a == c)
                .map(|(p, _)| p.as_slice())
                .collect();
            if !members.is_empty() {
                *center = gaussian(&members, dim).0;
            }
        }
        let next: Vec<usize> = all.iter().map(|p| nearest(&centers, p)).collect();
        iterations += 1;
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }

    let mut means = Vec::with_capacity(NUM_EMOTIONS);
    let mut variances = Vec::with_capacity(NUM_EMOTIONS);
    let mut fallback_classes = Vec::new();
    for (c, stats) in labeled_stats.into_iter().enumerate() {
        let members: Vec<&[f64]> = all
            .iter()
            .zip(&assignments)
            .filter(|(_, a)| **a == c)
            .map(|(p, _)| p.as_slice())
            .collect();
        let (m, v) = if members.is_empty() {
            log::warn!(
                "cluster for {} is empty; using labeled statistics",
                EmotionLabel::ALL[c]
            );
            fallback_classes.push(c);
            stats
        } else {
            gaussian(&members, dim)
        };
        means.push(m);
        variances.push(v);
    }
    Ok(PriorFit {
        prior: EmotionPrior::new(means, variances)?,
        assignments,
        iterations,
        converged,
        fallback_classes,
    })
}

/// Embeds the labeled and full sets with a frozen encoder and fits the prior.
pub fn fit_prior(
    encoder: &EmotionEncoder,
    labeled: &[(&MotionSequence, EmotionLabel)],
    all: &[&MotionSequence],
    max_iters: usize,
) -> Result<PriorFit> {
    let motions: Vec<&MotionSequence> = labeled.iter().map(|(m, _)| *m).collect();
    let labeled_emb: Vec<(Vec<f64>, usize)> = encoder
        .embed_batch(&motions)?
        .into_iter()
        .zip(labeled)
        .map(|(e, (_, c))| (e.into_vec(), c.index()))
        .collect();
    let all_emb: Vec<Vec<f64>> = encoder
        .embed_batch(all)?
        .into_iter()
        .map(EmotionEmbedding::into_vec)
        .collect();
    fit_prior_from_embeddings(&labeled_emb, &all_emb, max_iters)
}

/// Fraction of points whose cluster's majority label equals their own label.
pub fn cluster_agreement(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    if assignments.len() != labels.len() || assignments.is_empty() {
        bail_shape!(
            "{} assignments for {} labels",
            assignments.len(),
            labels.len()
        );
    }
    let clusters = assignments.iter().max().unwrap() + 1;
    let classes = labels.iter().max().unwrap() + 1;
    let mut counts = vec![vec![0usize; classes]; clusters];
    for (&a, &l) in assignments.iter().zip(labels) {
        counts[a][l] += 1;
    }
    let majority: usize = counts
        .iter()
        .map(|row| row.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / labels.len() as f64)
}
