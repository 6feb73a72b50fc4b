use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{accuracy_from_predictions, diversity, fid, multimodality, FeatureSet, DEFAULT_DIVERSITY_PAIRS, DEFAULT_MULTIMODALITY_PAIRS};
use crate::diffusion::{GenerationMode, Models, Sampler};
use crate::error::{bail_validation, Error, Result};
use crate::motion::{EmotionLabel, MotionSequence, NUM_EMOTIONS};
use crate::prior::EmotionEncoder;
use crate::synth::{Dataset, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub diversity_pairs: usize,
    pub multimodality_pairs: usize,
    pub bootstrap: usize,
    pub sampler: Sampler,
    /// Use only the first `n` eval actors.
    pub max_actors: Option<usize>,
    /// Generation batch size.
    pub batch: usize,
    /// Score ground-truth reactors instead of generated ones.
    pub ground_truth: bool,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            diversity_pairs: DEFAULT_DIVERSITY_PAIRS,
            multimodality_pairs: DEFAULT_MULTIMODALITY_PAIRS,
            bootstrap: 20,
            sampler: Sampler::default(),
            max_actors: None,
            batch: 64,
            ground_truth: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricStd {
    pub fid: f64,
    pub div: f64,
    pub mm: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub real: usize,
    pub generated: usize,
    pub bootstrap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fid: f64,
    pub div: f64,
    /// Diversity of the real reactors.
    pub div_real: f64,
    /// `|div - div_real|`.
    pub div_gap: f64,
    pub mm: f64,
    pub acc: f64,
    pub std: MetricStd,
    pub counts: ReportCounts,
    pub seed: u64,
    pub ground_truth: bool,
    pub sampler: Option<Sampler>,
    /// Artifact name to content hash, filled in by the caller.
    pub checkpoints: BTreeMap<String, String>,
}

impl MetricReport {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

struct Scores {
    fid: f64,
    div: f64,
    mm: f64,
    acc: f64,
}

fn score(
    real: &FeatureSet,
    generated: &FeatureSet,
    predicted: &[usize],
    config: &EvalConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Scores> {
    let targets = generated.classes().expect("generated features carry targets");
    Ok(Scores {
        fid: fid(real, generated)?,
        div: diversity(generated, config.diversity_pairs, rng)?,
        mm: multimodality(generated, config.multimodality_pairs, rng)?,
        acc: accuracy_from_predictions(predicted, targets)?,
    })
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Standard deviation of `statistic` over `resamples` bootstrap draws of
/// `n` indices with replacement.
pub fn bootstrap_std<F>(n: usize, resamples: usize, rng: &mut ChaCha8Rng, mut statistic: F) -> Result<f64>
where
    F: FnMut(&[usize], &mut ChaCha8Rng) -> Result<f64>,
{
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        values.push(statistic(&idx, rng)?);
    }
    Ok(sample_std(&values))
}

/// All four metrics plus bootstrap spreads from precomputed features.
/// `generated` must carry the target class of each row; `predicted` holds
/// the classifier's output for the same rows.
pub fn report_from_features(
    real: &FeatureSet,
    generated: &FeatureSet,
    predicted: &[usize],
    config: &EvalConfig,
) -> Result<MetricReport> {
    if generated.classes().is_none() {
        bail_validation!("generated features need target classes");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let main = score(real, generated, predicted, config, &mut rng)?;
    let div_real = diversity(real, config.diversity_pairs, &mut rng)?;
    let mut draws: Vec<Scores> = Vec::with_capacity(config.bootstrap);
    for _ in 0..config.bootstrap {
        let n = generated.len();
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let preds: Vec<usize> = idx.iter().map(|&i| predicted[i]).collect();
        draws.push(score(real, &generated.select(&idx), &preds, config, &mut rng)?);
    }
    let spread = |f: fn(&Scores) -> f64| sample_std(&draws.iter().map(f).collect::<Vec<_>>());
    Ok(MetricReport {
        fid: main.fid,
        div: main.div,
        div_real,
        div_gap: (main.div - div_real).abs(),
        mm: main.mm,
        acc: main.acc,
        std: MetricStd {
            fid: spread(|s| s.fid),
            div: spread(|s| s.div),
            mm: spread(|s| s.mm),
            acc: spread(|s| s.acc),
        },
        counts: ReportCounts { real: real.len(), generated: generated.len(), bootstrap: config.bootstrap },
        seed: config.seed,
        ground_truth: config.ground_truth,
        sampler: (!config.ground_truth).then_some(config.sampler),
        checkpoints: BTreeMap::new(),
    })
}

fn chunk_seed(seed: u64, class: usize, chunk: usize) -> u64 {
    seed ^ ((class as u64 + 1) << 40) ^ ((chunk as u64 + 1) << 20)
}

/// Generates one reaction per eval actor per emotion (or scores the real
/// reactors when `ground_truth` is set) and computes the report.
struct EvalSet {
    real_motions: Vec<MotionSequence>,
    actors: Vec<MotionSequence>,
    labels: Vec<usize>,
}

fn eval_set(dataset: &Dataset, config: &EvalConfig) -> Result<EvalSet> {
    let mut items = dataset.load(Split::Eval)?;
    if let Some(n) = config.max_actors {
        items.truncate(n);
    }
    if items.len() < 2 {
        bail_validation!("evaluation needs at least 2 eval sequences");
    }
    let labels: Vec<usize> = items
        .iter()
        .map(|i| i.pair.emotion.map(EmotionLabel::index).ok_or_else(|| Error::Validation(format!("{} lacks a label", i.id))))
        .collect::<Result<_>>()?;
    let (actors, real_motions) = items.into_iter().map(|i| (i.pair.actor, i.pair.reactor)).unzip();
    Ok(EvalSet { real_motions, actors, labels })
}

fn score_motions(
    encoder: &EmotionEncoder,
    set: &EvalSet,
    generated: &[&MotionSequence],
    targets: Vec<usize>,
    config: &EvalConfig,
) -> Result<MetricReport> {
    let real_refs: Vec<&MotionSequence> = set.real_motions.iter().collect();
    let real = FeatureSet::from_embeddings(&encoder.embed_batch(&real_refs)?, Some(set.labels.clone()))?;
    let predicted = encoder.predict_batch(generated)?;
    let gen = FeatureSet::from_embeddings(&encoder.embed_batch(generated)?, Some(targets))?;
    report_from_features(&real, &gen, &predicted, config)
}

/// Scores the ground-truth eval reactors against themselves; needs only the
/// frozen classifier. FID is zero up to the covariance ridge.
pub fn evaluate_ground_truth(encoder: &EmotionEncoder, dataset: &Dataset, config: &EvalConfig) -> Result<MetricReport> {
    let config = EvalConfig { ground_truth: true, ..config.clone() };
    let set = eval_set(dataset, &config)?;
    let refs: Vec<&MotionSequence> = set.real_motions.iter().collect();
    score_motions(encoder, &set, &refs, set.labels.clone(), &config)
}

/// Generates one reaction per eval actor for every emotion class and scores
/// them against the real eval reactors.
pub fn evaluate(models: &Models, dataset: &Dataset, config: &EvalConfig) -> Result<MetricReport> {
    if config.ground_truth {
        return evaluate_ground_truth(&models.encoder, dataset, config);
    }
    if config.batch == 0 {
        bail_validation!("evaluation batch size must be positive");
    }
    let set = eval_set(dataset, config)?;
    let actors: Vec<&MotionSequence> = set.actors.iter().collect();
    let mut motions = Vec::with_capacity(actors.len() * NUM_EMOTIONS);
    let mut targets = Vec::with_capacity(actors.len() * NUM_EMOTIONS);
    for class in 0..NUM_EMOTIONS {
        let emotion = EmotionLabel::from_index(class)?;
        for (k, chunk) in actors.chunks(config.batch).enumerate() {
            let modes = vec![GenerationMode::Edited(emotion); chunk.len()];
            let out = models.generate_batch(chunk, &modes, config.sampler, chunk_seed(config.seed, class, k))?;
            motions.extend(out.into_iter().map(|g| g.reactor));
            targets.extend(std::iter::repeat_n(class, chunk.len()));
        }
    }
    let refs: Vec<&MotionSequence> = motions.iter().collect();
    score_motions(&models.encoder, &set, &refs, targets, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand_distr::StandardNormal;

    fn features(seed: u64, m: usize) -> FeatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..m * 4).map(|_| rng.sample(StandardNormal)).collect();
        let classes = (0..m).map(|i| i % NUM_EMOTIONS).collect();
        FeatureSet::new(Array2::from_shape_vec((m, 4), v).unwrap(), Some(classes)).unwrap()
    }

    #[test]
    fn self_comparison_report() {
        let x = features(0, 70);
        let preds = x.classes().unwrap().to_vec();
        let config = EvalConfig { ground_truth: true, ..Default::default() };
        let r = report_from_features(&x, &x, &preds, &config).unwrap();
        assert!(r.fid < 1e-6);
        assert_eq!(r.acc, 1.0);
        assert_eq!(r.std.acc, 0.0);
        assert!(r.std.fid > 0.0);
        assert_eq!(r.counts.bootstrap, 20);
        assert_eq!(r.sampler, None);
    }

    #[test]
    fn reports_are_seed_deterministic_and_serialize() {
        let real = features(1, 50);
        let gen = features(2, 70);
        let preds: Vec<usize> = (0..70).map(|i| (i * 3) % NUM_EMOTIONS).collect();
        let config = EvalConfig::default();
        let a = report_from_features(&real, &gen, &preds, &config).unwrap();
        let b = report_from_features(&real, &gen, &preds, &config).unwrap();
        assert_eq!(a, b);
        assert!(a.fid >= 0.0 && a.div >= 0.0 && a.mm >= 0.0 && (0.0..=1.0).contains(&a.acc));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        a.save(&path).unwrap();
        assert_eq!(MetricReport::load(&path).unwrap(), a);
    }

    #[test]
    fn bootstrap_of_constant_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(bootstrap_std(10, 20, &mut rng, |_, _| Ok(2.5)).unwrap(), 0.0);
        let spread = bootstrap_std(10, 20, &mut rng, |idx, _| Ok(idx.iter().sum::<usize>() as f64)).unwrap();
        assert!(spread > 0.0);
    }
}
