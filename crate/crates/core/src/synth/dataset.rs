use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PairGenerator;
use crate::error::{bail_validation, Error, Result};
use crate::motion::file::{read_motion_blob, write_motion_blob};
use crate::motion::{EmotionLabel, InteractionPair, MotionSequence, SkeletonSpec, NUM_EMOTIONS};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const HIDDEN_LABELS_FILE: &str = "labels.hidden.json";
const SEQUENCE_DIR: &str = "sequences";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    LabeledTrain,
    UnlabeledTrain,
    Eval,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::LabeledTrain, Split::UnlabeledTrain, Split::Eval];

    fn prefix(self) -> &'static str {
        match self {
            Split::LabeledTrain => "lab",
            Split::UnlabeledTrain => "unl",
            Split::Eval => "eval",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Split::LabeledTrain => 1,
            Split::UnlabeledTrain => 2,
            Split::Eval => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub labeled_train: usize,
    pub unlabeled_train: usize,
    pub eval: usize,
    pub seed: u64,
    /// Frames per sequence.
    pub length: usize,
    pub fps: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            labeled_train: 200,
            unlabeled_train: 700,
            eval: 100,
            seed: 0,
            length: 32,
            fps: 16.0,
        }
    }
}

impl DatasetConfig {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::LabeledTrain => self.labeled_train,
            Split::UnlabeledTrain => self.unlabeled_train,
            Split::Eval => self.eval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for split in Split::ALL {
            if self.count(split) == 0 {
                bail_validation!("dataset count for {split:?} must be at least 1");
            }
        }
        if self.length < 16 {
            bail_validation!("sequence length must be at least 16, got {}", self.length);
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            bail_validation!("fps must be positive, got {}", self.fps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub actor: String,
    pub reactor: String,
    pub length: usize,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<EmotionLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub labeled_train: usize,
    pub unlabeled_train: usize,
    pub eval: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub skeleton: SkeletonSpec,
    pub fps: f64,
    pub length: usize,
    pub seed: u64,
    pub counts: SplitCounts,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    fn check(&self, origin: &Path) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::format(origin, format!("duplicate id {}", e.id)));
            }
            let labeled = e.emotion.is_some();
            let ok = match e.split {
                Split::UnlabeledTrain => !labeled,
                Split::LabeledTrain | Split::Eval => labeled,
            };
            if !ok {
                return Err(Error::format(
                    origin,
                    format!("entry {} has a label state inconsistent with its split", e.id),
                ));
            }
        }
        Ok(())
    }
}

/// Capability required to read withheld labels. Training code never holds one.
#[derive(Debug)]
pub struct EvaluationAccess(());

impl EvaluationAccess {
    pub fn for_evaluation() -> Self {
        EvaluationAccess(())
    }
}

/// Labels of the unlabeled split, stored in a sidecar next to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLabels {
    pub labels: BTreeMap<String, EmotionLabel>,
}

impl HiddenLabels {
    pub fn load(dir: &Path, _access: &EvaluationAccess) -> Result<Self> {
        let path = dir.join(HIDDEN_LABELS_FILE);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn get(&self, id: &str) -> Option<EmotionLabel> {
        self.labels.get(id).copied()
    }
}

/// Per-sequence RNG seed derived from the base seed, split and index.
pub fn sequence_seed(base: u64, split: Split, index: usize) -> u64 {
    let mut z = base
        .wrapping_add(split.tag().wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn balanced_labels(count: usize, shuffle_seed: Option<u64>) -> Vec<EmotionLabel> {
    let mut labels: Vec<_> = (0..count)
        .map(|i| EmotionLabel::ALL[i % NUM_EMOTIONS])
        .collect();
    if let Some(seed) = shuffle_seed {
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    labels
}

/// Generates all splits into `out` and writes the manifest and hidden labels.
pub fn make_dataset(config: &DatasetConfig, out: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let seq_dir = out.join(SEQUENCE_DIR);
    fs::create_dir_all(&seq_dir).map_err(|e| Error::io(&seq_dir, e))?;
    let generator = PairGenerator::default();

    let mut jobs = Vec::new();
    for split in Split::ALL {
        let shuffle = (split == Split::UnlabeledTrain).then(|| sequence_seed(config.seed, split, usize::MAX));
        for (i, emotion) in balanced_labels(config.count(split), shuffle).into_iter().enumerate() {
            jobs.push((split, i, emotion));
        }
    }

    let entries = jobs
        .par_iter()
        .map(|&(split, i, emotion)| {
            let seed = sequence_seed(config.seed, split, i);
            let pair = generator.generate(emotion, config.length, config.fps, seed)?;
            let id = format!("{}_{i:05}", split.prefix());
            let actor = format!("{SEQUENCE_DIR}/{id}_actor.emo");
            let reactor = format!("{SEQUENCE_DIR}/{id}_reactor.emo");
            write_motion_blob(&out.join(&actor), pair.actor.frames())?;
            write_motion_blob(&out.join(&reactor), pair.reactor.frames())?;
            Ok((
                ManifestEntry {
                    id,
                    split,
                    actor,
                    reactor,
                    length: config.length,
                    fps: config.fps,
                    emotion: (split != Split::UnlabeledTrain).then_some(emotion),
                },
                emotion,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let hidden = HiddenLabels {
        labels: entries
            .iter()
            .filter(|(e, _)| e.split == Split::UnlabeledTrain)
            .map(|(e, label)| (e.id.clone(), *label))
            .collect(),
    };
    let manifest = DatasetManifest {
        skeleton: generator.skeleton().as_ref().clone(),
        fps: config.fps,
        length: config.length,
        seed: config.seed,
        counts: SplitCounts {
            labeled_train: config.labeled_train,
            unlabeled_train: config.unlabeled_train,
            eval: config.eval,
        },
        entries: entries.into_iter().map(|(e, _)| e).collect(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    write_json(&out.join(HIDDEN_LABELS_FILE), &hidden)?;
    log::info!(
        "wrote {} labeled, {} unlabeled, {} eval pairs to {}",
        config.labeled_train,
        config.unlabeled_train,
        config.eval,
        out.display()
    );
    Ok(manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One loaded interaction with its manifest id.
#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub id: String,
    pub pair: InteractionPair,
}

/// Read access to a generated dataset. Only the manifest is consulted; the
/// hidden-label sidecar is never read through this type.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
    skeleton: Arc<SkeletonSpec>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        manifest.check(&path)?;
        Ok(Self {
            root: root.to_path_buf(),
            skeleton: Arc::new(manifest.skeleton.clone()),
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn skeleton(&self) -> &Arc<SkeletonSpec> {
        &self.skeleton
    }

    pub fn load_entry(&self, entry: &ManifestEntry) -> Result<DatasetItem> {
        let load = |rel: &str| -> Result<MotionSequence> {
            let path = self.root.join(rel);
            if !path.exists() {
                return Err(Error::MissingArtifact(path));
            }
            MotionSequence::new(read_motion_blob(&path)?, entry.fps, self.skeleton.clone())
        };
        Ok(DatasetItem {
            id: entry.id.clone(),
            pair: InteractionPair::new(load(&entry.actor)?, load(&entry.reactor)?, entry.emotion)?,
        })
    }

    pub fn load(&self, split: Split) -> Result<Vec<DatasetItem>> {
        let entries: Vec<_> = self.manifest.entries_in(split).collect();
        entries.par_iter().map(|e| self.load_entry(e)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig {
            labeled_train: 70,
            unlabeled_train: 140,
            eval: 35,
            seed: 5,
            length: 16,
            fps: 16.0,
        }
    }

    #[test]
    fn balanced_counts_and_entries() {
        let dir = tempfile::tempdir().unwrap();
        let m = make_dataset(&small(), dir.path()).unwrap();
        assert_eq!(m.entries.len(), 245);
        for e in EmotionLabel::ALL {
            let n = m.entries_in(Split::LabeledTrain).filter(|x| x.emotion == Some(e)).count();
            assert_eq!(n, 10);
        }
        assert!(m.entries_in(Split::UnlabeledTrain).all(|e| e.emotion.is_none()));
        assert!(m.entries_in(Split::Eval).all(|e| e.emotion.is_some()));
    }

    #[test]
    fn remainder_is_round_robin() {
        let labels = balanced_labels(23, Some(1));
        let mut counts = [0usize; NUM_EMOTIONS];
        for l in labels {
            counts[l.index()] += 1;
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut cfg = small();
        cfg.labeled_train = 7;
        cfg.unlabeled_train = 7;
        cfg.eval = 7;
        let m = make_dataset(&cfg, a.path()).unwrap();
        make_dataset(&cfg, b.path()).unwrap();
        let mut files = vec![MANIFEST_FILE.to_string(), HIDDEN_LABELS_FILE.to_string()];
        for e in &m.entries {
            files.push(e.actor.clone());
            files.push(e.reactor.clone());
        }
        for f in files {
            assert_eq!(fs::read(a.path().join(&f)).unwrap(), fs::read(b.path().join(&f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn hidden_labels_need_access_and_match_generation() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.labeled_train = 7;
        cfg.eval = 7;
        cfg.unlabeled_train = 21;
        make_dataset(&cfg, dir.path()).unwrap();
        let hidden = HiddenLabels::load(dir.path(), &EvaluationAccess::for_evaluation()).unwrap();
        assert_eq!(hidden.labels.len(), 21);
        let ds = Dataset::open(dir.path()).unwrap();
        let items = ds.load(Split::UnlabeledTrain).unwrap();
        let gen = PairGenerator::default();
        for (i, item) in items.iter().enumerate().take(3) {
            assert!(item.pair.emotion.is_none());
            let label = hidden.get(&item.id).unwrap();
            let seed = sequence_seed(cfg.seed, Split::UnlabeledTrain, i);
            let fresh = gen.generate(label, cfg.length, cfg.fps, seed).unwrap();
            let diff = (&fresh.reactor.frames() - &item.pair.reactor.frames())
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(diff < 1e-5);
        }
    }

    #[test]
    fn desk_defaults_keep_ratio() {
        let c = DatasetConfig::default();
        assert_eq!(c.labeled_train + c.unlabeled_train + c.eval, 1000);
        assert_eq!((c.labeled_train * 10, c.unlabeled_train * 10), (2000, 7000));
    }

    #[test]
    fn zero_counts_rejected_and_missing_manifest_reported() {
        let mut cfg = small();
        cfg.eval = 0;
        assert!(make_dataset(&cfg, tempfile::tempdir().unwrap().path()).is_err());
        let err = Dataset::open(tempfile::tempdir().unwrap().path()).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }

    #[test]
    fn seeds_distinct_across_splits() {
        let mut seen = std::collections::HashSet::new();
        for s in Split::ALL {
            for i in 0..500 {
                assert!(seen.insert(sequence_seed(3, s, i)));
            }
        }
    }
}
