use std::path::Path;

use candle_core::DType;
use ereact_core::motion::{EmotionLabel, MotionSequence};
use ereact_core::nn::FeatureNormalizer;
use ereact_core::prior::{fit_prior, train_prior_encoder, EmotionEncoder, EncoderData, PriorHistory};
use ereact_core::synth::{Dataset, Split};
use serde::{Deserialize, Serialize};

use super::{create_out_dir, write_json, Session, TrainPriorArgs};
use crate::config::RunConfig;
use crate::error::Result;
use crate::layout;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub id: String,
    pub role: String,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FitLog {
    iterations: usize,
    converged: bool,
    fallback_classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PriorLog {
    unlabeled_sequences: usize,
    history: PriorHistory,
    fit: FitLog,
}

/// One arm of an unlabeled-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepArm {
    pub unlabeled: usize,
    pub dir: String,
    pub best_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
}

/// Encoder training material plus the id and role of every motion the prior
/// is fitted on, in the order of `labeled` then `unlabeled`.
struct Material {
    data: EncoderData,
    members: Vec<(String, &'static str)>,
}

fn load_material(dataset: &Dataset, unlabeled_limit: Option<usize>) -> Result<Material> {
    let mut data = EncoderData::default();
    let mut members = Vec::new();
    for item in dataset.load(Split::LabeledTrain)? {
        let e = item.pair.emotion.expect("labeled split carries labels");
        members.push((item.id.clone(), "actor"));
        members.push((item.id, "reactor"));
        data.labeled.push((item.pair.actor, e));
        data.labeled.push((item.pair.reactor, e));
    }
    let mut unlabeled = dataset.load(Split::UnlabeledTrain)?;
    if let Some(n) = unlabeled_limit {
        unlabeled.truncate(n);
    }
    for item in unlabeled {
        members.push((item.id.clone(), "actor"));
        members.push((item.id, "reactor"));
        data.unlabeled.push(item.pair.actor);
        data.unlabeled.push(item.pair.reactor);
    }
    for item in dataset.load(Split::Eval)? {
        let e = item.pair.emotion.expect("eval split carries labels");
        data.eval.push((item.pair.actor, e));
        data.eval.push((item.pair.reactor, e));
    }
    Ok(Material { data, members })
}

fn train_arm(config: &RunConfig, dataset: &Dataset, unlabeled_limit: Option<usize>, out: &Path) -> Result<PriorHistory> {
    let Material { data, members } = load_material(dataset, unlabeled_limit)?;
    let all: Vec<&MotionSequence> = data.labeled.iter().map(|(m, _)| m).chain(data.unlabeled.iter()).collect();
    let normalizer = FeatureNormalizer::fit(all.iter().copied())?;
    let mut encoder = EmotionEncoder::new(config.encoder.clone(), normalizer, config.prior_train.seed, DType::F32)?;
    log::info!(
        "training encoder on {} labeled and {} unlabeled motions",
        data.labeled.len(),
        data.unlabeled.len()
    );
    let history = train_prior_encoder(&mut encoder, &data, &config.prior_train)?;
    let encoder = encoder.frozen()?;
    let labeled: Vec<(&MotionSequence, EmotionLabel)> = data.labeled.iter().map(|(m, e)| (m, *e)).collect();
    let fit = fit_prior(&encoder, &labeled, &all, config.prior_fit.kmeans_iters)?;

    encoder.save(&out.join(layout::ENCODER_DIR))?;
    fit.prior.save(&out.join(layout::PRIOR_FILE))?;
    let clusters: Vec<ClusterRecord> = members
        .into_iter()
        .zip(&fit.assignments)
        .map(|((id, role), &cluster)| ClusterRecord { id, role: role.to_string(), cluster })
        .collect();
    write_json(&out.join(layout::CLUSTERS_FILE), &clusters)?;
    let log = PriorLog {
        unlabeled_sequences: data.unlabeled.len() / 2,
        history: history.clone(),
        fit: FitLog {
            iterations: fit.iterations,
            converged: fit.converged,
            fallback_classes: fit.fallback_classes,
        },
    };
    write_json(&out.join(layout::PRIOR_LOG_FILE), &log)?;
    config.write_resolved(out)?;
    Ok(history)
}

fn percent(acc: Option<f64>) -> String {
    acc.map_or_else(|| "n/a".to_string(), |a| format!("{:.1}%", 100.0 * a))
}

pub(super) fn run(session: &Session, args: &TrainPriorArgs) -> Result<()> {
    let mut config = session.config.clone();
    if let Some(epochs) = args.epochs {
        config.prior_train.epochs = epochs;
    }
    let out = session.out_dir()?;
    let dataset = Dataset::open(&args.dataset)?;

    if args.unlabeled_count.len() > 1 {
        let mut arms = Vec::new();
        for &n in &args.unlabeled_count {
            let name = format!("unlabeled-{n}");
            let dir = out.join(&name);
            create_out_dir(&dir)?;
            let history = train_arm(&config, &dataset, Some(n), &dir)?;
            println!("unlabeled {n:>5}: eval accuracy {}", percent(history.best_accuracy));
            arms.push(SweepArm {
                unlabeled: n,
                dir: name,
                best_accuracy: history.best_accuracy,
                best_epoch: history.best_epoch,
            });
        }
        write_json(&out.join(layout::SWEEP_FILE), &arms)?;
        config.write_resolved(out)?;
        return Ok(());
    }

    let limit = if args.supervised_only { Some(0) } else { args.unlabeled_count.first().copied() };
    let history = train_arm(&config, &dataset, limit, out)?;
    println!(
        "prior {}: eval accuracy {} (epoch {})",
        out.display(),
        percent(history.best_accuracy),
        history.best_epoch.map_or_else(|| "n/a".to_string(), |e| e.to_string())
    );
    Ok(())
}
