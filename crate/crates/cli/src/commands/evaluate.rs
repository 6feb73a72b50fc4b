use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ereact_core::metrics::{evaluate, evaluate_ground_truth, MetricReport};
use ereact_core::prior::cluster_agreement;
use ereact_core::synth::{Dataset, EvaluationAccess, HiddenLabels, Split};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::diffusion::load_prior_artifacts;
use super::generate::load_models;
use super::{read_json, require, write_json, ClusterRecord, EvaluateArgs, Session};
use crate::error::{CliError, Result};
use crate::layout;

/// SHA-256 of a file, or of a directory's files (sorted by relative path).
pub(crate) fn content_hash(path: &Path) -> Result<String> {
    require(path)?;
    let mut hasher = Sha256::new();
    let mut files = Vec::new();
    collect_files(path, path, &mut files)?;
    files.sort();
    for rel in files {
        let full = if rel.as_os_str().is_empty() { path.to_path_buf() } else { path.join(&rel) };
        let bytes = std::fs::read(&full).map_err(|e| CliError::io(&full, e))?;
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn collect_files(root: &Path, path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_file() {
        out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        return Ok(());
    }
    for entry in std::fs::read_dir(path).map_err(|e| CliError::io(path, e))? {
        let entry = entry.map_err(|e| CliError::io(path, e))?;
        collect_files(root, &entry.path(), out)?;
    }
    Ok(())
}

fn pm(value: f64, std: f64) -> String {
    format!("{value:.3}±{std:.3}")
}

pub fn report_table_header() -> String {
    format!("{:<16} {:>14} {:>14} {:>14} {:>14}", "run", "FID", "DIV", "MM", "ACC")
}

pub fn report_row(name: &str, r: &MetricReport) -> String {
    format!(
        "{:<16} {:>14} {:>14} {:>14} {:>14}",
        name,
        pm(r.fid, r.std.fid),
        pm(r.div, r.std.div),
        pm(r.mm, r.std.mm),
        pm(r.acc, r.std.acc)
    )
}

/// Metric-by-metric table of two reports with the difference `b - a`.
pub fn compare_table(a: &MetricReport, b: &MetricReport) -> String {
    let mut lines = vec![format!("{:<8} {:>14} {:>14} {:>10}", "metric", "A", "B", "B-A")];
    let rows = [
        ("FID", a.fid, a.std.fid, b.fid, b.std.fid),
        ("DIV", a.div, a.std.div, b.div, b.std.div),
        ("MM", a.mm, a.std.mm, b.mm, b.std.mm),
        ("ACC", a.acc, a.std.acc, b.acc, b.std.acc),
    ];
    for (name, va, sa, vb, sb) in rows {
        lines.push(format!("{:<8} {:>14} {:>14} {:>+10.3}", name, pm(va, sa), pm(vb, sb), vb - va));
    }
    lines.join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Majority-vote purity over every clustered motion.
    pub agreement: f64,
    /// The same score restricted to unlabeled-split motions.
    pub unlabeled_agreement: Option<f64>,
    pub motions: usize,
}

fn agreement(dataset: &Dataset, prior_dir: &Path) -> Result<AgreementReport> {
    let clusters: Vec<ClusterRecord> = read_json(&prior_dir.join(layout::CLUSTERS_FILE))?;
    let hidden = HiddenLabels::load(dataset.root(), &EvaluationAccess::for_evaluation())?;
    let mut known: BTreeMap<&str, usize> = BTreeMap::new();
    for e in dataset.manifest().entries_in(Split::LabeledTrain) {
        known.insert(&e.id, e.emotion.expect("labeled split carries labels").index());
    }
    let unlabeled_ids: std::collections::BTreeSet<&str> =
        dataset.manifest().entries_in(Split::UnlabeledTrain).map(|e| e.id.as_str()).collect();
    let (mut all_a, mut all_l, mut unl_a, mut unl_l) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in &clusters {
        let label = match known.get(rec.id.as_str()) {
            Some(l) => *l,
            None => hidden
                .get(&rec.id)
                .ok_or_else(|| CliError::format(prior_dir.join(layout::CLUSTERS_FILE), format!("no label for {}", rec.id)))?
                .index(),
        };
        all_a.push(rec.cluster);
        all_l.push(label);
        if unlabeled_ids.contains(rec.id.as_str()) {
            unl_a.push(rec.cluster);
            unl_l.push(label);
        }
    }
    Ok(AgreementReport {
        agreement: cluster_agreement(&all_a, &all_l)?,
        unlabeled_agreement: if unl_a.is_empty() { None } else { Some(cluster_agreement(&unl_a, &unl_l)?) },
        motions: all_a.len(),
    })
}

fn needed<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| CliError::Usage(format!("evaluate needs {flag} <DIR>")))
}

pub(super) fn run(session: &Session, args: &EvaluateArgs) -> Result<()> {
    if let Some(paths) = &args.compare {
        let a = MetricReport::load(&paths[0]).or_else(|e| Err(missing_or(e, &paths[0])))?;
        let b = MetricReport::load(&paths[1]).or_else(|e| Err(missing_or(e, &paths[1])))?;
        println!("A = {}\nB = {}", paths[0].display(), paths[1].display());
        println!("{}", compare_table(&a, &b));
        return Ok(());
    }
    let scoring = args.ground_truth || args.diffusion.is_some();
    if !scoring && !args.cluster_agreement {
        return Err(CliError::Usage(
            "evaluate needs --diffusion, --ground-truth, --cluster-agreement or --compare".into(),
        ));
    }
    let dataset_dir = needed(&args.dataset, "--dataset")?;
    let prior_dir = needed(&args.prior, "--prior")?;
    let dataset = Dataset::open(dataset_dir)?;

    let mut config = session.config.clone();
    if let Some(n) = args.max_actors {
        config.metrics.max_actors = Some(n);
    }
    config.metrics.sampler = args.sampler.resolve(config.metrics.sampler)?;
    config.metrics.ground_truth = args.ground_truth;

    let agreement_report = if args.cluster_agreement { Some(agreement(&dataset, prior_dir)?) } else { None };
    let report = if scoring {
        let mut checkpoints = BTreeMap::new();
        checkpoints.insert("encoder".to_string(), content_hash(&prior_dir.join(layout::ENCODER_DIR))?);
        checkpoints.insert("prior".to_string(), content_hash(&prior_dir.join(layout::PRIOR_FILE))?);
        let mut report = if args.ground_truth {
            let (encoder, _) = load_prior_artifacts(prior_dir)?;
            evaluate_ground_truth(&encoder, &dataset, &config.metrics)?
        } else {
            let diffusion_dir = needed(&args.diffusion, "--diffusion")?;
            checkpoints.insert("denoiser".to_string(), content_hash(&diffusion_dir.join(layout::DENOISER_DIR))?);
            checkpoints.insert("schedule".to_string(), content_hash(&diffusion_dir.join(layout::SCHEDULE_FILE))?);
            let models = load_models(prior_dir, diffusion_dir)?;
            evaluate(&models, &dataset, &config.metrics)?
        };
        report.checkpoints = checkpoints;
        Some(report)
    } else {
        None
    };

    let out = session.out_dir()?;
    if let Some(a) = &agreement_report {
        write_json(&out.join(layout::AGREEMENT_FILE), a)?;
        println!(
            "cluster agreement {:.3} over {} motions (unlabeled {})",
            a.agreement,
            a.motions,
            a.unlabeled_agreement.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
        );
    }
    if let Some(r) = &report {
        r.save(&out.join(layout::REPORT_FILE))?;
        println!("{}", report_table_header());
        println!("{}", report_row(if r.ground_truth { "ground-truth" } else { "generated" }, r));
    }
    config.write_resolved(out)?;
    Ok(())
}

fn missing_or(e: ereact_core::Error, path: &Path) -> CliError {
    if path.exists() {
        CliError::Core(e)
    } else {
        CliError::Missing(path.to_path_buf())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ereact_core::metrics::{MetricStd, ReportCounts};

    fn report(fid: f64, acc: f64) -> MetricReport {
        MetricReport {
            fid,
            div: 2.0,
            div_real: 2.1,
            div_gap: 0.1,
            mm: 1.0,
            acc,
            std: MetricStd { fid: 0.1, div: 0.0, mm: 0.0, acc: 0.01 },
            counts: ReportCounts::default(),
            seed: 0,
            ground_truth: false,
            sampler: None,
            checkpoints: BTreeMap::new(),
        }
    }

    #[test]
    fn compare_table_lists_deltas() {
        let t = compare_table(&report(1.0, 0.5), &report(0.75, 0.75));
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("FID") && lines[1].trim_end().ends_with("-0.250"), "{t}");
        assert!(lines[4].starts_with("ACC") && lines[4].trim_end().ends_with("+0.250"), "{t}");
    }

    #[test]
    fn row_has_all_four_metrics() {
        let row = report_row("x", &report(1.5, 0.9));
        assert!(row.contains("1.500±0.100") && row.contains("0.900±0.010"), "{row}");
    }

    #[test]
    fn directory_hash_tracks_content_and_names() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a"), b"1").unwrap();
        std::fs::write(dir.path().join("b"), b"2").unwrap();
        let h1 = content_hash(dir.path()).unwrap();
        assert_eq!(h1, content_hash(dir.path()).unwrap());
        std::fs::write(dir.path().join("b"), b"3").unwrap();
        assert_ne!(h1, content_hash(dir.path()).unwrap());
        assert_eq!(content_hash(&dir.path().join("a")).unwrap().len(), 64);
        assert!(matches!(content_hash(&dir.path().join("zz")), Err(CliError::Missing(_))));
    }
}
