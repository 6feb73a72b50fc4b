//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

pub fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_ereact")
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run_in(dir: &Path, args: &[&str]) -> Run {
    let Output { status, stdout, stderr } = Command::new(binary())
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    Run {
        code: status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}

/// Runs the binary and returns stdout, or an error with stderr.
pub fn ereact(dir: &Path, args: &[&str]) -> Result<String, String> {
    let r = run_in(dir, args);
    if r.code == 0 {
        Ok(r.stdout)
    } else {
        Err(format!("`ereact {}` exited {}: {}", args.join(" "), r.code, r.stderr.trim()))
    }
}

/// Small configuration that runs the whole pipeline in seconds.
pub const TINY_CONFIG: &str = r#"{
  "dataset": {"labeled_train": 14, "unlabeled_train": 14, "eval": 14, "length": 16},
  "prior_train": {"epochs": 2, "eval_every": 1},
  "diffusion_train": {"steps": 10, "batch": 4, "log_every": 5},
  "metrics": {"bootstrap": 5, "sampler": {"kind": "ddim", "steps": 5}, "diversity_pairs": 20, "multimodality_pairs": 5}
}"#;

pub fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.json");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path
}

/// SHA-256 over every file below `root` (relative path and content).
pub fn tree_hash(root: &Path) -> String {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut files = Vec::new();
    walk(root, root, &mut files);
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(root.join(&f)).unwrap());
    }
    hex::encode(h.finalize())
}

/// Tiny pipeline under `dir`: dataset `ds`, prior `prior`, denoiser `diff`.
pub fn tiny_pipeline(dir: &Path, seed: u64) -> Result<(), String> {
    write_tiny_config(dir);
    let s = seed.to_string();
    let base = ["--config", "tiny.json", "--seed", s.as_str()];
    let with = |extra: &[&str]| -> Vec<String> { base.iter().chain(extra).map(|s| s.to_string()).collect() };
    for args in [
        with(&["--out", "ds", "dataset"]),
        with(&["--out", "prior", "train-prior", "--dataset", "ds"]),
        with(&["--out", "diff", "train-diffusion", "--dataset", "ds", "--prior", "prior"]),
    ] {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ereact(dir, &refs)?;
    }
    Ok(())
}
