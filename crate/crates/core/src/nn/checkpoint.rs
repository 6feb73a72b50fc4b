//! Checkpoint archive: a directory holding `config.json` plus one `.ten` blob
//! per named parameter. A blob is magic `TEN1`, little-endian `u32` rank,
//! `rank` `u32` dims, then `f32` data in row-major order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::Serialize;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"TEN1";

const CONFIG_FILE: &str = "config.json";
const BLOB_EXT: &str = "ten";

pub fn tensor_to_bytes(t: &Tensor) -> Result<Vec<u8>> {
    let dims = t.dims();
    let data = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    let mut out = Vec::with_capacity(8 + 4 * dims.len() + 4 * data.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn tensor_from_bytes(bytes: &[u8], origin: &Path) -> Result<Tensor> {
    let bad = |msg: &str| Error::format(origin, msg.to_string());
    if bytes.len() < 8 || &bytes[..4] != TENSOR_MAGIC {
        return Err(bad("missing TEN1 header"));
    }
    let word = |i: usize| -> Result<usize> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .ok_or_else(|| bad("truncated header"))
    };
    let rank = word(1)?;
    let dims = (0..rank).map(|i| word(2 + i)).collect::<Result<Vec<_>>>()?;
    let body = &bytes[8 + 4 * rank..];
    let count: usize = dims.iter().product();
    if body.len() != 4 * count {
        return Err(bad("body size does not match dims"));
    }
    let data: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor::from_vec(data, dims, &Device::Cpu)?)
}

pub fn save_checkpoint(
    dir: &Path,
    config: &impl Serialize,
    tensors: &BTreeMap<String, Tensor>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg = dir.join(CONFIG_FILE);
    fs::write(&cfg, serde_json::to_vec_pretty(config)?).map_err(|e| Error::io(&cfg, e))?;
    for (name, t) in tensors {
        let path = dir.join(format!("{name}.{BLOB_EXT}"));
        fs::write(&path, tensor_to_bytes(t)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Returns the parsed `config.json` and all parameter blobs (as `f32` CPU tensors).
pub fn load_checkpoint(dir: &Path) -> Result<(serde_json::Value, BTreeMap<String, Tensor>)> {
    let cfg = dir.join(CONFIG_FILE);
    if !cfg.is_file() {
        return Err(Error::MissingArtifact(cfg));
    }
    let config = serde_json::from_slice(&fs::read(&cfg).map_err(|e| Error::io(&cfg, e))?)?;
    let mut tensors = BTreeMap::new();
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some(BLOB_EXT) {
            continue;
        }
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::format(&path, "non-UTF-8 parameter name"))?
            .to_string();
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        tensors.insert(name, tensor_from_bytes(&bytes, &path)?);
    }
    Ok((config, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn archive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut map = BTreeMap::new();
        let t = Tensor::new(&[[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]], &Device::Cpu).unwrap();
        map.insert("layer.weight".to_string(), t.clone());
        map.insert("scalar".to_string(), Tensor::new(&[7.0f32], &Device::Cpu).unwrap());
        save_checkpoint(dir.path(), &serde_json::json!({"dim": 3}), &map).unwrap();
        let (cfg, back) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(cfg["dim"], 3);
        assert_eq!(back.len(), 2);
        assert_eq!(
            back["layer.weight"].to_vec2::<f32>().unwrap(),
            t.to_vec2::<f32>().unwrap()
        );
        let raw = fs::read(dir.path().join("layer.weight.ten")).unwrap();
        assert_eq!(&raw[..4], b"TEN1");
        assert_eq!(u32::from_le_bytes(raw[4..8].try_into().unwrap()), 2);
    }

    #[test]
    fn missing_config_is_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_checkpoint(&dir.path().join("nope")),
            Err(Error::MissingArtifact(_))
        ));
    }
}
