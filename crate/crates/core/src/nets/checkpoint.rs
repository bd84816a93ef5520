//! Single-file checkpoints: one line of JSON manifest, then the parameter
//! blob as little-endian `f32` values in manifest order.

use std::fs;
use std::path::Path;

use seastate_autodiff::{RunningStats, Scalar};
use serde::{Deserialize, Serialize};

use super::config::Architecture;
use super::model::{Model, Param};
use crate::error::{data, Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    architecture: Architecture,
    arrays: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the blob.
    offset: usize,
}

fn running_names(i: usize) -> [String; 2] {
    [format!("bn{i}.running_mean"), format!("bn{i}.running_var")]
}

pub fn encode_checkpoint<T: Scalar>(model: &Model<T>) -> Result<Vec<u8>> {
    let mut arrays = Vec::new();
    let mut blob = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, values: &[T]| {
        arrays.push(Entry { name, shape, offset: blob.len() });
        for v in values {
            blob.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    };
    for p in model.params() {
        push(p.name.clone(), p.shape.clone(), &p.value);
    }
    for (i, r) in model.running_stats().iter().enumerate() {
        let [m, v] = running_names(i);
        push(m, vec![r.mean.len()], &r.mean);
        push(v, vec![r.var.len()], &r.var);
    }
    let manifest = Manifest { format_version: FORMAT_VERSION, architecture: model.arch().clone(), arrays };
    let mut out = serde_json::to_vec(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    out.push(b'\n');
    out.extend_from_slice(&blob);
    Ok(out)
}

/// Decode, requiring the architecture kind when `expected_kind` is given.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8], expected_kind: Option<&str>) -> Result<Model<T>> {
    let Some(split) = bytes.iter().position(|&b| b == b'\n') else {
        return data("checkpoint has no manifest line");
    };
    let manifest: Manifest =
        serde_json::from_slice(&bytes[..split]).map_err(|e| Error::Data(format!("checkpoint manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return data(format!("unsupported checkpoint format version {}", manifest.format_version));
    }
    let kind = manifest.architecture.kind();
    if let Some(expected) = expected_kind {
        if expected != kind {
            return Err(Error::KindMismatch { expected: expected.into(), found: kind.into() });
        }
    }
    let blob = &bytes[split + 1..];
    let mut cursor = 0;
    let mut arrays = Vec::with_capacity(manifest.arrays.len());
    for e in manifest.arrays {
        let n: usize = e.shape.iter().product();
        if e.offset != cursor {
            return data(format!("array {} starts at byte {}, expected {cursor}", e.name, e.offset));
        }
        let end = cursor + 4 * n;
        if end > blob.len() {
            return data(format!("checkpoint blob is truncated inside array {}", e.name));
        }
        let values: Vec<T> = blob[cursor..end]
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        cursor = end;
        arrays.push(Param { name: e.name, shape: e.shape, value: values });
    }
    if cursor != blob.len() {
        return data(format!("checkpoint blob has {} trailing bytes", blob.len() - cursor));
    }
    let mut running = Vec::new();
    while let Some(last) = arrays.last() {
        if !last.name.ends_with(".running_var") {
            break;
        }
        let var = arrays.pop().expect("checked above");
        let mean = match arrays.pop() {
            Some(m) if m.name.ends_with(".running_mean") => m,
            _ => return data("running variance without a running mean"),
        };
        running.push(RunningStats { mean: mean.value, var: var.value, momentum: 0.9 });
    }
    running.reverse();
    Model::from_parts(manifest.architecture, arrays, running)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path, expected_kind: Option<&str>) -> Result<Model<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, expected_kind)
}
