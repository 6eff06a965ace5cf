//! Checkpoint container.
//!
//! ```text
//! ogss-checkpoint
//! version 1
//! arch <descriptor>
//! tensor <name> <d0>x<d1>...
//! ...
//! payload <byte count>
//! <little-endian f32 values, tensors in header order>
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::blunder::{BlunderArch, BlunderModel};
use super::policy::{PolicyArch, PolicyModel};
use super::Network;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "ogss-checkpoint";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file: {0}")]
    Format(String),
    #[error("checkpoint format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("architecture mismatch: file has {found:?}, expected {expected:?}")]
    Architecture { found: String, expected: String },
    #[error("tensor {name}: file shape {found:?}, architecture shape {expected:?}")]
    Shape { name: String, found: Vec<usize>, expected: Vec<usize> },
    #[error("checkpoint truncated: payload has {found} bytes, expected {expected}")]
    Truncated { found: usize, expected: usize },
}

/// A network that can be rebuilt from its architecture descriptor.
pub trait Checkpoint: Network<f32> {
    fn descriptor(&self) -> String;
    fn from_descriptor(text: &str) -> Option<Self>;
}

impl Checkpoint for PolicyModel {
    fn descriptor(&self) -> String {
        self.arch.descriptor()
    }

    fn from_descriptor(text: &str) -> Option<Self> {
        PolicyArch::parse(text).map(PolicyModel::zeros)
    }
}

impl Checkpoint for BlunderModel {
    fn descriptor(&self) -> String {
        self.arch.descriptor()
    }

    fn from_descriptor(text: &str) -> Option<Self> {
        BlunderArch::parse(text).map(BlunderModel::zeros)
    }
}

fn shape_text(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub fn encode_checkpoint<N: Checkpoint>(model: &N) -> Vec<u8> {
    let mut out = format!("{MAGIC}\nversion {CHECKPOINT_VERSION}\narch {}\n", model.descriptor());
    for (name, shape) in model.named_shapes() {
        out.push_str(&format!("tensor {name} {}\n", shape_text(&shape)));
    }
    let count = model.param_count();
    out.push_str(&format!("payload {}\n", count * 4));
    let mut bytes = out.into_bytes();
    bytes.reserve(count * 4);
    for t in model.params() {
        for v in t {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

pub fn save_checkpoint<N: Checkpoint>(model: &N, path: &Path) -> Result<(), CheckpointError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_checkpoint(model))?;
    f.sync_all()?;
    Ok(())
}

fn next_line<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a str, CheckpointError> {
    let rest = &data[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CheckpointError::Truncated { found: 0, expected: 0 })?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| CheckpointError::Format("header is not UTF-8".into()))
}

pub fn decode_checkpoint<N: Checkpoint>(data: &[u8]) -> Result<N, CheckpointError> {
    let mut pos = 0;
    if next_line(data, &mut pos).map_err(|_| CheckpointError::Format("missing magic line".into()))? != MAGIC {
        return Err(CheckpointError::Format("bad magic line".into()));
    }
    let version = next_line(data, &mut pos)?
        .strip_prefix("version ")
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| CheckpointError::Format("missing version line".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let arch = next_line(data, &mut pos)?
        .strip_prefix("arch ")
        .ok_or_else(|| CheckpointError::Format("missing arch line".into()))?
        .to_string();
    let mut model = N::from_descriptor(&arch).ok_or_else(|| CheckpointError::Architecture {
        found: arch.clone(),
        expected: std::any::type_name::<N>().rsplit("::").next().unwrap_or_default().to_string(),
    })?;
    let expected_shapes = model.named_shapes();
    let mut found_shapes = Vec::new();
    let payload_len = loop {
        let line = next_line(data, &mut pos)?;
        if let Some(n) = line.strip_prefix("payload ") {
            break n.trim().parse::<usize>().map_err(|_| CheckpointError::Format("bad payload line".into()))?;
        }
        let mut parts = line.split_whitespace();
        if parts.next() != Some("tensor") {
            return Err(CheckpointError::Format(format!("unexpected header line {line:?}")));
        }
        let name = parts.next().ok_or_else(|| CheckpointError::Format("tensor line without name".into()))?;
        let shape: Vec<usize> = parts
            .next()
            .unwrap_or_default()
            .split('x')
            .map(|d| d.parse().map_err(|_| CheckpointError::Format(format!("bad shape for {name}"))))
            .collect::<Result<_, _>>()?;
        found_shapes.push((name.to_string(), shape));
    };
    for i in 0..expected_shapes.len().max(found_shapes.len()) {
        match (expected_shapes.get(i), found_shapes.get(i)) {
            (Some(e), Some(f)) if e == f => {}
            (e, f) => {
                return Err(CheckpointError::Shape {
                    name: f.or(e).map(|t| t.0.clone()).unwrap_or_default(),
                    found: f.map(|t| t.1.clone()).unwrap_or_default(),
                    expected: e.map(|t| t.1.clone()).unwrap_or_default(),
                })
            }
        }
    }
    let expected_bytes = model.param_count() * 4;
    if payload_len != expected_bytes {
        return Err(CheckpointError::Format(format!("payload declares {payload_len} bytes, shapes need {expected_bytes}")));
    }
    let payload = &data[pos..];
    if payload.len() < expected_bytes {
        return Err(CheckpointError::Truncated { found: payload.len(), expected: expected_bytes });
    }
    if payload.len() > expected_bytes {
        return Err(CheckpointError::Format(format!("{} trailing bytes after payload", payload.len() - expected_bytes)));
    }
    let mut chunks = payload.chunks_exact(4);
    for t in model.params_mut() {
        for (v, c) in t.iter_mut().zip(&mut chunks) {
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
    }
    Ok(model)
}

pub fn load_checkpoint<N: Checkpoint>(path: &Path) -> Result<N, CheckpointError> {
    decode_checkpoint(&fs::read(path)?)
}

/// Loads and additionally requires the stored architecture to equal `expected`.
pub fn load_checkpoint_as<N: Checkpoint>(path: &Path, expected: &str) -> Result<N, CheckpointError> {
    let model: N = load_checkpoint(path)?;
    if model.descriptor() != expected {
        return Err(CheckpointError::Architecture { found: model.descriptor(), expected: expected.to_string() });
    }
    Ok(model)
}
