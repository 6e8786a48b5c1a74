//! Parameter checkpoints.
//!
//! Layout: `u64` little-endian header length, a UTF-8 JSON header of that
//! length, then every tensor in header order as little-endian `f32`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Matrix, Parameter, Real};
use crate::{Error, Result};

pub const FORMAT: &str = "evgraph-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub metadata: serde_json::Value,
    pub hyperparameters: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint<'a, W: Write>(
    mut w: W,
    metadata: serde_json::Value,
    hyperparameters: serde_json::Value,
    params: impl IntoIterator<Item = &'a Parameter> + Clone,
) -> Result<()> {
    let header = CheckpointHeader {
        format: FORMAT.into(),
        version: VERSION,
        metadata,
        hyperparameters,
        tensors: params
            .clone()
            .into_iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: [p.value().rows(), p.value().cols()],
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::new();
    for p in params {
        buf.clear();
        for &v in p.value().data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(CheckpointHeader, Vec<Matrix>)> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| Error::Format("checkpoint truncated before header".into()))?;
    let len = u64::from_le_bytes(len);
    if len > (1 << 30) {
        return Err(Error::Format(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)
        .map_err(|_| Error::Format("checkpoint truncated inside header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&json)
        .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint {} v{}",
            header.format, header.version
        )));
    }
    let mut out = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let [rows, cols] = t.shape;
        let mut bytes = vec![0u8; rows * cols * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::Format(format!("checkpoint truncated in tensor {}", t.name)))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as Real)
            .collect();
        out.push(Matrix::from_vec(rows, cols, data)?);
    }
    Ok((header, out))
}
