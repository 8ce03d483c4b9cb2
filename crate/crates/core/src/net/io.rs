//! Model file: `ATTNET01`, a little-endian u32 header length, a JSON header,
//! then the parameter blocks as little-endian f64 in `BLOCK_NAMES` order.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{NetConfig, NetParams, BLOCK_NAMES};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, GyroScale};

const MAGIC: &[u8; 8] = b"ATTNET01";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub case_id: String,
    pub init_seed: u64,
    pub train_seed: u64,
    /// Gyro scale fitted on the training passes; reused at test time.
    pub gyro_scale: GyroScale,
    pub training_passes: Vec<String>,
    pub features: FeatureConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: NetConfig,
    pub params: NetParams,
    pub meta: ModelMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: NetConfig,
    meta: ModelMeta,
    blocks: Vec<(String, [usize; 2])>,
}

fn incompatible(msg: impl Into<String>) -> Error {
    Error::IncompatibleModel(msg.into())
}

pub fn encode_model(model: &Model) -> Result<Vec<u8>> {
    let shapes = model.config.block_shapes();
    let blocks = BLOCK_NAMES.iter().zip(shapes).map(|(n, (r, c))| (n.to_string(), [r, c])).collect();
    let header = Header {
        format_version: MODEL_FORMAT_VERSION,
        config: model.config.clone(),
        meta: model.meta.clone(),
        blocks,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * model.params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (blk, (r, c)) in model.params.blocks().iter().zip(shapes) {
        if blk.len() != r * c {
            return Err(incompatible("parameter shapes do not match the configuration"));
        }
        for v in *blk {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(incompatible("not a model file"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| incompatible("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| incompatible(format!("bad header: {e}")))?;
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(incompatible(format!(
            "format version {} (expected {MODEL_FORMAT_VERSION})",
            header.format_version
        )));
    }
    header.config.validate().map_err(|e| incompatible(e.to_string()))?;
    let expected = header.config.block_shapes();
    if header.blocks.len() != expected.len() {
        return Err(incompatible(format!("{} parameter blocks (expected 8)", header.blocks.len())));
    }
    for ((name, shape), (want_name, want)) in header.blocks.iter().zip(BLOCK_NAMES.iter().zip(expected)) {
        if name != want_name || *shape != [want.0, want.1] {
            return Err(incompatible(format!(
                "block {name} has shape {shape:?}; configuration implies {want_name} {:?}",
                [want.0, want.1]
            )));
        }
    }
    let mut data = &bytes[12 + hlen..];
    let total: usize = expected.iter().map(|(r, c)| r * c).sum();
    if data.len() != 8 * total {
        return Err(incompatible(format!("{} parameter bytes (expected {})", data.len(), 8 * total)));
    }
    let mut take = |len: usize| -> Vec<f64> {
        let (head, rest) = data.split_at(8 * len);
        data = rest;
        head.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
    };
    let mut w = Vec::with_capacity(4);
    let mut b = Vec::with_capacity(4);
    for k in 0..4 {
        let (r, c) = expected[2 * k];
        w.push(Array2::from_shape_vec((r, c), take(r * c)).expect("checked shape"));
        b.push(Array1::from(take(expected[2 * k + 1].1)));
    }
    let params = NetParams {
        w: w.try_into().expect("four blocks"),
        b: b.try_into().expect("four blocks"),
    };
    if !params.is_finite() {
        return Err(incompatible("non-finite parameters"));
    }
    Ok(Model { config: header.config, params, meta: header.meta })
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    decode_model(&std::fs::read(path)?)
}
