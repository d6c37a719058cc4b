//! Binary checkpoint: `MPNODECK`, a little-endian u64 header length, a JSON
//! header, then every parameter block as little-endian f64 in declared order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Activation, Layer, ModelConfig, MpNodeModel};
use crate::ad::Tensor;
use crate::datasets::{bytes_to_f64s, f64s_to_bytes, NormStats};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MPNODECK";

/// Trained parameters together with the normalization they expect.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MpNodeModel,
    /// Statistics of the data the parameters were last fitted on.
    pub norm: Option<NormStats>,
    /// For fine-tuned models, the statistics of the original training data.
    pub source_norm: Option<NormStats>,
    pub provenance: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    d: usize,
    p: usize,
    c: usize,
    hidden: Vec<usize>,
    activation: Activation,
    norm: Option<NormStats>,
    source_norm: Option<NormStats>,
    #[serde(default)]
    provenance: serde_json::Value,
}

impl Checkpoint {
    pub fn new(model: MpNodeModel, norm: Option<NormStats>) -> Self {
        Checkpoint {
            model,
            norm,
            source_norm: None,
            provenance: serde_json::Value::Null,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.model.config();
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            d: cfg.state_dim,
            p: cfg.message_dim,
            c: cfg.control_dim,
            hidden: cfg.hidden.clone(),
            activation: cfg.activation,
            norm: self.norm.clone(),
            source_norm: self.source_norm.clone(),
            provenance: self.provenance.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.model.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.model.params() {
            out.extend_from_slice(&f64s_to_bytes(t.data()));
        }
        out
    }

    /// `origin` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |detail: String| Error::format(origin, detail);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad(format!("header length {hlen} exceeds file size")))?;
        let header: Header = serde_json::from_slice(&bytes[16..body]).map_err(|e| bad(format!("header: {e}")))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(bad(format!(
                "unsupported format_version {}, expected {CHECKPOINT_VERSION}",
                header.format_version
            )));
        }
        let config = ModelConfig {
            state_dim: header.d,
            message_dim: header.p,
            control_dim: header.c,
            hidden: header.hidden,
            activation: header.activation,
        };
        let shapes = config.layer_shapes();
        let expected: usize = shapes.iter().map(|(o, i)| o * i + o).sum();
        let params = &bytes[body..];
        if params.len() != expected * 8 {
            return Err(bad(format!(
                "size mismatch: expected {} parameter bytes, found {}",
                expected * 8,
                params.len()
            )));
        }
        let values = bytes_to_f64s(params);
        let mut at = 0;
        let mut take = |n: usize| {
            let v = values[at..at + n].to_vec();
            at += n;
            v
        };
        let layers = shapes
            .iter()
            .map(|&(o, i)| Layer {
                weight: Tensor::matrix(o, i, take(o * i)).expect("sized"),
                bias: Tensor::vector(take(o)),
            })
            .collect();
        for norm in header.norm.iter().chain(&header.source_norm) {
            if norm.dim() != config.state_dim {
                return Err(bad(format!(
                    "normalization has {} dims, model has {}",
                    norm.dim(),
                    config.state_dim
                )));
            }
        }
        Ok(Checkpoint {
            model: MpNodeModel::from_layers(config, layers)?,
            norm: header.norm,
            source_norm: header.source_norm,
            provenance: header.provenance,
        })
    }

    /// sha256 of the serialized checkpoint.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    /// Reject use with data of a different state or control width.
    pub fn check_compatible(&self, state_dim: usize, control_dim: usize) -> Result<()> {
        let cfg = self.model.config();
        if cfg.state_dim != state_dim || cfg.control_dim != control_dim {
            return Err(Error::Compatibility(format!(
                "checkpoint has d={}, c={}; data has d={state_dim}, c={control_dim}",
                cfg.state_dim, cfg.control_dim
            )));
        }
        Ok(())
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}
