//! Versioned text format for networks: a JSON document whose parameters are
//! base64-encoded little-endian `f64` arrays with a SHA-256 checksum per
//! dense layer.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layer::{Dense, Layer};
use super::network::{Network, Role};
use crate::error::{Error, Result};

pub const NETWORK_MAGIC: &str = "piece-network";
pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct NetworkDoc {
    magic: String,
    format_version: u32,
    role: Role,
    feature_tap: Option<usize>,
    layers: Vec<LayerDoc>,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LayerDoc {
    Dense {
        in_dim: usize,
        out_dim: usize,
        weight: String,
        bias: String,
        checksum: String,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    Softmax,
    Sigmoid,
}

pub(crate) fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

pub(crate) fn decode_f64s(text: &str, what: &str) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(text)
        .map_err(|e| Error::Format(format!("{what}: invalid base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!(
            "{what}: byte length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn layer_checksum(weight: &[f64], bias: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in weight.iter().chain(bias) {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn network_to_string(net: &Network, provenance: &BTreeMap<String, String>) -> Result<String> {
    let layers = net
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Dense(d) => LayerDoc::Dense {
                in_dim: d.in_dim,
                out_dim: d.out_dim,
                weight: encode_f64s(&d.weight),
                bias: encode_f64s(&d.bias),
                checksum: layer_checksum(&d.weight, &d.bias),
            },
            Layer::Relu => LayerDoc::Relu,
            Layer::Dropout { rate } => LayerDoc::Dropout { rate: *rate },
            Layer::Softmax => LayerDoc::Softmax,
            Layer::Sigmoid => LayerDoc::Sigmoid,
        })
        .collect();
    let doc = NetworkDoc {
        magic: NETWORK_MAGIC.to_string(),
        format_version: NETWORK_FORMAT_VERSION,
        role: net.role(),
        feature_tap: net.feature_tap(),
        layers,
        provenance: provenance.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn network_from_str(text: &str) -> Result<(Network, BTreeMap<String, String>)> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("malformed network file: {e}")))?;
    match value.get("magic").and_then(|m| m.as_str()) {
        Some(NETWORK_MAGIC) => {}
        other => {
            return Err(Error::Format(format!(
                "bad magic {other:?}, expected {NETWORK_MAGIC:?}"
            )))
        }
    }
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == NETWORK_FORMAT_VERSION as u64 => {}
        other => {
            return Err(Error::Format(format!(
                "unsupported format version {other:?}, expected {NETWORK_FORMAT_VERSION}"
            )))
        }
    }
    let doc: NetworkDoc =
        serde_json::from_value(value).map_err(|e| Error::Format(format!("malformed network file: {e}")))?;

    let mut layers = Vec::with_capacity(doc.layers.len());
    for (i, l) in doc.layers.into_iter().enumerate() {
        layers.push(match l {
            LayerDoc::Dense {
                in_dim,
                out_dim,
                weight,
                bias,
                checksum,
            } => {
                let weight = decode_f64s(&weight, &format!("layer {i} weight"))?;
                let bias = decode_f64s(&bias, &format!("layer {i} bias"))?;
                if weight.len() != in_dim * out_dim {
                    return Err(Error::dim(format!("layer {i} (dense) weight"), in_dim * out_dim, weight.len()));
                }
                if bias.len() != out_dim {
                    return Err(Error::dim(format!("layer {i} (dense) bias"), out_dim, bias.len()));
                }
                if layer_checksum(&weight, &bias) != checksum {
                    return Err(Error::Checksum { layer: i });
                }
                Layer::Dense(Dense {
                    in_dim,
                    out_dim,
                    weight,
                    bias,
                })
            }
            LayerDoc::Relu => Layer::Relu,
            LayerDoc::Dropout { rate } => Layer::Dropout { rate },
            LayerDoc::Softmax => Layer::Softmax,
            LayerDoc::Sigmoid => Layer::Sigmoid,
        });
    }
    let net = Network::new(doc.role, layers, doc.feature_tap)?;
    Ok((net, doc.provenance))
}

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    write_network(net, &BTreeMap::new(), path)
}

pub fn load_network(path: &Path) -> Result<Network> {
    Ok(read_network(path)?.0)
}

pub fn write_network(net: &Network, provenance: &BTreeMap<String, String>, path: &Path) -> Result<()> {
    fs::write(path, network_to_string(net, provenance)?)?;
    Ok(())
}

pub fn read_network(path: &Path) -> Result<(Network, BTreeMap<String, String>)> {
    network_from_str(&fs::read_to_string(path)?)
}
