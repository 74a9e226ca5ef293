//! Checkpoint files.
//!
//! Layout: `b"TMNC"`, `u32` version (1), `u32` header length `n`, `n`
//! bytes of UTF-8 JSON, then one TMNF matrix block per tensor in header
//! order. Biases are stored as `1 × width` matrices.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::features::{decode_matrix, encode_matrix};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ModelShape};
use crate::numkernel::{DenseMatrix, Layer, MlpParams, ParamSet};

pub const MAGIC: &[u8; 4] = b"TMNC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    feature_dim: usize,
    class_count: usize,
    scales: Vec<usize>,
    hidden: Vec<usize>,
    temporal_dim: usize,
    sources: usize,
    frames: usize,
    config: String,
    eval_weights: Vec<Vec<f64>>,
    tensors: Vec<TensorEntry>,
}

/// A trained model plus what evaluation needs to reproduce its features.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams<f32>,
    pub config: RunConfig,
    /// Frames per video the model was trained on.
    pub frames: usize,
    /// Per-scale attention used at evaluation: one row per source, then
    /// the target.
    pub eval_weights: Vec<Vec<f64>>,
}

fn tensor_entries(model: &ModelParams<f32>) -> Vec<TensorEntry> {
    let names = model.tensor_names();
    let mut out = Vec::new();
    let mut names = names.into_iter();
    for mlp in model.integrators.iter().chain(&model.classifiers) {
        for layer in &mlp.layers {
            out.push(TensorEntry {
                name: names.next().expect("weight name"),
                rows: layer.weight.rows(),
                cols: layer.weight.cols(),
            });
            out.push(TensorEntry {
                name: names.next().expect("bias name"),
                rows: 1,
                cols: layer.bias.len(),
            });
        }
    }
    out
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let shape = &self.model.shape;
        let header = Header {
            feature_dim: shape.feature_dim,
            class_count: shape.class_count,
            scales: shape.scales.clone(),
            hidden: shape.hidden.clone(),
            temporal_dim: shape.temporal_dim,
            sources: shape.sources,
            frames: self.frames,
            config: self.config.to_text(),
            eval_weights: self.eval_weights.clone(),
            tensors: tensor_entries(&self.model),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for mlp in self.model.integrators.iter().chain(&self.model.classifiers) {
            for layer in &mlp.layers {
                encode_matrix(&layer.weight, &mut out);
                let bias = DenseMatrix::from_vec(1, layer.bias.len(), layer.bias.clone()).expect("bias row");
                encode_matrix(&bias, &mut out);
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let fmt = |offset: usize, reason: String| Error::Format {
            offset: offset as u64,
            reason,
        };
        if bytes.len() < 12 {
            return Err(fmt(bytes.len(), "truncated checkpoint header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(fmt(0, "bad magic, expected TMNC".into()));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        if word(4) != VERSION {
            return Err(fmt(4, format!("unsupported checkpoint version {}", word(4))));
        }
        let len = word(8) as usize;
        let json = bytes
            .get(12..12 + len)
            .ok_or_else(|| fmt(bytes.len(), "truncated parameter directory".into()))?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| fmt(12, format!("bad parameter directory: {e}")))?;
        let shape = ModelShape {
            feature_dim: header.feature_dim,
            class_count: header.class_count,
            scales: header.scales.clone(),
            hidden: header.hidden.clone(),
            temporal_dim: header.temporal_dim,
            sources: header.sources,
        };
        shape.validate()?;

        let mut offset = 12 + len;
        let mut blocks = Vec::with_capacity(header.tensors.len());
        for entry in &header.tensors {
            let at = offset;
            let m = decode_matrix(bytes, &mut offset, 0)?;
            if m.shape() != (entry.rows, entry.cols) {
                return Err(fmt(
                    at,
                    format!("tensor {} is {:?}, directory says {}x{}", entry.name, m.shape(), entry.rows, entry.cols),
                ));
            }
            blocks.push(m);
        }
        if offset != bytes.len() {
            return Err(fmt(offset, format!("{} trailing bytes", bytes.len() - offset)));
        }

        let layers_per_integrator = shape.hidden.len() + 1;
        let mut blocks = blocks.into_iter();
        let mut take_mlp = |layers: usize| -> Result<MlpParams<f32>> {
            let mut out = Vec::with_capacity(layers);
            for _ in 0..layers {
                let (weight, bias) = match (blocks.next(), blocks.next()) {
                    (Some(w), Some(b)) => (w, b),
                    _ => return Err(Error::Format {
                        offset: offset as u64,
                        reason: "parameter directory lists too few tensors".into(),
                    }),
                };
                out.push(Layer {
                    weight,
                    bias: bias.into_values(),
                });
            }
            MlpParams::from_layers(out)
        };
        let integrators = (0..shape.scales.len())
            .map(|_| take_mlp(layers_per_integrator))
            .collect::<Result<Vec<_>>>()?;
        let classifiers = (0..shape.sources).map(|_| take_mlp(1)).collect::<Result<Vec<_>>>()?;
        let model = ModelParams::from_parts(shape, integrators, classifiers)?;
        if model.tensors().len() != header.tensors.len() {
            return Err(fmt(12, "parameter directory lists extra tensors".into()));
        }
        Ok(Self {
            model,
            config: RunConfig::parse(&header.config)?,
            frames: header.frames,
            eval_weights: header.eval_weights,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}
