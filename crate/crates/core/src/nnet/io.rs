//! JSON model files.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "layer_dims": [2, 32, 2],
//!   "activation": "relu",
//!   "layers": [{ "weight": [...], "bias": [...] }, ...],
//!   "energy_slope_w": -1.0,
//!   "ood_head": null
//! }
//! ```
//!
//! Weights are flattened row-major with shape `out × in`. The head, when
//! present, stores `width`, `hidden_weight` (`width × penultimate`),
//! `hidden_bias`, `output_weight` and `output_bias`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::mlp::{Activation, Dense, MlpModel, OodHead, ParamSet};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    layer_dims: Vec<usize>,
    activation: Activation,
    layers: Vec<LayerFile>,
    energy_slope_w: f64,
    ood_head: Option<HeadFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    weight: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadFile {
    width: usize,
    hidden_weight: Vec<f64>,
    hidden_bias: Vec<f64>,
    output_weight: Vec<f64>,
    output_bias: f64,
}

impl MlpModel {
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            layer_dims: self.layer_dims(),
            activation: self.activation(),
            layers: self
                .layers()
                .iter()
                .map(|l| LayerFile {
                    weight: l.weight.as_slice().to_vec(),
                    bias: l.bias.clone(),
                })
                .collect(),
            energy_slope_w: self.energy_slope(),
            ood_head: self.head().map(|h| HeadFile {
                width: h.width(),
                hidden_weight: h.hidden_weight.as_slice().to_vec(),
                hidden_bias: h.hidden_bias.clone(),
                output_weight: h.output_weight.clone(),
                output_bias: h.output_bias,
            }),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        if file.layer_dims.len() != file.layers.len() + 1 {
            return Err(Error::shape("layer_dims does not match the number of layers"));
        }
        let layers = file
            .layers
            .into_iter()
            .zip(file.layer_dims.windows(2))
            .map(|(l, dims)| {
                Ok(Dense {
                    weight: Matrix::from_vec(dims[1], dims[0], l.weight)?,
                    bias: l.bias,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ood_head = match file.ood_head {
            Some(h) => {
                let in_dim = file.layer_dims[file.layer_dims.len() - 2];
                Some(OodHead {
                    hidden_weight: Matrix::from_vec(h.width, in_dim, h.hidden_weight)?,
                    hidden_bias: h.hidden_bias,
                    output_weight: h.output_weight,
                    output_bias: h.output_bias,
                })
            }
            None => None,
        };
        MlpModel::from_params(
            file.activation,
            ParamSet {
                layers,
                energy_slope_w: file.energy_slope_w,
                ood_head,
            },
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
