//! Versioned JSON persistence for networks and their scalers.
//!
//! Weight matrices are stored as flat row-major arrays next to their
//! dimensions; values round-trip bit-exactly (shortest-round-trip float
//! formatting on write, exact parse on read).

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::network::{Activation, DenseLayer, Network};
use super::scale::Scaler;
use super::NetError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SavedLayer {
    n_in: usize,
    n_out: usize,
    activation: Activation,
    /// Row-major n_in x n_out.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// On-disk document: dims, activation tags, weights, biases, and the scaler
/// block fitted alongside the network. `extra` carries model-specific
/// metadata (e.g. the surrogate's training ranges).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub version: u32,
    input_dim: usize,
    output_dim: usize,
    layers: Vec<SavedLayer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_scalers: Option<Vec<Scaler>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_scaler: Option<Scaler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

impl SavedModel {
    pub fn from_network(net: &Network) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| SavedLayer {
                n_in: l.n_in(),
                n_out: l.n_out(),
                activation: l.activation_in,
                weights: l.weights.iter().copied().collect(),
                bias: l.bias.to_vec(),
            })
            .collect();
        Self {
            version: FORMAT_VERSION,
            input_dim: net.input_dim(),
            output_dim: net.output_dim(),
            layers,
            input_scalers: None,
            target_scaler: None,
            extra: None,
        }
    }

    pub fn with_scalers(mut self, inputs: Vec<Scaler>, target: Scaler) -> Self {
        self.input_scalers = Some(inputs);
        self.target_scaler = Some(target);
        self
    }

    pub fn into_network(self) -> Result<Network, NetError> {
        if self.version != FORMAT_VERSION {
            return Err(NetError::BadModelFile(format!(
                "unsupported format version {}",
                self.version
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.into_iter().enumerate() {
            let weights = Array2::from_shape_vec((l.n_in, l.n_out), l.weights)
                .map_err(|e| NetError::BadModelFile(format!("layer {i} weights: {e}")))?;
            layers.push(DenseLayer {
                weights,
                bias: Array1::from_vec(l.bias),
                activation_in: l.activation,
            });
        }
        Network::new(layers)
    }
}

pub fn save_model(model: &SavedModel, path: &Path) -> Result<(), NetError> {
    let text = serde_json::to_string_pretty(model)
        .map_err(|e| NetError::BadModelFile(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SavedModel, NetError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| NetError::BadModelFile(e.to_string()))
}
