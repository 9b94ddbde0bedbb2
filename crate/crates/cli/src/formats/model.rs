//! Network model files: one JSON document describing the input shape
//! and an ordered layer list with inline weights.
//!
//! ```json
//! {
//!   "name": "toy",
//!   "input": [4, 4, 1],
//!   "layers": [
//!     {"kind": "conv2d", "kernel": [3, 3], "in_channels": 1,
//!      "out_channels": 2, "stride": 1, "padding": 0,
//!      "weights": [...], "biases": [0.0, 0.0]},
//!     {"kind": "relu"},
//!     {"kind": "maxpool", "window": 2, "stride": 2},
//!     {"kind": "flatten"},
//!     {"kind": "dense", "in_dim": 2, "out_dim": 3,
//!      "weights": [...], "biases": [0.0, 0.0, 0.0]}
//!   ]
//! }
//! ```
//!
//! Weight order: conv2d weights are flat in (out_channel, kernel_row,
//! kernel_col, in_channel) order; dense weights in (out_dim, in_dim)
//! order. A worked byte-exact example lives in `docs/formats.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shallowface_core::nn::{Layer, LayerGraph};

use crate::error::{io_err, parse_err, CliError};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    /// [height, width, channels].
    input: [usize; 3],
    layers: Vec<LayerSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum LayerSpec {
    Conv2d {
        /// [kernel_h, kernel_w].
        kernel: [usize; 2],
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        padding: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    },
    Relu,
    Maxpool {
        window: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    },
}

impl From<LayerSpec> for Layer {
    fn from(spec: LayerSpec) -> Self {
        match spec {
            LayerSpec::Conv2d {
                kernel,
                in_channels,
                out_channels,
                stride,
                padding,
                weights,
                biases,
            } => Layer::Conv2d {
                kernel_h: kernel[0],
                kernel_w: kernel[1],
                in_channels,
                out_channels,
                stride,
                padding,
                weights,
                biases,
            },
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Maxpool { window, stride } => Layer::MaxPool { window, stride },
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Dense {
                in_dim,
                out_dim,
                weights,
                biases,
            } => Layer::Dense {
                in_dim,
                out_dim,
                weights,
                biases,
            },
        }
    }
}

impl From<&Layer> for LayerSpec {
    fn from(layer: &Layer) -> Self {
        match layer {
            Layer::Conv2d {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
                stride,
                padding,
                weights,
                biases,
            } => LayerSpec::Conv2d {
                kernel: [*kernel_h, *kernel_w],
                in_channels: *in_channels,
                out_channels: *out_channels,
                stride: *stride,
                padding: *padding,
                weights: weights.clone(),
                biases: biases.clone(),
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::MaxPool { window, stride } => LayerSpec::Maxpool {
                window: *window,
                stride: *stride,
            },
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Dense {
                in_dim,
                out_dim,
                weights,
                biases,
            } => LayerSpec::Dense {
                in_dim: *in_dim,
                out_dim: *out_dim,
                weights: weights.clone(),
                biases: biases.clone(),
            },
        }
    }
}

/// Loads and shape-validates a model file.
pub fn load_model(path: &Path) -> Result<LayerGraph, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let file: ModelFile =
        serde_json::from_slice(&bytes).map_err(|e| parse_err(path, e))?;
    let layers: Vec<Layer> = file.layers.into_iter().map(Layer::from).collect();
    let (h, w, c) = (file.input[0], file.input[1], file.input[2]);
    Ok(LayerGraph::new(file.name, (h, w, c), layers)?)
}

/// Writes a model in the documented format.
pub fn save_model(path: &Path, graph: &LayerGraph) -> Result<(), CliError> {
    let file = ModelFile {
        name: graph.name().to_string(),
        input: {
            let (h, w, c) = graph.input_spec();
            [h, w, c]
        },
        layers: graph.layers().iter().map(LayerSpec::from).collect(),
    };
    let json = serde_json::to_string_pretty(&file).expect("model serializes");
    std::fs::write(path, json + "\n").map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_json() -> &'static str {
        r#"{
            "name": "toy",
            "input": [2, 2, 1],
            "layers": [
                {"kind": "relu"},
                {"kind": "flatten"},
                {"kind": "dense", "in_dim": 4, "out_dim": 2,
                 "weights": [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
                 "biases": [0.25, -0.25]}
            ]
        }"#
    }

    #[test]
    fn loads_valid_three_layer_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, toy_json()).unwrap();
        let g = load_model(&path).unwrap();
        assert_eq!(g.layers().len(), 3);
        assert_eq!(g.name(), "toy");
        assert_eq!(g.output_len(), 2);
    }

    #[test]
    fn bad_dense_weight_count_is_a_shape_error_naming_the_layer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(
            &path,
            toy_json().replace("0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0", "0.0"),
        )
        .unwrap();
        let err = load_model(&path).unwrap_err();
        assert_eq!(err.class(), "shape");
        assert!(err.to_string().contains("layer 2"), "{err}");
    }

    #[test]
    fn empty_layer_list_is_a_parse_class_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, r#"{"name": "x", "input": [1,1,1], "layers": []}"#).unwrap();
        let err = load_model(&path).unwrap_err();
        assert_eq!(err.class(), "parse");
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, "{nope").unwrap();
        assert_eq!(load_model(&path).unwrap_err().class(), "parse");
    }

    #[test]
    fn round_trip_preserves_graph_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, toy_json()).unwrap();
        let g = load_model(&path).unwrap();
        let out = dir.path().join("copy.json");
        save_model(&out, &g).unwrap();
        let g2 = load_model(&out).unwrap();
        assert_eq!(g, g2);
    }
}
