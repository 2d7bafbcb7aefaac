//! Feed-forward dense networks and per-layer activation extraction.
//!
//! A [`ModelSpec`] is a chain of dense layers, each followed by an optional
//! ReLU or softmax. Models are loaded from a JSON weight file:
//!
//! ```json
//! { "input_dim": 2,
//!   "layers": [ { "kind": "dense", "activation": "relu",
//!                 "weights": [[1.0, 0.0], [0.0, 1.0]], "bias": [0.0, 0.0] } ] }
//! ```
//!
//! `weights` is row-major with one row per output neuron. Activations are
//! read after the activation function unless a [`LayerTap`] asks for the
//! pre-activation values.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Relu,
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum LayerKind {
    Dense,
}

#[derive(Serialize, Deserialize)]
struct RawLayer {
    kind: LayerKind,
    activation: Activation,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    input_dim: usize,
    layers: Vec<RawLayer>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    // row-major, out_dim x in_dim
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    /// Creates a dense layer from per-output-neuron weight rows.
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let out_dim = weights.len();
        if out_dim == 0 {
            return Err(Error::InvalidModel("dense layer has no output neurons".into()));
        }
        if bias.len() != out_dim {
            return Err(Error::DimensionMismatch {
                context: "bias length vs weight rows".into(),
                expected: out_dim,
                found: bias.len(),
            });
        }
        let in_dim = weights[0].len();
        let mut flat = Vec::with_capacity(out_dim * in_dim);
        for (r, row) in weights.iter().enumerate() {
            if row.len() != in_dim {
                return Err(Error::DimensionMismatch {
                    context: format!("weight row {r}"),
                    expected: in_dim,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        if flat.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite weight or bias".into()));
        }
        Ok(DenseLayer {
            in_dim,
            out_dim,
            weights: flat,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn pre_activation(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim.max(1))
            .take(self.out_dim)
            .zip(&self.bias)
            .map(|(row, b)| {
                let mut acc = *b;
                for (w, x) in row.iter().zip(input) {
                    acc += w * x;
                }
                acc
            })
            .collect()
    }

    fn apply_activation(&self, pre: &[f64]) -> Vec<f64> {
        match self.activation {
            Activation::None => pre.to_vec(),
            Activation::Relu => pre.iter().map(|v| v.max(0.0)).collect(),
            Activation::Softmax => softmax(pre),
        }
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Pre- and post-activation output of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerOutput {
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    input_dim: usize,
    layers: Vec<DenseLayer>,
}

impl ModelSpec {
    /// Validates the dimension chain of `layers`.
    pub fn new(input_dim: usize, layers: Vec<DenseLayer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidModel("input_dim must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::InvalidModel("model has no dense layers".into()));
        }
        let mut expected = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim != expected {
                return Err(Error::DimensionMismatch {
                    context: format!("layer {i} input"),
                    expected,
                    found: layer.in_dim,
                });
            }
            expected = layer.out_dim;
        }
        Ok(ModelSpec { input_dim, layers })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawModel = serde_json::from_str(text).map_err(|e| Error::parse("weight file", e))?;
        let layers = raw
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                DenseLayer::new(l.weights, l.bias, l.activation).map_err(|e| match e {
                    Error::DimensionMismatch {
                        context,
                        expected,
                        found,
                    } => Error::DimensionMismatch {
                        context: format!("layer {i} {context}"),
                        expected,
                        found,
                    },
                    Error::InvalidModel(m) => Error::InvalidModel(format!("layer {i}: {m}")),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ModelSpec::new(raw.input_dim, layers)
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawModel {
            input_dim: self.input_dim,
            layers: self
                .layers
                .iter()
                .map(|l| RawLayer {
                    kind: LayerKind::Dense,
                    activation: l.activation,
                    weights: l.weights.chunks(l.in_dim.max(1)).map(<[f64]>::to_vec).collect(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("model serializes")
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Post-activation output of every layer.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward_full(input)?.into_iter().map(|o| o.post).collect())
    }

    pub fn forward_full(&self, input: &[f64]) -> Result<Vec<LayerOutput>> {
        if input.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "model input".into(),
                expected: self.input_dim,
                found: input.len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite input value".into()));
        }
        let mut outputs: Vec<LayerOutput> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = outputs.last().map_or(input, |o| o.post.as_slice());
            let pre = layer.pre_activation(x);
            let post = layer.apply_activation(&pre);
            outputs.push(LayerOutput { pre, post });
        }
        Ok(outputs)
    }

    /// One activation matrix per selected tap; row `i` belongs to `inputs[i]`.
    pub fn activations_at(&self, selector: &LayerSelector, inputs: &[Vec<f64>]) -> Result<BTreeMap<LayerTap, Matrix>> {
        selector.validate(self)?;
        let mut out: BTreeMap<LayerTap, Matrix> = selector
            .taps_for(self)
            .iter()
            .map(|t| (*t, Matrix::empty(self.layers[t.index].out_dim)))
            .collect();
        for input in inputs {
            let outputs = self.forward_full(input)?;
            for (tap, m) in out.iter_mut() {
                let o = &outputs[tap.index];
                m.push_row(match tap.stage {
                    Stage::Post => &o.post,
                    Stage::Pre => &o.pre,
                });
            }
        }
        Ok(out)
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelSpec::from_json_str(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
        other => other,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Post,
    Pre,
}

/// A layer position plus whether to read values before or after its
/// activation function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LayerTap {
    pub index: usize,
    pub stage: Stage,
}

impl LayerTap {
    pub fn post(index: usize) -> Self {
        LayerTap {
            index,
            stage: Stage::Post,
        }
    }

    pub fn pre(index: usize) -> Self {
        LayerTap {
            index,
            stage: Stage::Pre,
        }
    }

    /// File-name safe identifier, `L<index>` or `L<index>-pre`.
    pub fn id(&self) -> LayerId {
        LayerId::new(self.to_string())
    }
}

impl fmt::Display for LayerTap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Stage::Post => write!(f, "L{}", self.index),
            Stage::Pre => write!(f, "L{}-pre", self.index),
        }
    }
}

/// Names the layer an activation dataset was read from.
///
/// Model layers use [`LayerTap::id`]; precomputed activations may carry any
/// name the exporter chose.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LayerId(String);

impl LayerId {
    pub fn new(name: impl Into<String>) -> Self {
        LayerId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LayerId {
    fn from(s: &str) -> Self {
        LayerId::new(s)
    }
}

/// Ordered, duplicate-free set of layer taps.
///
/// Parses from `all`, `all-pre`, or a comma-separated list of `<index>` and
/// `<index>:pre` entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerSelector {
    All,
    AllWithPre,
    Taps(Vec<LayerTap>),
}

impl LayerSelector {
    pub fn taps_for(&self, model: &ModelSpec) -> Vec<LayerTap> {
        match self {
            LayerSelector::All => (0..model.layers.len()).map(LayerTap::post).collect(),
            LayerSelector::AllWithPre => (0..model.layers.len())
                .flat_map(|i| [LayerTap::post(i), LayerTap::pre(i)])
                .collect(),
            LayerSelector::Taps(t) => t.clone(),
        }
    }

    pub fn resolve(&self, model: &ModelSpec) -> Result<LayerSelector> {
        let resolved = LayerSelector::Taps(self.taps_for(model));
        resolved.validate(model)?;
        Ok(resolved)
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        let taps = self.taps_for(model);
        if taps.is_empty() {
            return Err(Error::InvalidSelector("no layers selected".into()));
        }
        for t in &taps {
            if t.index >= model.layers.len() {
                return Err(Error::InvalidSelector(format!(
                    "layer {} does not exist (model has {} layers)",
                    t.index,
                    model.layers.len()
                )));
            }
        }
        Ok(())
    }
}

impl FromStr for LayerSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => return Ok(LayerSelector::All),
            "all-pre" => return Ok(LayerSelector::AllWithPre),
            _ => {}
        }
        let mut taps = Vec::new();
        for part in s.split(',').map(str::trim) {
            let (idx, stage) = match part.strip_suffix(":pre") {
                Some(i) => (i, Stage::Pre),
                None => (part.strip_suffix(":post").unwrap_or(part), Stage::Post),
            };
            let index = idx
                .parse::<usize>()
                .map_err(|_| Error::InvalidSelector(format!("bad entry {part:?}")))?;
            let tap = LayerTap { index, stage };
            if !taps.contains(&tap) {
                taps.push(tap);
            }
        }
        Ok(LayerSelector::Taps(taps))
    }
}
