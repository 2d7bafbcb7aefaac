#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use neurule::dataset::{
    build_activation_dataset, load_features, load_raw_inputs, ActivationDataset, LabelColumn, LayerDatasets, Split,
};
use neurule::model::{load_model, LayerSelector};
use neurule::rules::{Op, Postcondition, Rule};

pub const FEATURE: &str = "f";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// How a random dataset draws its activation values.
#[derive(Clone, Copy, Debug)]
pub enum Texture {
    /// Few distinct values, many ties and duplicate rows.
    Grid,
    Continuous,
    /// Continuous with about a third of the values clamped to zero.
    Relu,
}

#[derive(Clone, Debug)]
pub struct Shape {
    pub rows: usize,
    pub dims: usize,
    pub positive_rate: f64,
    pub texture: Texture,
}

impl Shape {
    pub fn random(rng: &mut ChaCha8Rng, max_rows: usize, max_dims: usize) -> Self {
        let texture = *[Texture::Grid, Texture::Continuous, Texture::Relu].choose(rng).unwrap();
        Shape {
            rows: rng.gen_range(2..=max_rows),
            dims: rng.gen_range(1..=max_dims),
            positive_rate: rng.gen_range(0.02..0.98),
            texture,
        }
    }
}

pub fn draw_value(rng: &mut ChaCha8Rng, texture: Texture) -> f64 {
    match texture {
        Texture::Grid => rng.gen_range(0..5) as f64 * 0.5,
        Texture::Continuous => rng.gen_range(-2.0..3.0),
        Texture::Relu => rng.gen_range(-1.0f64..2.0).max(0.0),
    }
}

pub fn draw_row(rng: &mut ChaCha8Rng, shape: &Shape) -> Vec<f64> {
    (0..shape.dims).map(|_| draw_value(rng, shape.texture)).collect()
}

/// Labels depend partly on the activations so trees have structure to find.
/// Rows 0 and 1 are forced positive and negative.
pub fn random_dataset(rng: &mut ChaCha8Rng, shape: &Shape, split: Split) -> ActivationDataset {
    let mut rows = Vec::with_capacity(shape.rows);
    let mut labels = Vec::with_capacity(shape.rows);
    for i in 0..shape.rows {
        let row = draw_row(rng, shape);
        let signal = row[0] > 0.75;
        let label = match i {
            0 => true,
            1 => false,
            _ if rng.gen_bool(0.5) => signal,
            _ => rng.gen_bool(shape.positive_rate),
        };
        rows.push(row);
        labels.push(label);
    }
    ActivationDataset::new(
        "L0".into(),
        split,
        (0..shape.rows).map(|i| format!("r{i}")).collect(),
        neurule::matrix::Matrix::from_rows(shape.dims, &rows),
        vec![LabelColumn {
            feature: FEATURE.into(),
            values: labels,
        }],
    )
    .unwrap()
}

/// Integer confusion counts computed row by row, written without any of
/// the library's evaluation helpers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub fn oracle_fires(rule: &Rule, row: &[f64]) -> bool {
    for c in &rule.clauses {
        let v = row[c.neuron];
        let ok = match c.op {
            Op::Le => v <= c.threshold,
            Op::Gt => v > c.threshold,
        };
        if !ok {
            return false;
        }
    }
    true
}

pub fn oracle_counts(rules: &[&Rule], postcondition: Postcondition, data: &ActivationDataset, feature: &str) -> Counts {
    let labels = &data.labels.iter().find(|l| l.feature == feature).unwrap().values;
    let want = postcondition == Postcondition::Presence;
    let mut c = Counts::default();
    for (i, &label) in labels.iter().enumerate() {
        let row = data.activations.row(i);
        let fired = rules.iter().any(|r| oracle_fires(r, row));
        match (fired, label == want) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

/// The toy2d fixture: a 2-8-3 MLP over three noisy arcs, one feature per class.
pub fn toy2d_layers(selector: &str) -> (Vec<LayerDatasets>, Vec<String>) {
    let model = load_model(fixture("toy2d.model.json")).unwrap();
    let features = load_features(fixture("toy2d.features.json")).unwrap();
    let train = load_raw_inputs(fixture("toy2d.train.csv")).unwrap();
    let test = load_raw_inputs(fixture("toy2d.test.csv")).unwrap();
    let selector: LayerSelector = selector.parse().unwrap();
    let layers = build_activation_dataset(&model, &selector, &train, &test, &features).unwrap();
    (layers, features.into_iter().map(|f| f.name).collect())
}
