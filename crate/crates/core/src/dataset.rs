//! Labeled activation datasets.
//!
//! An [`ActivationDataset`] pairs the activation vectors of one layer with a
//! binary label column per feature. Features are sets of class ids: an input
//! has the feature iff its class is in the set, so a single input can carry
//! several features at once.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{LayerId, LayerSelector, ModelSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledInput {
    pub id: String,
    pub values: Vec<f64>,
    pub class_label: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub classes: BTreeSet<u32>,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, classes: impl IntoIterator<Item = u32>) -> Self {
        FeatureSpec {
            name: name.into(),
            classes: classes.into_iter().collect(),
        }
    }

    pub fn contains(&self, class: u32) -> bool {
        self.classes.contains(&class)
    }
}

/// Checks that the list is non-empty, names are unique and every feature has
/// at least one class.
pub fn validate_features(features: &[FeatureSpec]) -> Result<()> {
    if features.is_empty() {
        return Err(Error::NoFeatures);
    }
    let mut seen = HashSet::new();
    for f in features {
        if f.name.is_empty() {
            return Err(Error::InvalidFeature("empty feature name".into()));
        }
        if f.classes.is_empty() {
            return Err(Error::InvalidFeature(format!("{:?} has no classes", f.name)));
        }
        if !seen.insert(f.name.as_str()) {
            return Err(Error::InvalidFeature(format!("duplicate name {:?}", f.name)));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelColumn {
    pub feature: String,
    pub values: Vec<bool>,
}

impl LabelColumn {
    pub fn positives(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }
}

/// One label column per feature, in feature order.
pub fn assign_feature_labels(inputs: &[LabeledInput], features: &[FeatureSpec]) -> Vec<LabelColumn> {
    features
        .iter()
        .map(|f| LabelColumn {
            feature: f.name.clone(),
            values: inputs.iter().map(|i| f.contains(i.class_label)).collect(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActivationDataset {
    pub layer: LayerId,
    pub split: Split,
    pub ids: Vec<String>,
    pub activations: Matrix,
    pub labels: Vec<LabelColumn>,
}

impl ActivationDataset {
    pub fn new(
        layer: LayerId,
        split: Split,
        ids: Vec<String>,
        activations: Matrix,
        labels: Vec<LabelColumn>,
    ) -> Result<Self> {
        let n = activations.n_rows();
        if ids.len() != n {
            return Err(Error::DimensionMismatch {
                context: "dataset ids vs activation rows".into(),
                expected: n,
                found: ids.len(),
            });
        }
        let mut names = HashSet::new();
        for col in &labels {
            if col.values.len() != n {
                return Err(Error::DimensionMismatch {
                    context: format!("label column {:?}", col.feature),
                    expected: n,
                    found: col.values.len(),
                });
            }
            if !names.insert(col.feature.as_str()) {
                return Err(Error::InvalidFeature(format!(
                    "duplicate label column {:?}",
                    col.feature
                )));
            }
        }
        Ok(ActivationDataset {
            layer,
            split,
            ids,
            activations,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.activations.n_rows()
    }

    pub fn n_neurons(&self) -> usize {
        self.activations.n_cols()
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|c| c.feature.as_str())
    }

    pub fn label_column(&self, feature: &str) -> Result<&[bool]> {
        self.labels
            .iter()
            .find(|c| c.feature == feature)
            .map(|c| c.values.as_slice())
            .ok_or_else(|| Error::MissingLabel(feature.to_string()))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let ctx = "activation csv";
        let mut header = vec!["id".to_string()];
        header.extend((0..self.n_neurons()).map(|j| format!("act_{j}")));
        header.extend(self.labels.iter().map(|c| format!("feat_{}", c.feature)));
        w.write_record(&header).map_err(|e| Error::parse(ctx, e))?;
        let mut record = Vec::with_capacity(header.len());
        for (i, row) in self.activations.rows().enumerate() {
            record.clear();
            record.push(self.ids[i].clone());
            record.extend(row.iter().map(|v| v.to_string()));
            record.extend(
                self.labels
                    .iter()
                    .map(|c| if c.values[i] { "1" } else { "0" }.to_string()),
            );
            w.write_record(&record).map_err(|e| Error::parse(ctx, e))?;
        }
        w.flush().map_err(|e| Error::parse(ctx, e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parses the activation CSV schema
    /// `id,act_0,...,act_{n-1},feat_<name>,...`.
    pub fn read_csv<R: Read>(reader: R, layer: LayerId, split: Split, context: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::parse(context, e))?.clone();
        let schema_err = |row: usize, column: &str, message: String| Error::Schema {
            context: context.to_string(),
            row,
            column: column.to_string(),
            message,
        };
        if header.get(0) != Some("id") {
            return Err(schema_err(
                0,
                header.get(0).unwrap_or(""),
                "first column must be `id`".into(),
            ));
        }
        let mut n_act = 0;
        let mut features = Vec::new();
        for (c, name) in header.iter().enumerate().skip(1) {
            if let Some(feat) = name.strip_prefix("feat_") {
                features.push(feat.to_string());
            } else if !features.is_empty() {
                return Err(schema_err(0, name, "activation column after label columns".into()));
            } else if name == format!("act_{n_act}") {
                n_act += 1;
            } else {
                return Err(schema_err(0, name, format!("expected act_{} in column {c}", n_act)));
            }
        }
        let mut ids = Vec::new();
        let mut activations = Matrix::empty(n_act);
        let mut labels: Vec<Vec<bool>> = vec![Vec::new(); features.len()];
        let mut row_buf = Vec::with_capacity(n_act);
        for (r, rec) in rdr.records().enumerate() {
            let row_no = r + 1;
            let rec = rec.map_err(|e| schema_err(row_no, "", e.to_string()))?;
            if rec.len() != header.len() {
                return Err(schema_err(
                    row_no,
                    "",
                    format!("expected {} fields, found {}", header.len(), rec.len()),
                ));
            }
            ids.push(rec[0].to_string());
            row_buf.clear();
            for j in 0..n_act {
                let field = &rec[1 + j];
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| schema_err(row_no, &header[1 + j], format!("not a number: {field:?}")))?;
                if !v.is_finite() {
                    return Err(schema_err(row_no, &header[1 + j], "non-finite activation".into()));
                }
                row_buf.push(v);
            }
            activations.push_row(&row_buf);
            for (k, col) in labels.iter_mut().enumerate() {
                let c = 1 + n_act + k;
                col.push(match rec[c].trim() {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(schema_err(
                            row_no,
                            &header[c],
                            format!("label must be 0 or 1, found {other:?}"),
                        ))
                    }
                });
            }
        }
        let labels = features
            .into_iter()
            .zip(labels)
            .map(|(feature, values)| LabelColumn { feature, values })
            .collect();
        ActivationDataset::new(layer, split, ids, activations, labels)
    }
}

/// Loads an activation CSV.
///
/// Files named `<layer>.<split>.csv` (e.g. `L0.train.csv`) take their layer
/// id and split from the name; any other file is read as the training split
/// of a layer named after the file stem.
pub fn load_activation_csv(path: impl AsRef<Path>) -> Result<ActivationDataset> {
    let path = path.as_ref();
    let (layer, split) = layer_and_split_from_path(path);
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ActivationDataset::read_csv(std::io::BufReader::new(file), layer, split, &path.display().to_string())
}

pub fn layer_and_split_from_path(path: &Path) -> (LayerId, Split) {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    match stem.rsplit_once('.') {
        Some((layer, "train")) => (LayerId::new(layer), Split::Train),
        Some((layer, "test")) => (LayerId::new(layer), Split::Test),
        _ => (LayerId::new(stem), Split::Train),
    }
}

pub fn activation_file_name(layer: &LayerId, split: Split) -> String {
    format!("{layer}.{split}.csv")
}

/// Reads a raw-input CSV with header `id,v_0,...,v_{m-1},class`.
pub fn read_raw_inputs<R: Read>(reader: R, context: &str) -> Result<Vec<LabeledInput>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::parse(context, e))?.clone();
    let schema_err = |row: usize, column: &str, message: String| Error::Schema {
        context: context.to_string(),
        row,
        column: column.to_string(),
        message,
    };
    let n = header.len();
    if n < 3 || &header[0] != "id" || &header[n - 1] != "class" {
        return Err(schema_err(0, "", "header must be id,v_0,...,v_{m-1},class".into()));
    }
    for (j, name) in header.iter().enumerate().skip(1).take(n - 2) {
        if name != format!("v_{}", j - 1) {
            return Err(schema_err(0, name, format!("expected v_{}", j - 1)));
        }
    }
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row_no = r + 1;
        let rec = rec.map_err(|e| schema_err(row_no, "", e.to_string()))?;
        if rec.len() != n {
            return Err(schema_err(
                row_no,
                "",
                format!("expected {n} fields, found {}", rec.len()),
            ));
        }
        let values = (1..n - 1)
            .map(|j| {
                rec[j]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| schema_err(row_no, &header[j], format!("not a finite number: {:?}", &rec[j])))
            })
            .collect::<Result<Vec<_>>>()?;
        let class_label = rec[n - 1]
            .trim()
            .parse::<u32>()
            .map_err(|_| schema_err(row_no, "class", format!("not a class id: {:?}", &rec[n - 1])))?;
        out.push(LabeledInput {
            id: rec[0].to_string(),
            values,
            class_label,
        });
    }
    Ok(out)
}

pub fn load_raw_inputs(path: impl AsRef<Path>) -> Result<Vec<LabeledInput>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw_inputs(std::io::BufReader::new(file), &path.display().to_string())
}

/// Reads a feature config, `[ { "name": "Line", "classes": [1,4,7] } ]`.
pub fn load_features(path: impl AsRef<Path>) -> Result<Vec<FeatureSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let features: Vec<FeatureSpec> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
    validate_features(&features)?;
    Ok(features)
}

/// Train and test datasets for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerDatasets {
    pub layer: LayerId,
    pub train: ActivationDataset,
    pub test: ActivationDataset,
}

/// Runs every input through the model and joins the selected layers'
/// activations with the feature labels. Misclassified inputs are kept.
pub fn build_activation_dataset(
    model: &ModelSpec,
    selector: &LayerSelector,
    train: &[LabeledInput],
    test: &[LabeledInput],
    features: &[FeatureSpec],
) -> Result<Vec<LayerDatasets>> {
    validate_features(features)?;
    let train_ids: HashSet<&str> = train.iter().map(|i| i.id.as_str()).collect();
    if let Some(dup) = test.iter().find(|i| train_ids.contains(i.id.as_str())) {
        return Err(Error::OverlappingSplits(dup.id.clone()));
    }
    let build = |inputs: &[LabeledInput], split: Split| -> Result<Vec<ActivationDataset>> {
        let values: Vec<Vec<f64>> = inputs.iter().map(|i| i.values.clone()).collect();
        let acts = model.activations_at(selector, &values)?;
        let labels = assign_feature_labels(inputs, features);
        let ids: Vec<String> = inputs.iter().map(|i| i.id.clone()).collect();
        acts.into_iter()
            .map(|(tap, m)| ActivationDataset::new(tap.id(), split, ids.clone(), m, labels.clone()))
            .collect()
    };
    let tr = build(train, Split::Train)?;
    let te = build(test, Split::Test)?;
    Ok(tr
        .into_iter()
        .zip(te)
        .map(|(train, test)| LayerDatasets {
            layer: train.layer.clone(),
            train,
            test,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, DenseLayer};

    fn input(id: &str, class: u32) -> LabeledInput {
        LabeledInput {
            id: id.into(),
            values: vec![0.0, 0.0],
            class_label: class,
        }
    }

    #[test]
    fn multi_feature_labels() {
        let features = [FeatureSpec::new("Digit 1", [1]), FeatureSpec::new("Line", [1, 4, 7])];
        let cols = assign_feature_labels(&[input("a", 1)], &features);
        assert_eq!(cols[0].values, vec![true]);
        assert_eq!(cols[1].values, vec![true]);
        let cols = assign_feature_labels(&[input("a", 0)], &features[1..]);
        assert_eq!(cols[0].values, vec![false]);
    }

    #[test]
    fn circle_membership() {
        let inputs: Vec<_> = (0..6).map(|c| input(&c.to_string(), c)).collect();
        let cols = assign_feature_labels(&inputs, &[FeatureSpec::new("Circle", [0, 6, 8, 9])]);
        assert_eq!(cols[0].values, vec![true, false, false, false, false, false]);
    }

    #[test]
    fn feature_validation() {
        assert!(matches!(validate_features(&[]), Err(Error::NoFeatures)));
        assert!(validate_features(&[FeatureSpec::new("a", [])]).is_err());
        assert!(validate_features(&[FeatureSpec::new("a", [1]), FeatureSpec::new("a", [2])]).is_err());
    }

    fn identity() -> ModelSpec {
        ModelSpec::new(
            2,
            vec![DenseLayer::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0], Activation::None).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn identity_dataset_shape() {
        let train = [
            LabeledInput {
                id: "a".into(),
                values: vec![1.0, 2.0],
                class_label: 0,
            },
            LabeledInput {
                id: "b".into(),
                values: vec![3.0, 4.0],
                class_label: 1,
            },
        ];
        let test = [LabeledInput {
            id: "c".into(),
            values: vec![5.0, 6.0],
            class_label: 1,
        }];
        let sets = build_activation_dataset(
            &identity(),
            &"0".parse().unwrap(),
            &train,
            &test,
            &[FeatureSpec::new("one", [1])],
        )
        .unwrap();
        assert_eq!(sets.len(), 1);
        let tr = &sets[0].train;
        assert_eq!((tr.n_rows(), tr.n_neurons(), tr.labels.len()), (2, 2, 1));
        assert_eq!(tr.label_column("one").unwrap(), &[false, true]);
        assert_eq!(sets[0].test.split, Split::Test);
    }

    #[test]
    fn empty_feature_list_is_an_error() {
        let err = build_activation_dataset(&identity(), &"0".parse().unwrap(), &[], &[], &[]).unwrap_err();
        assert_eq!(err.to_string(), "no features configured");
    }

    #[test]
    fn overlapping_split_ids_rejected() {
        let a = [input("x", 0)];
        let err = build_activation_dataset(
            &identity(),
            &"0".parse().unwrap(),
            &a,
            &a,
            &[FeatureSpec::new("f", [0])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::OverlappingSplits(id) if id == "x"));
    }

    #[test]
    fn reads_small_csv() {
        let text = "id,act_0,act_1,feat_Line\na,0.5,1,1\nb,-2,0,0\nc,3e-3,7,1\n";
        let d = ActivationDataset::read_csv(text.as_bytes(), "L0".into(), Split::Train, "t").unwrap();
        assert_eq!((d.n_rows(), d.n_neurons()), (3, 2));
        assert_eq!(d.activations.row(2), &[3e-3, 7.0]);
        assert_eq!(d.label_column("Line").unwrap(), &[true, false, true]);
    }

    #[test]
    fn non_binary_label_is_rejected() {
        let text = "id,act_0,feat_Line\na,0.5,1\nb,0.1,2\n";
        let err = ActivationDataset::read_csv(text.as_bytes(), "L0".into(), Split::Train, "t").unwrap_err();
        match err {
            Error::Schema { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "feat_Line");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors() {
        for bad in [
            "x,act_0\n",
            "id,act_1\n",
            "id,feat_a,act_0\n",
            "id,act_0\na,nan\n",
            "id,act_0\na,zz\n",
        ] {
            assert!(
                ActivationDataset::read_csv(bad.as_bytes(), "L".into(), Split::Train, "t").is_err(),
                "{bad}"
            );
        }
    }

    #[test]
    fn missing_label_column() {
        let text = "id,act_0,feat_a\nr,1,0\n";
        let d = ActivationDataset::read_csv(text.as_bytes(), "L0".into(), Split::Test, "t").unwrap();
        assert!(matches!(d.label_column("b"), Err(Error::MissingLabel(_))));
    }

    #[test]
    fn raw_input_csv() {
        let text = "id,v_0,v_1,class\na,0.1,0.2,3\n";
        let inputs = read_raw_inputs(text.as_bytes(), "t").unwrap();
        assert_eq!(
            inputs,
            vec![LabeledInput {
                id: "a".into(),
                values: vec![0.1, 0.2],
                class_label: 3
            }]
        );
        assert!(read_raw_inputs("id,v_0,class\na,0.1,-1\n".as_bytes(), "t").is_err());
        assert!(read_raw_inputs("id,x,class\na,0.1,1\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn file_name_convention() {
        assert_eq!(
            layer_and_split_from_path(Path::new("/o/L1-pre.test.csv")),
            (LayerId::new("L1-pre"), Split::Test)
        );
        assert_eq!(
            layer_and_split_from_path(Path::new("dense_1.csv")),
            (LayerId::new("dense_1"), Split::Train)
        );
        assert_eq!(activation_file_name(&"L0".into(), Split::Train), "L0.train.csv");
    }
}
