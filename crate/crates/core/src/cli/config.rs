use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::ensemble::{parse_criteria, Criterion};
use crate::error::{Error, Result};
use crate::model::{LayerId, LayerSelector, LayerTap};
use crate::pipeline::LayerChoice;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Raw inputs are run through the model.
    RawInputs,
    /// Activation CSVs produced elsewhere.
    PrecomputedActivations,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Mode,
    model_path: Option<String>,
    train_data_path: OneOrMany,
    test_data_path: OneOrMany,
    features_path: Option<String>,
    layer_selector: Option<String>,
    criteria: OneOrMany,
    ensemble_layer: Option<String>,
    output_dir: String,
    jobs: Option<usize>,
}

/// A validated run configuration with every path resolved against the
/// config file's directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub model_path: Option<PathBuf>,
    /// One path in raw-input mode; one activation CSV per layer otherwise.
    pub train_data_paths: Vec<PathBuf>,
    pub test_data_paths: Vec<PathBuf>,
    pub features_path: Option<PathBuf>,
    pub layer_selector: LayerSelector,
    pub criteria: Vec<Criterion>,
    pub ensemble_layer: LayerChoice,
    pub output_dir: PathBuf,
    pub jobs: Option<usize>,
}

/// `auto`, a layer index (`1` means `L1`), or a literal layer id.
pub fn parse_layer_choice(s: &str) -> LayerChoice {
    let s = s.trim();
    if s.eq_ignore_ascii_case("auto") {
        LayerChoice::Auto
    } else if let Ok(i) = s.parse::<usize>() {
        LayerChoice::Fixed(LayerTap::post(i).id())
    } else {
        LayerChoice::Fixed(LayerId::new(s))
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json_str(&text, base)
    }

    pub fn from_json_str(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &str| -> PathBuf {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let train: Vec<PathBuf> = raw.train_data_path.into_vec().iter().map(|p| resolve(p)).collect();
        let test: Vec<PathBuf> = raw.test_data_path.into_vec().iter().map(|p| resolve(p)).collect();
        if train.is_empty() || train.len() != test.len() {
            return Err(Error::Config("train_data_path and test_data_path must pair up".into()));
        }
        let criteria = match raw.criteria {
            OneOrMany::One(s) => parse_criteria(&s)?,
            OneOrMany::Many(v) => parse_criteria(&v.join(","))?,
        };
        let model_path = raw.model_path.as_deref().map(resolve);
        match raw.mode {
            Mode::RawInputs => {
                if model_path.is_none() {
                    return Err(Error::Config("raw-inputs mode needs model_path".into()));
                }
                if raw.features_path.is_none() {
                    return Err(Error::Config("raw-inputs mode needs features_path".into()));
                }
                if train.len() != 1 {
                    return Err(Error::Config(
                        "raw-inputs mode takes one train and one test file".into(),
                    ));
                }
            }
            Mode::PrecomputedActivations => {}
        }
        if raw.jobs == Some(0) {
            return Err(Error::Config("jobs must be positive".into()));
        }
        Ok(RunConfig {
            mode: raw.mode,
            model_path,
            train_data_paths: train,
            test_data_paths: test,
            features_path: raw.features_path.as_deref().map(resolve),
            layer_selector: raw.layer_selector.as_deref().unwrap_or("all").parse()?,
            criteria,
            ensemble_layer: raw
                .ensemble_layer
                .as_deref()
                .map_or(LayerChoice::Auto, parse_layer_choice),
            output_dir: resolve(&raw.output_dir),
            jobs: raw.jobs,
        })
    }

    /// Fails with an IO error naming the first input path that is missing.
    pub fn check_paths(&self) -> Result<()> {
        let inputs = self
            .model_path
            .iter()
            .chain(&self.train_data_paths)
            .chain(&self.test_data_paths)
            .chain(&self.features_path);
        for p in inputs {
            if !p.exists() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                ));
            }
        }
        Ok(())
    }
}
