//! File-based pipeline stages behind the `neurule` binary.
//!
//! Output layout under the configured directory:
//!
//! ```text
//! activations/<layer>.<split>.csv     activation datasets (raw-input mode)
//! rules/<feature>.<layer>.csv          rule dumps with train/test stats
//! trees/<feature>.<layer>.json         tree dumps
//! ensembles.csv                        one row per (feature, criterion)
//! sweep.csv                            averages per criterion
//! pareto_precision.csv                 test recall vs test precision
//! pareto_length.csv                    test recall vs ensemble length
//! comparison_<criterion>.{md,csv}      top:1 against each other criterion
//! report.md                            sweep and comparison tables
//! ```
//!
//! Every artifact is a pure function of the inputs; rerunning a stage
//! rewrites byte-identical files.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

pub use config::{parse_layer_choice, Mode, RunConfig};

use crate::analysis::{pct, write_pareto_csv, write_sweep_csv};
use crate::dataset::{
    activation_file_name, build_activation_dataset, layer_and_split_from_path, load_activation_csv, load_features,
    load_raw_inputs, ActivationDataset, LayerDatasets, Split,
};
use crate::ensemble::{save_ensemble_csv, EvaluatedEnsemble};
use crate::error::{Error, Result};
use crate::model::{load_model, LayerId};
use crate::pipeline::{
    build_feature_ensembles, feature_guided_analysis, summarize, EnsembleReport, FeatureLayerRules, FgaOutput, Skipped,
};
use crate::rules::{load_rule_csv, save_rule_csv};

/// What a stage wrote and which work items it had to skip.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub skipped: Vec<Skipped>,
}

impl Outcome {
    /// 0 when complete, 1 when some features were skipped.
    pub fn exit_code(&self) -> i32 {
        if self.skipped.is_empty() {
            0
        } else {
            1
        }
    }

    fn absorb(&mut self, mut other: Outcome) {
        self.written.append(&mut other.written);
        self.skipped.append(&mut other.skipped);
    }
}

/// Exit status for a failed stage.
pub const EXIT_ERROR: i32 = 2;

/// File-name safe form of a feature name or criterion.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn activations_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("activations")
}

fn rule_file(cfg: &RunConfig, feature: &str, layer: &LayerId) -> PathBuf {
    cfg.output_dir
        .join("rules")
        .join(format!("{}.{}.csv", slug(feature), layer))
}

fn check_slugs(features: &[String]) -> Result<()> {
    let mut seen = std::collections::HashMap::new();
    for f in features {
        if let Some(prev) = seen.insert(slug(f), f) {
            return Err(Error::Config(format!(
                "features {prev:?} and {f:?} map to the same file name"
            )));
        }
    }
    Ok(())
}

/// Runs the raw inputs through the model in memory.
fn compute_layer_datasets(cfg: &RunConfig) -> Result<(Vec<LayerDatasets>, Vec<String>)> {
    let model = load_model(cfg.model_path.as_ref().expect("validated"))?;
    let features = load_features(cfg.features_path.as_ref().expect("validated"))?;
    let train = load_raw_inputs(&cfg.train_data_paths[0])?;
    let test = load_raw_inputs(&cfg.test_data_paths[0])?;
    let selector = cfg.layer_selector.resolve(&model)?;
    let sets = build_activation_dataset(&model, &selector, &train, &test, &features)?;
    Ok((sets, features.into_iter().map(|f| f.name).collect()))
}

fn feature_names(cfg: &RunConfig, first: &ActivationDataset) -> Result<Vec<String>> {
    match &cfg.features_path {
        Some(p) => {
            let names: Vec<String> = load_features(p)?.into_iter().map(|f| f.name).collect();
            for n in &names {
                first.label_column(n)?;
            }
            Ok(names)
        }
        None => {
            let names: Vec<String> = first.feature_names().map(str::to_string).collect();
            if names.is_empty() {
                return Err(Error::NoFeatures);
            }
            Ok(names)
        }
    }
}

/// Loads activation datasets written by [`cmd_activations`], or the
/// precomputed CSVs named in the config.
pub fn load_layer_datasets(cfg: &RunConfig) -> Result<(Vec<LayerDatasets>, Vec<String>)> {
    let mut sets = Vec::new();
    match cfg.mode {
        Mode::RawInputs => {
            let model = load_model(cfg.model_path.as_ref().expect("validated"))?;
            let dir = activations_dir(cfg);
            for tap in cfg.layer_selector.resolve(&model)?.taps_for(&model) {
                let layer = tap.id();
                let load = |split| {
                    let p = dir.join(activation_file_name(&layer, split));
                    if !p.exists() {
                        return Err(Error::io(
                            &p,
                            std::io::Error::new(std::io::ErrorKind::NotFound, "run the `activations` stage first"),
                        ));
                    }
                    load_activation_csv(p)
                };
                sets.push(LayerDatasets {
                    train: load(Split::Train)?,
                    test: load(Split::Test)?,
                    layer,
                });
            }
        }
        Mode::PrecomputedActivations => {
            for (tr, te) in cfg.train_data_paths.iter().zip(&cfg.test_data_paths) {
                let (layer, _) = layer_and_split_from_path(tr);
                let mut train = load_activation_csv(tr)?;
                let mut test = load_activation_csv(te)?;
                train.layer = layer.clone();
                train.split = Split::Train;
                test.layer = layer.clone();
                test.split = Split::Test;
                if train.n_neurons() != test.n_neurons() {
                    return Err(Error::DimensionMismatch {
                        context: format!("test activations for layer {layer}"),
                        expected: train.n_neurons(),
                        found: test.n_neurons(),
                    });
                }
                if sets.iter().any(|s: &LayerDatasets| s.layer == layer) {
                    return Err(Error::Config(format!("layer {layer} listed twice")));
                }
                sets.push(LayerDatasets { layer, train, test });
            }
        }
    }
    let features = feature_names(cfg, &sets[0].train)?;
    for s in &sets {
        for f in &features {
            s.train.label_column(f)?;
            s.test.label_column(f)?;
        }
    }
    Ok((sets, features))
}

fn write_activations(cfg: &RunConfig, sets: &[LayerDatasets]) -> Result<Outcome> {
    let dir = activations_dir(cfg);
    create_dir(&dir)?;
    let mut out = Outcome::default();
    for s in sets {
        for d in [&s.train, &s.test] {
            let p = dir.join(activation_file_name(&d.layer, d.split));
            d.save_csv(&p)?;
            out.written.push(p);
        }
    }
    Ok(out)
}

/// Activation CSVs per (layer, split). Raw-input mode only.
pub fn cmd_activations(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.mode != Mode::RawInputs {
        return Err(Error::Config("the activations stage needs mode raw-inputs".into()));
    }
    cfg.check_paths()?;
    let (sets, _) = compute_layer_datasets(cfg)?;
    write_activations(cfg, &sets)
}

fn write_rules(cfg: &RunConfig, fga: &FgaOutput) -> Result<Outcome> {
    let rules_dir = cfg.output_dir.join("rules");
    let trees_dir = cfg.output_dir.join("trees");
    create_dir(&rules_dir)?;
    create_dir(&trees_dir)?;
    let mut out = Outcome {
        written: Vec::new(),
        skipped: fga.skipped.clone(),
    };
    for r in &fga.results {
        let p = rule_file(cfg, &r.feature, &r.layer);
        save_rule_csv(&r.rules, &p)?;
        out.written.push(p);
        if let Some(tree) = &r.tree {
            let p = trees_dir.join(format!("{}.{}.json", slug(&r.feature), r.layer));
            let text = serde_json::to_string_pretty(&tree.to_json()).expect("tree serializes");
            write_file(&p, text.as_bytes())?;
            out.written.push(p);
        }
    }
    Ok(out)
}

/// Rule dump per (feature, layer). Degenerate features are skipped.
pub fn cmd_rules(cfg: &RunConfig) -> Result<Outcome> {
    cfg.check_paths()?;
    let (sets, features) = load_layer_datasets(cfg)?;
    check_slugs(&features)?;
    let fga = feature_guided_analysis(&sets, &features)?;
    write_rules(cfg, &fga)
}

fn load_rules(cfg: &RunConfig, sets: &[LayerDatasets], features: &[String]) -> Result<FgaOutput> {
    let mut fga = FgaOutput::default();
    for feature in features {
        for s in sets {
            let p = rule_file(cfg, feature, &s.layer);
            if !p.exists() {
                warn!("no rule file {}; skipping {feature} @ {}", p.display(), s.layer);
                fga.skipped.push(Skipped {
                    feature: feature.clone(),
                    layer: Some(s.layer.clone()),
                    reason: "no rule file".into(),
                });
                continue;
            }
            fga.results.push(FeatureLayerRules {
                feature: feature.clone(),
                layer: s.layer.clone(),
                rules: load_rule_csv(&p)?,
                spurious_leaves: Vec::new(),
                tree: None,
            });
        }
    }
    Ok(fga)
}

/// Writes the ensemble report files.
pub fn write_report(report: &EnsembleReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out_dir)?;
    let mut written = Vec::new();

    let ensembles: Vec<EvaluatedEnsemble> = report
        .features
        .iter()
        .flat_map(|f| f.ensembles.iter().cloned())
        .collect();
    let p = out_dir.join("ensembles.csv");
    save_ensemble_csv(&ensembles, &p)?;
    written.push(p);

    let mut buf = Vec::new();
    write_sweep_csv(&report.sweep, &mut buf)?;
    let p = out_dir.join("sweep.csv");
    write_file(&p, &buf)?;
    written.push(p);

    for (name, length_axis) in [("pareto_precision.csv", false), ("pareto_length.csv", true)] {
        let mut buf = Vec::new();
        write_pareto_csv(&report.sweep, length_axis, &mut buf)?;
        let p = out_dir.join(name);
        write_file(&p, &buf)?;
        written.push(p);
    }

    let mut md = String::from("# Rule ensemble report\n\n## Criterion sweep\n\n");
    md.push_str("| Criterion | Features | Avg R_tr | Avg R_te | Avg P_te | Avg length |\n");
    md.push_str("|---|---:|---:|---:|---:|---:|\n");
    for s in &report.sweep {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {:.2} |",
            s.criterion,
            s.n_features,
            pct(s.avg_train_recall),
            pct(s.avg_test_recall),
            pct(s.avg_test_precision),
            s.avg_length
        );
    }
    for c in &report.comparisons {
        let name = format!("comparison_{}", slug(&c.criterion.to_string().replace(':', "")));
        let table = c.to_markdown();
        let p = out_dir.join(format!("{name}.md"));
        write_file(&p, table.as_bytes())?;
        written.push(p);
        let mut buf = Vec::new();
        c.write_csv(&mut buf)?;
        let p = out_dir.join(format!("{name}.csv"));
        write_file(&p, &buf)?;
        written.push(p);
        let _ = write!(md, "\n## top:1 vs {}\n\n{table}", c.criterion);
    }
    let p = out_dir.join("report.md");
    write_file(&p, md.as_bytes())?;
    written.push(p);
    Ok(written)
}

/// Ensembles, comparison tables and Pareto CSVs from the rule dumps.
pub fn cmd_ensemble(cfg: &RunConfig) -> Result<Outcome> {
    cfg.check_paths()?;
    let (sets, features) = load_layer_datasets(cfg)?;
    check_slugs(&features)?;
    let fga = load_rules(cfg, &sets, &features)?;
    let (built, skipped) = build_feature_ensembles(&fga, &sets, &features, &cfg.criteria, &cfg.ensemble_layer)?;
    let mut all_skipped = fga.skipped;
    all_skipped.extend(skipped);
    let report = summarize(built, &cfg.criteria, all_skipped)?;
    Ok(Outcome {
        written: write_report(&report, &cfg.output_dir)?,
        skipped: report.skipped,
    })
}

/// All stages in one pass, without re-reading intermediate files.
pub fn cmd_run(cfg: &RunConfig) -> Result<Outcome> {
    cfg.check_paths()?;
    let mut out = Outcome::default();
    let (sets, features) = match cfg.mode {
        Mode::RawInputs => {
            let (sets, features) = compute_layer_datasets(cfg)?;
            out.absorb(write_activations(cfg, &sets)?);
            (sets, features)
        }
        Mode::PrecomputedActivations => load_layer_datasets(cfg)?,
    };
    check_slugs(&features)?;
    let fga = feature_guided_analysis(&sets, &features)?;
    out.absorb(write_rules(cfg, &fga)?);
    let (built, skipped) = build_feature_ensembles(&fga, &sets, &features, &cfg.criteria, &cfg.ensemble_layer)?;
    let report = summarize(built, &cfg.criteria, skipped)?;
    out.written.extend(write_report(&report, &cfg.output_dir)?);
    out.skipped.extend(report.skipped);
    Ok(out)
}
