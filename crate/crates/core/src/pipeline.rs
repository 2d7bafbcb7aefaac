//! End-to-end rule extraction and ensemble construction over in-memory
//! datasets.
//!
//! [`feature_guided_analysis`] grows one tree per (feature, layer) and
//! evaluates every extracted rule on both splits. [`build_feature_ensembles`]
//! then picks a layer per feature and aggregates its presence rules under
//! each criterion. Work items run on the current rayon pool; results are
//! collected in (feature, layer) order, so output never depends on the
//! worker count.

use log::warn;
use rayon::prelude::*;

use crate::analysis::{compare_fga_efga, run_sweep, Comparison, FeatureEnsembles, Metrics, SweepPoint};
use crate::dataset::LayerDatasets;
use crate::ensemble::{
    build_ensemble_evaluated, evaluate_ensemble, select_layer, sort_evaluated, Criterion, EvaluatedEnsemble,
};
use crate::error::{Error, Result};
use crate::model::LayerId;
use crate::rules::{extract_rules, EvaluatedRule, Postcondition};
use crate::tree::{induce_tree, DecisionTree, LeafLabel};

/// Rules of one (feature, layer) tree.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureLayerRules {
    pub feature: String,
    pub layer: LayerId,
    /// Extraction order; both postconditions.
    pub rules: Vec<EvaluatedRule>,
    /// (positives, negatives) of each discarded spurious leaf.
    pub spurious_leaves: Vec<(usize, usize)>,
    pub tree: Option<DecisionTree>,
}

impl FeatureLayerRules {
    pub fn presence(&self) -> impl Iterator<Item = &EvaluatedRule> {
        self.rules
            .iter()
            .filter(|r| r.rule.postcondition == Postcondition::Presence)
    }
}

/// A work item that produced nothing, with the reason.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skipped {
    pub feature: String,
    pub layer: Option<LayerId>,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FgaOutput {
    pub results: Vec<FeatureLayerRules>,
    pub skipped: Vec<Skipped>,
}

impl FgaOutput {
    pub fn for_feature<'a>(&'a self, feature: &'a str) -> impl Iterator<Item = &'a FeatureLayerRules> + 'a {
        self.results.iter().filter(move |r| r.feature == feature)
    }
}

/// Grows a tree for every (feature, layer), extracts its rules and scores
/// them on train and test. Features with no positive or no negative
/// training row are skipped; any other error aborts.
pub fn feature_guided_analysis(layers: &[LayerDatasets], features: &[String]) -> Result<FgaOutput> {
    if features.is_empty() {
        return Err(Error::NoFeatures);
    }
    let items: Vec<(&String, &LayerDatasets)> = features
        .iter()
        .flat_map(|f| layers.iter().map(move |l| (f, l)))
        .collect();
    let outcomes: Vec<Result<std::result::Result<FeatureLayerRules, Skipped>>> = items
        .par_iter()
        .map(|(feature, sets)| {
            let tree = match induce_tree(&sets.train, feature) {
                Ok(t) => t,
                Err(e @ Error::DegenerateFeature { .. }) => {
                    return Ok(Err(Skipped {
                        feature: feature.to_string(),
                        layer: Some(sets.layer.clone()),
                        reason: e.to_string(),
                    }))
                }
                Err(e) => return Err(e),
            };
            let spurious_leaves = tree
                .leaves()
                .filter(|l| l.label == LeafLabel::Spurious)
                .map(|l| (l.positives, l.negatives))
                .collect();
            let rules = extract_rules(&tree)
                .into_iter()
                .map(|r| EvaluatedRule::evaluate(r, &sets.train, &sets.test))
                .collect::<Result<Vec<_>>>()?;
            Ok(Ok(FeatureLayerRules {
                feature: feature.to_string(),
                layer: sets.layer.clone(),
                rules,
                spurious_leaves,
                tree: Some(tree),
            }))
        })
        .collect();
    let mut out = FgaOutput::default();
    for o in outcomes {
        match o? {
            Ok(r) => {
                for (a, b) in &r.spurious_leaves {
                    warn!(
                        "{} @ {}: discarded spurious leaf with counts ({a},{b})",
                        r.feature, r.layer
                    );
                }
                out.results.push(r)
            }
            Err(s) => {
                warn!(
                    "skipping {} @ {}: {}",
                    s.feature,
                    s.layer.as_ref().map(LayerId::as_str).unwrap_or("?"),
                    s.reason
                );
                out.skipped.push(s)
            }
        }
    }
    Ok(out)
}

/// Which layer a feature's ensembles are built from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerChoice {
    /// The layer holding the best single presence rule.
    Auto,
    Fixed(LayerId),
}

/// Ensembles for every feature that has presence rules, one per criterion,
/// plus the `top:1` baseline.
pub fn build_feature_ensembles(
    fga: &FgaOutput,
    layers: &[LayerDatasets],
    features: &[String],
    criteria: &[Criterion],
    choice: &LayerChoice,
) -> Result<(Vec<FeatureEnsembles>, Vec<Skipped>)> {
    if criteria.is_empty() {
        return Err(Error::InvalidCriterion("no criteria configured".into()));
    }
    let outcomes: Vec<Result<std::result::Result<FeatureEnsembles, Skipped>>> = features
        .par_iter()
        .map(|feature| {
            let skip = |layer: Option<LayerId>, reason: String| {
                Ok(Err(Skipped {
                    feature: feature.clone(),
                    layer,
                    reason,
                }))
            };
            // layer order follows `layers`
            let mut per_layer: Vec<(LayerId, Vec<EvaluatedRule>)> = Vec::new();
            for sets in layers {
                if let Some(r) = fga
                    .results
                    .iter()
                    .find(|r| &r.feature == feature && r.layer == sets.layer)
                {
                    per_layer.push((sets.layer.clone(), r.presence().cloned().collect()));
                }
            }
            let layer = match choice {
                LayerChoice::Auto => {
                    let view: Vec<(LayerId, &[EvaluatedRule])> =
                        per_layer.iter().map(|(l, r)| (l.clone(), r.as_slice())).collect();
                    match select_layer(&view, feature) {
                        Ok(l) => l,
                        Err(e @ Error::NoRules(_)) => return skip(None, e.to_string()),
                        Err(e) => return Err(e),
                    }
                }
                LayerChoice::Fixed(l) => {
                    if !layers.iter().any(|s| &s.layer == l) {
                        return Err(Error::InvalidSelector(format!(
                            "layer {l} is not among the extracted layers"
                        )));
                    }
                    l.clone()
                }
            };
            let Some((_, mut rules)) = per_layer.into_iter().find(|(l, _)| *l == layer) else {
                return skip(Some(layer), "no tree at this layer".into());
            };
            if rules.is_empty() {
                return skip(Some(layer), "no presence rules".into());
            }
            let sets = layers.iter().find(|s| s.layer == layer).expect("layer checked above");
            sort_evaluated(&mut rules);
            let build = |c: Criterion| -> Result<EvaluatedEnsemble> {
                let ensemble = build_ensemble_evaluated(&rules, c, &sets.train)?;
                let test = evaluate_ensemble(&ensemble, &sets.test)?;
                Ok(EvaluatedEnsemble { ensemble, test })
            };
            Ok(Ok(FeatureEnsembles {
                feature: feature.clone(),
                layer: layer.clone(),
                baseline: build(Criterion::Top(1))?,
                ensembles: criteria.iter().map(|&c| build(c)).collect::<Result<Vec<_>>>()?,
            }))
        })
        .collect();
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o? {
            Ok(f) => done.push(f),
            Err(s) => {
                warn!("no ensembles for {}: {}", s.feature, s.reason);
                skipped.push(s)
            }
        }
    }
    Ok((done, skipped))
}

/// Everything the report stage writes.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleReport {
    pub criteria: Vec<Criterion>,
    pub features: Vec<FeatureEnsembles>,
    pub sweep: Vec<SweepPoint>,
    /// `top:1` against each other criterion.
    pub comparisons: Vec<Comparison>,
    pub skipped: Vec<Skipped>,
}

pub fn summarize(
    features: Vec<FeatureEnsembles>,
    criteria: &[Criterion],
    skipped: Vec<Skipped>,
) -> Result<EnsembleReport> {
    let sweep = run_sweep(&features, criteria)?;
    let fga: Vec<(String, Metrics)> = features
        .iter()
        .map(|f| (f.feature.clone(), Metrics::of(&f.baseline)))
        .collect();
    let comparisons = criteria
        .iter()
        .filter(|c| **c != Criterion::Top(1))
        .map(|&c| {
            let efga: Vec<(String, Metrics)> = features
                .iter()
                .map(|f| {
                    (
                        f.feature.clone(),
                        Metrics::of(f.get(c).expect("built for every criterion")),
                    )
                })
                .collect();
            compare_fga_efga(c, &fga, &efga)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleReport {
        criteria: criteria.to_vec(),
        features,
        sweep,
        comparisons,
        skipped,
    })
}

/// Rule extraction followed by ensemble construction and summaries.
pub fn run_efga(
    layers: &[LayerDatasets],
    features: &[String],
    criteria: &[Criterion],
    choice: &LayerChoice,
) -> Result<(FgaOutput, EnsembleReport)> {
    let fga = feature_guided_analysis(layers, features)?;
    let (built, mut skipped) = build_feature_ensembles(&fga, layers, features, criteria, choice)?;
    let mut all_skipped = fga.skipped.clone();
    all_skipped.append(&mut skipped);
    let report = summarize(built, criteria, all_skipped)?;
    Ok((fga, report))
}
