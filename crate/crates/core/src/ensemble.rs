//! Rule ensembles: disjunctions of presence rules from one tree.
//!
//! Rules from one tree have pairwise disjoint preconditions, because every
//! row reaches exactly one leaf. An ensemble therefore fires on a row iff
//! exactly one member does, and its true-positive count is the sum of the
//! members' counts. Every rule for a feature shares the same positive count
//! as its recall denominator, so ensemble recall is the plain sum of the
//! member recalls. Precision has no such identity.
//!
//! Members are taken as a prefix of the rules sorted by descending training
//! recall. The [`Criterion`] decides how long that prefix is.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::dataset::ActivationDataset;
use crate::error::{Error, Result};
use crate::model::LayerId;
use crate::rules::{check_width, confusion, evaluate_rule, EvaluatedRule, Postcondition, Rule, RuleStats};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Criterion {
    /// The best `k` rules.
    Top(usize),
    /// The shortest prefix reaching this training recall, in percent.
    Rec(f64),
    /// Every rule whose training recall is strictly above the mean.
    Avg,
}

impl Criterion {
    pub fn top(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidCriterion("top:0 (k must be at least 1)".into()));
        }
        Ok(Criterion::Top(k))
    }

    pub fn rec(threshold_pct: f64) -> Result<Self> {
        if !(threshold_pct > 0.0 && threshold_pct <= 100.0) {
            return Err(Error::InvalidCriterion(format!(
                "rec:{threshold_pct} (threshold must be in (0,100])"
            )));
        }
        Ok(Criterion::Rec(threshold_pct))
    }

    /// TOP(1,3,5,10), REC(80,85,90,95) and AVG.
    pub fn default_sweep() -> Vec<Criterion> {
        vec![
            Criterion::Top(1),
            Criterion::Top(3),
            Criterion::Top(5),
            Criterion::Top(10),
            Criterion::Rec(80.0),
            Criterion::Rec(85.0),
            Criterion::Rec(90.0),
            Criterion::Rec(95.0),
            Criterion::Avg,
        ]
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::Top(k) => write!(f, "top:{k}"),
            Criterion::Rec(x) => write!(f, "rec:{x}"),
            Criterion::Avg => f.write_str("avg"),
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidCriterion(s.to_string());
        if s.eq_ignore_ascii_case("avg") {
            return Ok(Criterion::Avg);
        }
        let (name, arg) = s.split_once(':').ok_or_else(bad)?;
        match name.to_ascii_lowercase().as_str() {
            "top" => Criterion::top(arg.trim().parse().map_err(|_| bad())?),
            "rec" => {
                let x: f64 = arg.trim().parse().map_err(|_| bad())?;
                Criterion::rec(x).map_err(|_| Error::InvalidCriterion(format!("{s} (threshold must be in (0,100])")))
            }
            _ => Err(bad()),
        }
    }
}

/// Parses a comma-separated criterion list such as `top:1,rec:95,avg`.
pub fn parse_criteria(list: &str) -> Result<Vec<Criterion>> {
    let out: Vec<Criterion> = list
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::InvalidCriterion("empty criterion list".into()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EnsembleFlags {
    /// REC threshold not reachable; the ensemble holds every rule.
    pub rec_shortfall: bool,
    /// No rule was strictly above the mean recall; the best rule was used.
    pub avg_fallback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub feature: String,
    pub layer: LayerId,
    pub postcondition: Postcondition,
    pub criterion: Criterion,
    /// Members in descending training-recall order.
    pub rules: Vec<Rule>,
    pub flags: EnsembleFlags,
    pub train: RuleStats,
}

impl Ensemble {
    pub fn total_length(&self) -> usize {
        ensemble_length(self)
    }

    pub fn fires(&self, activation: &[f64]) -> bool {
        self.rules.iter().any(|r| r.clauses.iter().all(|c| c.holds(activation)))
    }
}

pub fn ensemble_length(ensemble: &Ensemble) -> usize {
    ensemble.rules.iter().map(Rule::len).sum()
}

fn check_homogeneous<'a>(mut rules: impl Iterator<Item = &'a Rule>) -> Result<()> {
    let Some(first) = rules.next() else { return Ok(()) };
    for r in rules {
        if r.feature != first.feature || r.layer != first.layer || r.postcondition != first.postcondition {
            return Err(Error::InvalidFeature(format!(
                "rules mix ({}, {}, {}) with ({}, {}, {})",
                first.feature, first.layer, first.postcondition, r.feature, r.layer, r.postcondition
            )));
        }
    }
    Ok(())
}

/// Descending train tp, then shorter rule, then lexicographic clause order.
/// Ordering by tp equals ordering by recall since all rules share one
/// denominator.
fn rule_order(a: (&Rule, usize), b: (&Rule, usize)) -> Ordering {
    b.1.cmp(&a.1)
        .then(a.0.len().cmp(&b.0.len()))
        .then_with(|| a.0.cmp_clauses(b.0))
}

pub fn sort_rules(rules: Vec<Rule>, train: &ActivationDataset) -> Result<Vec<Rule>> {
    check_homogeneous(rules.iter())?;
    let mut scored = rules
        .into_iter()
        .map(|r| Ok((evaluate_rule(&r, train)?.tp, r)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| rule_order((&a.1, a.0), (&b.1, b.0)));
    Ok(scored.into_iter().map(|(_, r)| r).collect())
}

/// Same order as [`sort_rules`], using the training stats already attached.
pub fn sort_evaluated(rules: &mut [EvaluatedRule]) {
    rules.sort_by(|a, b| rule_order((&a.rule, a.train.tp), (&b.rule, b.train.tp)));
}

/// Prefix length chosen by `criterion` over descending `tps`, where
/// `positives` is the shared recall denominator.
pub fn select_prefix(tps: &[usize], positives: usize, criterion: Criterion) -> (usize, EnsembleFlags) {
    let n = tps.len();
    let mut flags = EnsembleFlags::default();
    let len = match criterion {
        Criterion::Top(k) => k.min(n),
        Criterion::Rec(x) => {
            let target = x / 100.0;
            let mut cum = 0usize;
            let mut reached = None;
            for (i, tp) in tps.iter().enumerate() {
                cum += tp;
                if positives > 0 && cum as f64 / positives as f64 >= target {
                    reached = Some(i + 1);
                    break;
                }
            }
            reached.unwrap_or_else(|| {
                flags.rec_shortfall = true;
                n
            })
        }
        Criterion::Avg => {
            // tp_i > mean(tp)  <=>  n * tp_i > sum(tp)
            let sum: usize = tps.iter().sum();
            let above = tps.iter().take_while(|&&tp| n * tp > sum).count();
            if above == 0 && n > 0 {
                flags.avg_fallback = true;
                1
            } else {
                above
            }
        }
    };
    (len, flags)
}

fn assemble(
    members: Vec<Rule>,
    criterion: Criterion,
    flags: EnsembleFlags,
    train: &ActivationDataset,
) -> Result<Ensemble> {
    let first = &members[0];
    let mut ensemble = Ensemble {
        feature: first.feature.clone(),
        layer: first.layer.clone(),
        postcondition: first.postcondition,
        criterion,
        rules: members,
        flags,
        train: RuleStats::from_counts(train.split, 0, 0, 0),
    };
    ensemble.train = evaluate_ensemble(&ensemble, train)?;
    Ok(ensemble)
}

/// Builds the ensemble for `criterion` from rules already in
/// [`sort_rules`] order.
pub fn build_ensemble(sorted_rules: &[Rule], criterion: Criterion, train: &ActivationDataset) -> Result<Ensemble> {
    if sorted_rules.is_empty() {
        return Err(Error::EmptyRules);
    }
    check_homogeneous(sorted_rules.iter())?;
    let stats = sorted_rules
        .iter()
        .map(|r| evaluate_rule(r, train))
        .collect::<Result<Vec<_>>>()?;
    let tps: Vec<usize> = stats.iter().map(|s| s.tp).collect();
    let (len, flags) = select_prefix(&tps, stats[0].positives(), criterion);
    assemble(sorted_rules[..len].to_vec(), criterion, flags, train)
}

/// [`build_ensemble`] over rules whose training stats are already known.
/// `sorted` must be in [`sort_evaluated`] order.
pub fn build_ensemble_evaluated(
    sorted: &[EvaluatedRule],
    criterion: Criterion,
    train: &ActivationDataset,
) -> Result<Ensemble> {
    if sorted.is_empty() {
        return Err(Error::EmptyRules);
    }
    check_homogeneous(sorted.iter().map(|r| &r.rule))?;
    let tps: Vec<usize> = sorted.iter().map(|r| r.train.tp).collect();
    let (len, flags) = select_prefix(&tps, sorted[0].train.positives(), criterion);
    let members = sorted[..len].iter().map(|r| r.rule.clone()).collect();
    assemble(members, criterion, flags, train)
}

/// Counts with "any member fires" as the predicate.
pub fn evaluate_ensemble(ensemble: &Ensemble, dataset: &ActivationDataset) -> Result<RuleStats> {
    let labels = dataset.label_column(&ensemble.feature)?;
    let width = ensemble.rules.iter().map(Rule::required_width).max().unwrap_or(0);
    check_width(dataset, width)?;
    Ok(confusion(dataset, labels, ensemble.postcondition.as_label(), |row| {
        ensemble.fires(row)
    }))
}

/// Picks the layer holding the single presence rule with the highest
/// training recall. Ties go to the earliest layer in `rules_by_layer`.
pub fn select_layer(rules_by_layer: &[(LayerId, &[EvaluatedRule])], feature: &str) -> Result<LayerId> {
    let mut best: Option<(&LayerId, usize, usize)> = None;
    for (layer, rules) in rules_by_layer {
        for r in rules
            .iter()
            .filter(|r| r.rule.feature == feature && r.rule.postcondition == Postcondition::Presence)
        {
            let (tp, p) = (r.train.tp, r.train.positives());
            let better = match best {
                None => true,
                // tp/p > btp/bp
                Some((_, btp, bp)) => (tp as u128) * (bp as u128) > (btp as u128) * (p as u128),
            };
            if better {
                best = Some((layer, tp, p));
            }
        }
    }
    best.map(|(l, _, _)| l.clone())
        .ok_or_else(|| Error::NoRules(feature.to_string()))
}

/// An ensemble with its held-out metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluatedEnsemble {
    pub ensemble: Ensemble,
    pub test: RuleStats,
}

impl EvaluatedEnsemble {
    pub fn flags_string(&self) -> String {
        let mut flags = Vec::new();
        if self.ensemble.flags.rec_shortfall {
            flags.push("rec-shortfall");
        }
        if self.ensemble.flags.avg_fallback {
            flags.push("avg-fallback");
        }
        if self.test.precision_inapplicable {
            flags.push("test-precision-inapplicable");
        }
        if self.test.recall_inapplicable {
            flags.push("test-recall-inapplicable");
        }
        flags.join(";")
    }
}

pub fn write_ensemble_csv<W: Write>(ensembles: &[EvaluatedEnsemble], writer: W) -> Result<()> {
    let ctx = "ensemble csv";
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "feature",
        "layer",
        "criterion",
        "n_rules",
        "total_length",
        "train_recall",
        "test_recall",
        "test_precision",
        "flags",
    ])
    .map_err(|e| Error::parse(ctx, e))?;
    for e in ensembles {
        w.write_record([
            e.ensemble.feature.clone(),
            e.ensemble.layer.to_string(),
            e.ensemble.criterion.to_string(),
            e.ensemble.rules.len().to_string(),
            e.ensemble.total_length().to_string(),
            e.ensemble.train.recall.to_string(),
            e.test.recall.to_string(),
            e.test.precision.to_string(),
            e.flags_string(),
        ])
        .map_err(|e| Error::parse(ctx, e))?;
    }
    w.flush().map_err(|e| Error::parse(ctx, e))?;
    Ok(())
}

pub fn save_ensemble_csv(ensembles: &[EvaluatedEnsemble], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_ensemble_csv(ensembles, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabelColumn, Split};
    use crate::matrix::Matrix;
    use crate::rules::{Clause, Op};

    fn rule(neuron: usize, op: Op, t: f64) -> Rule {
        Rule {
            clauses: vec![Clause {
                neuron,
                op,
                threshold: t,
            }],
            postcondition: Postcondition::Presence,
            feature: "f".into(),
            layer: "L0".into(),
            leaf_counts: (1, 0),
        }
    }

    /// 1-D dataset: `tp_counts[i]` positive rows at value i, plus `negatives`
    /// negative rows at a value no rule covers.
    fn dataset(tp_counts: &[usize], negatives: usize) -> (ActivationDataset, Vec<Rule>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut rules = Vec::new();
        for (i, &n) in tp_counts.iter().enumerate() {
            for _ in 0..n {
                rows.push(vec![i as f64, 0.0]);
                labels.push(true);
            }
            let mut r = rule(0, Op::Le, i as f64 + 0.5);
            if i > 0 {
                r.clauses.insert(
                    0,
                    Clause {
                        neuron: 0,
                        op: Op::Gt,
                        threshold: i as f64 - 0.5,
                    },
                );
            }
            rules.push(r);
        }
        for _ in 0..negatives {
            rows.push(vec![1000.0, 0.0]);
            labels.push(false);
        }
        let d = ActivationDataset::new(
            "L0".into(),
            Split::Train,
            (0..rows.len()).map(|i| i.to_string()).collect(),
            Matrix::from_rows(2, &rows),
            vec![LabelColumn {
                feature: "f".into(),
                values: labels,
            }],
        )
        .unwrap();
        (d, rules)
    }

    #[test]
    fn criterion_grammar() {
        assert_eq!("rec:95".parse::<Criterion>().unwrap(), Criterion::Rec(95.0));
        assert_eq!("top:10".parse::<Criterion>().unwrap(), Criterion::Top(10));
        assert_eq!("avg".parse::<Criterion>().unwrap(), Criterion::Avg);
        for bad in ["rec:0", "rec:100.5", "rec:-3", "top:0", "top:x", "best:3", "rec:nan"] {
            assert!(bad.parse::<Criterion>().is_err(), "{bad}");
        }
        assert_eq!(parse_criteria("top:1, rec:80,avg").unwrap().len(), 3);
        assert_eq!(Criterion::default_sweep().len(), 9);
        assert_eq!(Criterion::Rec(85.0).to_string(), "rec:85");
    }

    #[test]
    fn sorted_by_recall_descending() {
        // recalls 0.275 and 0.725 over 4000 positives
        let (d, rules) = dataset(&[1100, 2900], 10);
        let sorted = sort_rules(rules.clone(), &d).unwrap();
        assert_eq!(sorted[0], rules[1]);
        assert_eq!(sorted[1], rules[0]);
        assert!(sort_rules(vec![], &d).unwrap().is_empty());
    }

    #[test]
    fn equal_recall_prefers_shorter_rule() {
        let (d, rules) = dataset(&[5, 5], 0);
        // rules[0] has length 1, rules[1] length 2
        let sorted = sort_rules(vec![rules[1].clone(), rules[0].clone()], &d).unwrap();
        assert_eq!(sorted[0].len(), 1);
    }

    #[test]
    fn top_and_rec_on_worked_counts() {
        let (d, rules) = dataset(&[1100, 2900], 10);
        let sorted = sort_rules(rules, &d).unwrap();
        let top1 = build_ensemble(&sorted, Criterion::Top(1), &d).unwrap();
        assert_eq!(top1.rules.len(), 1);
        assert_eq!(top1.train.recall, 0.725);
        let rec = build_ensemble(&sorted, Criterion::Rec(80.0), &d).unwrap();
        assert_eq!(rec.rules.len(), 2);
        assert_eq!(rec.train.recall, 1.0);
        assert!(!rec.flags.rec_shortfall);
        assert_eq!(rec.total_length(), 1 + 2);
    }

    #[test]
    fn avg_uses_strict_mean() {
        // recalls 0.5, 0.3, 0.2; mean 1/3
        let (d, rules) = dataset(&[50, 30, 20], 0);
        let sorted = sort_rules(rules, &d).unwrap();
        let e = build_ensemble(&sorted, Criterion::Avg, &d).unwrap();
        assert_eq!(e.rules.len(), 1);
        assert_eq!(e.train.recall, 0.5);
    }

    #[test]
    fn prefix_selection_edges() {
        assert_eq!(
            select_prefix(&[5, 5], 10, Criterion::Avg),
            (
                1,
                EnsembleFlags {
                    rec_shortfall: false,
                    avg_fallback: true
                }
            )
        );
        assert_eq!(
            select_prefix(&[3, 2], 10, Criterion::Rec(90.0)),
            (
                2,
                EnsembleFlags {
                    rec_shortfall: true,
                    avg_fallback: false
                }
            )
        );
        assert_eq!(select_prefix(&[3, 2], 5, Criterion::Rec(100.0)).0, 2);
        assert_eq!(select_prefix(&[8, 1, 1], 10, Criterion::Rec(80.0)).0, 1);
        assert_eq!(select_prefix(&[3, 2], 5, Criterion::Top(10)).0, 2);
    }

    #[test]
    fn empty_and_mixed_rule_lists() {
        let (d, rules) = dataset(&[2, 2], 1);
        assert!(matches!(
            build_ensemble(&[], Criterion::Avg, &d),
            Err(Error::EmptyRules)
        ));
        let mut other = rules[1].clone();
        other.postcondition = Postcondition::Absence;
        assert!(build_ensemble(&[rules[0].clone(), other], Criterion::Top(2), &d).is_err());
    }

    #[test]
    fn singleton_matches_rule_stats() {
        let (d, rules) = dataset(&[3, 4, 5], 7);
        let e = build_ensemble(&rules[1..2], Criterion::Top(1), &d).unwrap();
        assert_eq!(
            evaluate_ensemble(&e, &d).unwrap(),
            evaluate_rule(&rules[1], &d).unwrap()
        );
    }

    #[test]
    fn ensemble_length_sums_members() {
        let (d, rules) = dataset(&[3, 4, 5], 0);
        let e = build_ensemble(&[rules[1].clone(), rules[2].clone()], Criterion::Top(2), &d).unwrap();
        assert_eq!(ensemble_length(&e), 4);
    }

    fn evaluated(layer: &str, tp: usize, fn_: usize) -> EvaluatedRule {
        let mut r = rule(0, Op::Le, 1.0);
        r.layer = layer.into();
        EvaluatedRule {
            rule: r,
            train: RuleStats::from_counts(Split::Train, tp, 0, fn_),
            test: RuleStats::from_counts(Split::Test, 0, 0, 0),
        }
    }

    #[test]
    fn layer_with_best_single_rule_wins() {
        let a = [evaluated("A", 6, 4), evaluated("A", 2, 8)];
        let b = [evaluated("B", 4, 6)];
        let layers: Vec<(LayerId, &[EvaluatedRule])> = vec![("B".into(), &b), ("A".into(), &a)];
        assert_eq!(select_layer(&layers, "f").unwrap(), LayerId::new("A"));
        assert_eq!(select_layer(&layers[..1], "f").unwrap(), LayerId::new("B"));
        // tie goes to the first listed layer
        let c = [evaluated("C", 6, 4)];
        let layers: Vec<(LayerId, &[EvaluatedRule])> = vec![("C".into(), &c), ("A".into(), &a)];
        assert_eq!(select_layer(&layers, "f").unwrap(), LayerId::new("C"));
        assert!(matches!(select_layer(&layers, "g"), Err(Error::NoRules(_))));
    }
}
