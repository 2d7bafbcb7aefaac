//! Decision rules read off root-to-leaf paths, and their precision/recall.
//!
//! Every pure leaf yields one rule: the conjunction of the edge predicates on
//! its path implies presence (leaf label 1) or absence (label 0) of the
//! feature. Spurious leaves yield nothing. Clauses are kept exactly as they
//! appear on the path, so a rule's length is the depth of its leaf.

use std::cmp::Ordering;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::dataset::{ActivationDataset, Split};
use crate::error::{Error, Result};
use crate::model::LayerId;
use crate::tree::{DecisionTree, LeafLabel, NodeId, TreeNode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Le,
    Gt,
}

impl Op {
    fn symbol(self) -> &'static str {
        match self {
            Op::Le => "<=",
            Op::Gt => ">",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clause {
    pub neuron: usize,
    pub op: Op,
    pub threshold: f64,
}

impl Clause {
    pub fn holds(&self, activation: &[f64]) -> bool {
        let v = activation[self.neuron];
        match self.op {
            Op::Le => v <= self.threshold,
            Op::Gt => v > self.threshold,
        }
    }

    fn cmp_key(&self, other: &Clause) -> Ordering {
        self.neuron
            .cmp(&other.neuron)
            .then(self.op.cmp(&other.op))
            .then(self.threshold.total_cmp(&other.threshold))
    }
}

/// `N<i><=t` or `N<i>>t` with 17 significant digits, which round-trips
/// every `f64` exactly.
impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N{}{}{:.16e}", self.neuron, self.op.symbol(), self.threshold)
    }
}

impl FromStr for Clause {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::parse("clause", format!("cannot parse {s:?}"));
        let body = s.trim().strip_prefix('N').ok_or_else(bad)?;
        let op_at = body.find(['<', '>']).ok_or_else(bad)?;
        let neuron = body[..op_at].parse().map_err(|_| bad())?;
        let rest = &body[op_at..];
        let (op, t) = if let Some(t) = rest.strip_prefix("<=") {
            (Op::Le, t)
        } else if let Some(t) = rest.strip_prefix('>') {
            (Op::Gt, t)
        } else {
            return Err(bad());
        };
        let threshold: f64 = t.parse().map_err(|_| bad())?;
        if !threshold.is_finite() {
            return Err(bad());
        }
        Ok(Clause { neuron, op, threshold })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Postcondition {
    Absence,
    Presence,
}

impl Postcondition {
    pub fn as_label(self) -> bool {
        self == Postcondition::Presence
    }
}

impl fmt::Display for Postcondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Postcondition::Presence => "1",
            Postcondition::Absence => "0",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub clauses: Vec<Clause>,
    pub postcondition: Postcondition,
    pub feature: String,
    pub layer: LayerId,
    /// Training (positives, negatives) of the source leaf.
    pub leaf_counts: (usize, usize),
}

impl Rule {
    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Minimum activation width this rule can be evaluated on.
    pub fn required_width(&self) -> usize {
        self.clauses.iter().map(|c| c.neuron + 1).max().unwrap_or(0)
    }

    pub fn satisfies(&self, activation: &[f64]) -> Result<bool> {
        let need = self.required_width();
        if activation.len() < need {
            return Err(Error::DimensionMismatch {
                context: "rule evaluation".into(),
                expected: need,
                found: activation.len(),
            });
        }
        Ok(self.holds(activation))
    }

    pub(crate) fn holds(&self, activation: &[f64]) -> bool {
        self.clauses.iter().all(|c| c.holds(activation))
    }

    /// Precondition as `N<i><op><t>` clauses joined by `&`.
    pub fn precondition_string(&self) -> String {
        self.clauses.iter().map(Clause::to_string).collect::<Vec<_>>().join("&")
    }

    pub fn parse_precondition(s: &str) -> Result<Vec<Clause>> {
        s.split('&').map(str::parse).collect()
    }

    /// Lexicographic order over clause lists, used as the last tie-break when
    /// sorting rules.
    pub fn cmp_clauses(&self, other: &Rule) -> Ordering {
        for (a, b) in self.clauses.iter().zip(&other.clauses) {
            match a.cmp_key(b) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        self.clauses.len().cmp(&other.clauses.len())
    }

    /// Merges clauses on the same neuron and direction into the tightest
    /// bound. The result is logically equivalent but shorter, so it changes
    /// the reported length; rules are never normalized implicitly.
    pub fn normalized(&self) -> Rule {
        let mut merged: Vec<Clause> = Vec::new();
        for c in &self.clauses {
            match merged.iter_mut().find(|m| m.neuron == c.neuron && m.op == c.op) {
                Some(m) => {
                    m.threshold = match c.op {
                        Op::Le => m.threshold.min(c.threshold),
                        Op::Gt => m.threshold.max(c.threshold),
                    }
                }
                None => merged.push(*c),
            }
        }
        Rule {
            clauses: merged,
            ..self.clone()
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pre: Vec<String> = self
            .clauses
            .iter()
            .map(|c| format!("N{} {} {}", c.neuron, c.op.symbol(), c.threshold))
            .collect();
        write!(f, "({}) -> {}", pre.join(" ∧ "), self.postcondition)
    }
}

/// One rule per pure leaf, in preorder (left subtree first).
pub fn extract_rules(tree: &DecisionTree) -> Vec<Rule> {
    let mut rules = Vec::new();
    let mut stack: Vec<(NodeId, Vec<Clause>)> = vec![(DecisionTree::ROOT, Vec::new())];
    while let Some((id, path)) = stack.pop() {
        match tree.node(id) {
            TreeNode::Internal {
                neuron,
                threshold,
                le,
                gt,
            } => {
                let mut gt_path = path.clone();
                gt_path.push(Clause {
                    neuron: *neuron,
                    op: Op::Gt,
                    threshold: *threshold,
                });
                let mut le_path = path;
                le_path.push(Clause {
                    neuron: *neuron,
                    op: Op::Le,
                    threshold: *threshold,
                });
                stack.push((*gt, gt_path));
                stack.push((*le, le_path));
            }
            TreeNode::Leaf(leaf) => {
                let postcondition = match leaf.label {
                    LeafLabel::Present => Postcondition::Presence,
                    LeafLabel::Absent => Postcondition::Absence,
                    LeafLabel::Spurious => continue,
                };
                // a pure root has no clauses and makes no claim
                if path.is_empty() {
                    continue;
                }
                rules.push(Rule {
                    clauses: path,
                    postcondition,
                    feature: tree.feature().to_string(),
                    layer: tree.layer().clone(),
                    leaf_counts: (leaf.positives, leaf.negatives),
                });
            }
        }
    }
    rules
}

/// Confusion counts and derived precision/recall on one split.
///
/// A rule or ensemble that never fires has no precision; it is reported as
/// 1.0 with `precision_inapplicable` set. With no positive rows recall is
/// reported as 0.0 with `recall_inapplicable` set, which keeps recall
/// additive over disjoint rules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuleStats {
    pub split: Split,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub precision_inapplicable: bool,
    pub recall_inapplicable: bool,
}

impl RuleStats {
    pub fn from_counts(split: Split, tp: usize, fp: usize, fn_: usize) -> Self {
        let fired = tp + fp;
        let positives = tp + fn_;
        RuleStats {
            split,
            tp,
            fp,
            fn_,
            precision: if fired == 0 { 1.0 } else { tp as f64 / fired as f64 },
            recall: if positives == 0 {
                0.0
            } else {
                tp as f64 / positives as f64
            },
            precision_inapplicable: fired == 0,
            recall_inapplicable: positives == 0,
        }
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }
}

/// Counts rows where `fires` holds against rows whose label equals `target`.
pub(crate) fn confusion(
    dataset: &ActivationDataset,
    labels: &[bool],
    target: bool,
    mut fires: impl FnMut(&[f64]) -> bool,
) -> RuleStats {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (row, &label) in dataset.activations.rows().zip(labels) {
        let positive = label == target;
        match (fires(row), positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    RuleStats::from_counts(dataset.split, tp, fp, fn_)
}

pub(crate) fn check_width(dataset: &ActivationDataset, width: usize) -> Result<()> {
    if dataset.n_neurons() < width {
        return Err(Error::DimensionMismatch {
            context: format!("dataset for layer {}", dataset.layer),
            expected: width,
            found: dataset.n_neurons(),
        });
    }
    Ok(())
}

/// Positives are rows whose label matches the rule's postcondition.
pub fn evaluate_rule(rule: &Rule, dataset: &ActivationDataset) -> Result<RuleStats> {
    let labels = dataset.label_column(&rule.feature)?;
    check_width(dataset, rule.required_width())?;
    Ok(confusion(dataset, labels, rule.postcondition.as_label(), |row| {
        rule.holds(row)
    }))
}

/// A rule with its metrics on both splits.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluatedRule {
    pub rule: Rule,
    pub train: RuleStats,
    pub test: RuleStats,
}

impl EvaluatedRule {
    pub fn evaluate(rule: Rule, train: &ActivationDataset, test: &ActivationDataset) -> Result<Self> {
        Ok(EvaluatedRule {
            train: evaluate_rule(&rule, train)?,
            test: evaluate_rule(&rule, test)?,
            rule,
        })
    }
}

const RULE_CSV_HEADER: [&str; 17] = [
    "feature",
    "layer",
    "postcondition",
    "length",
    "clauses",
    "train_tp",
    "train_fp",
    "train_fn",
    "train_precision",
    "train_recall",
    "test_tp",
    "test_fp",
    "test_fn",
    "test_precision",
    "test_recall",
    "leaf_positives",
    "leaf_negatives",
];

pub fn write_rule_csv<W: Write>(rules: &[EvaluatedRule], writer: W) -> Result<()> {
    let ctx = "rule csv";
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RULE_CSV_HEADER).map_err(|e| Error::parse(ctx, e))?;
    for r in rules {
        let rec = [
            r.rule.feature.clone(),
            r.rule.layer.to_string(),
            r.rule.postcondition.to_string(),
            r.rule.len().to_string(),
            r.rule.precondition_string(),
            r.train.tp.to_string(),
            r.train.fp.to_string(),
            r.train.fn_.to_string(),
            r.train.precision.to_string(),
            r.train.recall.to_string(),
            r.test.tp.to_string(),
            r.test.fp.to_string(),
            r.test.fn_.to_string(),
            r.test.precision.to_string(),
            r.test.recall.to_string(),
            r.rule.leaf_counts.0.to_string(),
            r.rule.leaf_counts.1.to_string(),
        ];
        w.write_record(&rec).map_err(|e| Error::parse(ctx, e))?;
    }
    w.flush().map_err(|e| Error::parse(ctx, e))?;
    Ok(())
}

pub fn save_rule_csv(rules: &[EvaluatedRule], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_rule_csv(rules, std::io::BufWriter::new(file))
}

/// Reads a rule dump back; precision and recall are recomputed from the
/// stored counts.
pub fn read_rule_csv<R: Read>(reader: R, context: &str) -> Result<Vec<EvaluatedRule>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::parse(context, e))?.clone();
    if header.iter().ne(RULE_CSV_HEADER) {
        return Err(Error::Schema {
            context: context.into(),
            row: 0,
            column: String::new(),
            message: "unexpected rule csv header".into(),
        });
    }
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| Error::parse(context, e))?;
        let schema = |column: &str, message: String| Error::Schema {
            context: context.into(),
            row,
            column: column.into(),
            message,
        };
        let count = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|_| schema(RULE_CSV_HEADER[i], format!("not a count: {:?}", &rec[i])))
        };
        let postcondition = match &rec[2] {
            "1" => Postcondition::Presence,
            "0" => Postcondition::Absence,
            other => return Err(schema("postcondition", format!("expected 0 or 1, found {other:?}"))),
        };
        let clauses = Rule::parse_precondition(&rec[4]).map_err(|e| schema("clauses", e.to_string()))?;
        if clauses.len() != count(3)? {
            return Err(schema("length", "length disagrees with clause count".into()));
        }
        let rule = Rule {
            clauses,
            postcondition,
            feature: rec[0].to_string(),
            layer: LayerId::new(&rec[1]),
            leaf_counts: (count(15)?, count(16)?),
        };
        out.push(EvaluatedRule {
            train: RuleStats::from_counts(Split::Train, count(5)?, count(6)?, count(7)?),
            test: RuleStats::from_counts(Split::Test, count(10)?, count(11)?, count(12)?),
            rule,
        });
    }
    Ok(out)
}

pub fn load_rule_csv(path: impl AsRef<Path>) -> Result<Vec<EvaluatedRule>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_rule_csv(std::io::BufReader::new(file), &path.display().to_string())
}
