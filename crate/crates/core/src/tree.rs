//! Binary threshold decision trees grown to pure leaves.
//!
//! Each internal node tests one neuron, `value <= threshold` goes left and
//! everything else goes right. Splits minimise the weighted Gini impurity of
//! the two children. Candidate thresholds are the midpoints between
//! consecutive distinct values of a neuron; among equally good splits the
//! lowest neuron index wins, then the lowest threshold. Gini scores are
//! compared as exact rationals over integer counts, so tie-breaking never
//! depends on floating-point rounding.
//!
//! Growth stops only at pure nodes or at nodes whose rows share one
//! activation vector while disagreeing on the label. The latter become
//! *spurious* leaves and produce no rule.

use std::cmp::Ordering;

use serde_json::{json, Value};

use crate::dataset::ActivationDataset;
use crate::error::{Error, Result};
use crate::model::LayerId;

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LeafLabel {
    /// All rows have the feature.
    Present,
    /// No row has the feature.
    Absent,
    Spurious,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Leaf {
    pub id: NodeId,
    pub label: LeafLabel,
    /// Training rows with the feature.
    pub positives: usize,
    /// Training rows without it.
    pub negatives: usize,
}

impl Leaf {
    fn from_counts(id: NodeId, positives: usize, negatives: usize) -> Self {
        let label = match (positives, negatives) {
            (_, 0) => LeafLabel::Present,
            (0, _) => LeafLabel::Absent,
            _ => LeafLabel::Spurious,
        };
        Leaf {
            id,
            label,
            positives,
            negatives,
        }
    }

    pub fn is_pure(&self) -> bool {
        self.label != LeafLabel::Spurious
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Internal {
        neuron: usize,
        threshold: f64,
        le: NodeId,
        gt: NodeId,
    },
    Leaf(Leaf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    // preorder arena, root at 0
    nodes: Vec<TreeNode>,
    feature: String,
    layer: LayerId,
    n_neurons: usize,
    n_train_rows: usize,
}

impl DecisionTree {
    pub const ROOT: NodeId = 0;

    pub fn feature(&self) -> &str {
        &self.feature
    }

    pub fn layer(&self) -> &LayerId {
        &self.layer
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    pub fn n_train_rows(&self) -> usize {
        self.n_train_rows
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Leaf> {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf(l) => Some(l),
            TreeNode::Internal { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(Self::ROOT, 0usize)];
        while let Some((id, d)) = stack.pop() {
            match &self.nodes[id] {
                TreeNode::Leaf(_) => max = max.max(d),
                TreeNode::Internal { le, gt, .. } => {
                    stack.push((*le, d + 1));
                    stack.push((*gt, d + 1));
                }
            }
        }
        max
    }

    /// Follows `<= threshold` left and `> threshold` right down to a leaf.
    pub fn route(&self, activation: &[f64]) -> Result<&Leaf> {
        if activation.len() != self.n_neurons {
            return Err(Error::DimensionMismatch {
                context: format!("routing through tree for {:?}", self.feature),
                expected: self.n_neurons,
                found: activation.len(),
            });
        }
        let mut id = Self::ROOT;
        loop {
            match &self.nodes[id] {
                TreeNode::Leaf(l) => return Ok(l),
                TreeNode::Internal {
                    neuron,
                    threshold,
                    le,
                    gt,
                } => id = if activation[*neuron] <= *threshold { *le } else { *gt },
            }
        }
    }

    /// Nested JSON dump: internal nodes as `{neuron, threshold, le, gt}`,
    /// leaves as `{label, counts: [a, b]}`.
    pub fn to_json(&self) -> Value {
        self.node_json(Self::ROOT)
    }

    fn node_json(&self, id: NodeId) -> Value {
        match &self.nodes[id] {
            TreeNode::Internal {
                neuron,
                threshold,
                le,
                gt,
            } => json!({
                "neuron": neuron,
                "threshold": threshold,
                "le": self.node_json(*le),
                "gt": self.node_json(*gt),
            }),
            TreeNode::Leaf(l) => {
                let label = match l.label {
                    LeafLabel::Present => json!(1),
                    LeafLabel::Absent => json!(0),
                    LeafLabel::Spurious => json!("spurious"),
                };
                json!({ "label": label, "counts": [l.positives, l.negatives] })
            }
        }
    }

    /// Rebuilds a tree from its JSON dump. Leaf labels are recomputed from
    /// the counts and must agree with the stored label.
    pub fn from_json(value: &Value, feature: &str, layer: LayerId, n_neurons: usize) -> Result<Self> {
        let mut tree = DecisionTree {
            nodes: Vec::new(),
            feature: feature.to_string(),
            layer,
            n_neurons,
            n_train_rows: 0,
        };
        tree.push_json(value)?;
        tree.n_train_rows = tree.leaves().map(|l| l.positives + l.negatives).sum();
        Ok(tree)
    }

    fn push_json(&mut self, value: &Value) -> Result<NodeId> {
        let bad = |m: &str| Error::parse("tree dump", m);
        let id = self.nodes.len();
        if let Some(counts) = value.get("counts") {
            let c = counts
                .as_array()
                .filter(|c| c.len() == 2)
                .ok_or_else(|| bad("counts must be [a,b]"))?;
            let a = c[0].as_u64().ok_or_else(|| bad("count not an integer"))? as usize;
            let b = c[1].as_u64().ok_or_else(|| bad("count not an integer"))? as usize;
            let leaf = Leaf::from_counts(id, a, b);
            let expected = match leaf.label {
                LeafLabel::Present => json!(1),
                LeafLabel::Absent => json!(0),
                LeafLabel::Spurious => json!("spurious"),
            };
            if value.get("label") != Some(&expected) || a + b == 0 {
                return Err(bad("leaf label disagrees with counts"));
            }
            self.nodes.push(TreeNode::Leaf(leaf));
            return Ok(id);
        }
        let neuron = value
            .get("neuron")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing neuron"))? as usize;
        if neuron >= self.n_neurons {
            return Err(bad("neuron index out of range"));
        }
        let threshold = value
            .get("threshold")
            .and_then(Value::as_f64)
            .ok_or_else(|| bad("missing threshold"))?;
        self.nodes.push(TreeNode::Internal {
            neuron,
            threshold,
            le: 0,
            gt: 0,
        });
        let le_id = self.push_json(value.get("le").ok_or_else(|| bad("missing le"))?)?;
        let gt_id = self.push_json(value.get("gt").ok_or_else(|| bad("missing gt"))?)?;
        if let TreeNode::Internal { le, gt, .. } = &mut self.nodes[id] {
            *le = le_id;
            *gt = gt_id;
        }
        Ok(id)
    }
}

/// Weighted child impurity `aL*bL/nL + aR*bR/nR` kept as an exact fraction.
/// Proportional to the Gini impurity after the split, so minimising it
/// maximises the impurity decrease.
#[derive(Clone, Copy, Debug)]
struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    fn new(left: (usize, usize), right: (usize, usize)) -> Self {
        let (al, bl) = (left.0 as u128, left.1 as u128);
        let (ar, br) = (right.0 as u128, right.1 as u128);
        let (nl, nr) = (al + bl, ar + br);
        SplitScore {
            num: al * bl * nr + ar * br * nl,
            den: nl * nr,
        }
    }

    fn cmp(&self, other: &SplitScore) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

#[derive(Clone, Copy, Debug)]
struct Split {
    neuron: usize,
    threshold: f64,
    score: SplitScore,
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mut m = (lo + hi) / 2.0;
    if !m.is_finite() {
        m = lo / 2.0 + hi / 2.0;
    }
    // adjacent floats: keep `hi` strictly on the right side
    if m >= hi {
        m = lo;
    }
    m
}

fn best_split(data: &ActivationDataset, labels: &[bool], rows: &[usize], order: &mut Vec<usize>) -> Option<Split> {
    let acts = &data.activations;
    let total_pos = rows.iter().filter(|&&r| labels[r]).count();
    let total_neg = rows.len() - total_pos;
    let mut best: Option<Split> = None;
    for neuron in 0..acts.n_cols() {
        order.clear();
        order.extend_from_slice(rows);
        order.sort_by(|&a, &b| acts.get(a, neuron).total_cmp(&acts.get(b, neuron)).then(a.cmp(&b)));
        let (mut lp, mut ln) = (0usize, 0usize);
        for w in 0..order.len() - 1 {
            if labels[order[w]] {
                lp += 1;
            } else {
                ln += 1;
            }
            let lo = acts.get(order[w], neuron);
            let hi = acts.get(order[w + 1], neuron);
            if lo == hi {
                continue;
            }
            let score = SplitScore::new((lp, ln), (total_pos - lp, total_neg - ln));
            if best.is_none_or(|b| score.cmp(&b.score) == Ordering::Less) {
                best = Some(Split {
                    neuron,
                    threshold: midpoint(lo, hi),
                    score,
                });
            }
        }
    }
    best
}

/// Grows a tree for `feature` on the training dataset.
///
/// Fails with [`Error::DegenerateFeature`] unless the training set holds at
/// least one row with the feature and one without.
pub fn induce_tree(train: &ActivationDataset, feature: &str) -> Result<DecisionTree> {
    let labels = train.label_column(feature)?;
    let positives = labels.iter().filter(|v| **v).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateFeature {
            feature: feature.to_string(),
            positives,
            negatives,
        });
    }

    let mut nodes: Vec<TreeNode> = Vec::new();
    // (slot to patch in the parent, rows)
    type Pending = (Option<(NodeId, bool)>, Vec<usize>);
    let mut stack: Vec<Pending> = vec![(None, (0..labels.len()).collect())];
    let mut order = Vec::with_capacity(labels.len());
    while let Some((parent, rows)) = stack.pop() {
        let id = nodes.len();
        if let Some((pid, is_le)) = parent {
            if let TreeNode::Internal { le, gt, .. } = &mut nodes[pid] {
                if is_le {
                    *le = id;
                } else {
                    *gt = id;
                }
            }
        }
        let pos = rows.iter().filter(|&&r| labels[r]).count();
        let neg = rows.len() - pos;
        let split = if pos == 0 || neg == 0 {
            None
        } else {
            best_split(train, labels, &rows, &mut order)
        };
        match split {
            None => nodes.push(TreeNode::Leaf(Leaf::from_counts(id, pos, neg))),
            Some(s) => {
                let (le_rows, gt_rows): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&r| train.activations.get(r, s.neuron) <= s.threshold);
                debug_assert!(!le_rows.is_empty() && !gt_rows.is_empty());
                nodes.push(TreeNode::Internal {
                    neuron: s.neuron,
                    threshold: s.threshold,
                    le: 0,
                    gt: 0,
                });
                stack.push((Some((id, false)), gt_rows));
                stack.push((Some((id, true)), le_rows));
            }
        }
    }

    Ok(DecisionTree {
        nodes,
        feature: feature.to_string(),
        layer: train.layer.clone(),
        n_neurons: train.n_neurons(),
        n_train_rows: labels.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabelColumn, Split as DataSplit};
    use crate::matrix::Matrix;

    pub(crate) fn dataset(rows: &[&[f64]], labels: &[bool]) -> ActivationDataset {
        let n_cols = rows.first().map_or(1, |r| r.len());
        ActivationDataset::new(
            "L0".into(),
            DataSplit::Train,
            (0..rows.len()).map(|i| format!("r{i}")).collect(),
            Matrix::from_rows(n_cols, rows.iter().copied()),
            vec![LabelColumn {
                feature: "f".into(),
                values: labels.to_vec(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn three_point_split_at_midpoint() {
        let d = dataset(&[&[0.1], &[0.2], &[0.9]], &[true, true, false]);
        let t = induce_tree(&d, "f").unwrap();
        match t.node(DecisionTree::ROOT) {
            TreeNode::Internal {
                neuron,
                threshold,
                le,
                gt,
            } => {
                assert_eq!(*neuron, 0);
                assert_eq!(*threshold, (0.2 + 0.9) / 2.0);
                assert!((threshold - 0.55).abs() < 1e-15);
                assert_eq!(
                    t.node(*le),
                    &TreeNode::Leaf(Leaf {
                        id: *le,
                        label: LeafLabel::Present,
                        positives: 2,
                        negatives: 0
                    })
                );
                assert_eq!(
                    t.node(*gt),
                    &TreeNode::Leaf(Leaf {
                        id: *gt,
                        label: LeafLabel::Absent,
                        positives: 0,
                        negatives: 1
                    })
                );
            }
            other => panic!("root is {other:?}"),
        }
    }

    #[test]
    fn identical_rows_make_a_spurious_leaf() {
        let d = dataset(&[&[1.0, 2.0], &[1.0, 2.0]], &[true, false]);
        let t = induce_tree(&d, "f").unwrap();
        assert_eq!(t.n_nodes(), 1);
        let leaf = t.leaves().next().unwrap();
        assert_eq!(
            (leaf.label, leaf.positives, leaf.negatives),
            (LeafLabel::Spurious, 1, 1)
        );
    }

    #[test]
    fn degenerate_feature() {
        let d = dataset(&[&[1.0], &[2.0]], &[true, true]);
        assert!(matches!(
            induce_tree(&d, "f"),
            Err(Error::DegenerateFeature {
                positives: 2,
                negatives: 0,
                ..
            })
        ));
        assert!(matches!(induce_tree(&d, "g"), Err(Error::MissingLabel(_))));
    }

    #[test]
    fn xor_needs_zero_gain_split() {
        // no single split lowers Gini, but the rows are separable
        let d = dataset(
            &[&[0.0, 0.0], &[1.0, 1.0], &[0.0, 1.0], &[1.0, 0.0]],
            &[true, true, false, false],
        );
        let t = induce_tree(&d, "f").unwrap();
        assert!(t.leaves().all(Leaf::is_pure));
        assert_eq!(t.leaves().count(), 4);
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn adjacent_floats_split_correctly() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let d = dataset(&[&[a], &[b]], &[true, false]);
        let t = induce_tree(&d, "f").unwrap();
        assert_eq!(t.route(&[a]).unwrap().label, LeafLabel::Present);
        assert_eq!(t.route(&[b]).unwrap().label, LeafLabel::Absent);
    }

    fn fig_tree() -> DecisionTree {
        // neurons 31, 39, 45 of a 64-wide layer
        let v = serde_json::json!({
            "neuron": 31, "threshold": 4.32,
            "le": { "neuron": 45, "threshold": 1.94,
                    "le": { "label": 1, "counts": [2931, 0] },
                    "gt": { "label": 0, "counts": [0, 1928] } },
            "gt": { "neuron": 39, "threshold": 3.29,
                    "le": { "label": 1, "counts": [1321, 0] },
                    "gt": { "label": 0, "counts": [0, 1023] } }
        });
        DecisionTree::from_json(&v, "f", "L1".into(), 64).unwrap()
    }

    #[test]
    fn route_through_worked_tree() {
        let t = fig_tree();
        let mut x = vec![0.0; 64];
        x[31] = 4.0;
        x[45] = 1.5;
        let l = t.route(&x).unwrap();
        assert_eq!((l.label, l.positives, l.negatives), (LeafLabel::Present, 2931, 0));

        x[31] = 4.32;
        assert_eq!(t.route(&x).unwrap().positives, 2931, "<= is inclusive");

        x[31] = 5.0;
        x[39] = 3.3;
        let l = t.route(&x).unwrap();
        assert_eq!((l.label, l.positives, l.negatives), (LeafLabel::Absent, 0, 1023));

        assert!(matches!(t.route(&[0.0; 3]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn json_dump_round_trips() {
        let t = fig_tree();
        assert_eq!(t.n_train_rows(), 2931 + 1928 + 1321 + 1023);
        let again = DecisionTree::from_json(&t.to_json(), "f", "L1".into(), 64).unwrap();
        assert_eq!(again, t);
        let bad = serde_json::json!({ "label": 1, "counts": [3, 2] });
        assert!(DecisionTree::from_json(&bad, "f", "L1".into(), 1).is_err());
    }
}
