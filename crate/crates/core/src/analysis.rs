//! Cross-feature summaries: criterion sweeps, single-rule vs ensemble
//! comparison tables and Pareto fronts.
//!
//! Values are kept as fractions internally. Markdown and table CSVs render
//! percentages with two decimals; the sweep and Pareto CSVs keep full
//! precision for external plotting.

use std::fmt::Write as _;
use std::io::Write;

use crate::ensemble::{Criterion, EvaluatedEnsemble};
use crate::error::{Error, Result};
use crate::model::LayerId;

/// Every ensemble built for one feature at its selected layer.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureEnsembles {
    pub feature: String,
    pub layer: LayerId,
    /// The `top:1` ensemble, i.e. the single best rule.
    pub baseline: EvaluatedEnsemble,
    /// One per requested criterion, in request order.
    pub ensembles: Vec<EvaluatedEnsemble>,
}

impl FeatureEnsembles {
    pub fn get(&self, criterion: Criterion) -> Option<&EvaluatedEnsemble> {
        self.ensembles.iter().find(|e| e.ensemble.criterion == criterion)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub criterion: Criterion,
    pub n_features: usize,
    pub avg_train_recall: f64,
    pub avg_test_recall: f64,
    pub avg_test_precision: f64,
    pub avg_length: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// One averaged point per criterion over all features.
pub fn run_sweep(results: &[FeatureEnsembles], criteria: &[Criterion]) -> Result<Vec<SweepPoint>> {
    criteria
        .iter()
        .map(|&criterion| {
            let picked = results
                .iter()
                .map(|f| {
                    f.get(criterion).ok_or_else(|| {
                        Error::FeatureMismatch(format!("feature {:?} has no ensemble for {criterion}", f.feature))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepPoint {
                criterion,
                n_features: picked.len(),
                avg_train_recall: mean(picked.iter().map(|e| e.ensemble.train.recall)),
                avg_test_recall: mean(picked.iter().map(|e| e.test.recall)),
                avg_test_precision: mean(picked.iter().map(|e| e.test.precision)),
                avg_length: mean(picked.iter().map(|e| e.ensemble.total_length() as f64)),
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], writer: W) -> Result<()> {
    let ctx = "sweep csv";
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "criterion",
        "n_features",
        "avg_train_recall",
        "avg_test_recall",
        "avg_test_precision",
        "avg_length",
    ])
    .map_err(|e| Error::parse(ctx, e))?;
    for p in points {
        w.write_record([
            p.criterion.to_string(),
            p.n_features.to_string(),
            p.avg_train_recall.to_string(),
            p.avg_test_recall.to_string(),
            p.avg_test_precision.to_string(),
            p.avg_length.to_string(),
        ])
        .map_err(|e| Error::parse(ctx, e))?;
    }
    w.flush().map_err(|e| Error::parse(ctx, e))
}

/// Train recall, test precision, test recall.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Metrics {
    pub train_recall: f64,
    pub test_precision: f64,
    pub test_recall: f64,
}

impl Metrics {
    pub fn of(e: &EvaluatedEnsemble) -> Self {
        Metrics {
            train_recall: e.ensemble.train.recall,
            test_precision: e.test.precision,
            test_recall: e.test.recall,
        }
    }

    fn minus(&self, other: &Metrics) -> Metrics {
        Metrics {
            train_recall: self.train_recall - other.train_recall,
            test_precision: self.test_precision - other.test_precision,
            test_recall: self.test_recall - other.test_recall,
        }
    }

    fn values(&self) -> [f64; 3] {
        [self.train_recall, self.test_precision, self.test_recall]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub feature: String,
    pub fga: Metrics,
    pub efga: Metrics,
    pub diff: Metrics,
}

impl ComparisonRow {
    fn cells(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        out[..3].copy_from_slice(&self.fga.values());
        out[3..6].copy_from_slice(&self.efga.values());
        out[6..].copy_from_slice(&self.diff.values());
        out
    }
}

/// Per-feature single-rule vs ensemble metrics plus the column means.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub criterion: Criterion,
    pub rows: Vec<ComparisonRow>,
    pub average: ComparisonRow,
}

pub fn compare_fga_efga(
    criterion: Criterion,
    fga: &[(String, Metrics)],
    efga: &[(String, Metrics)],
) -> Result<Comparison> {
    if fga.len() != efga.len() {
        return Err(Error::FeatureMismatch(format!(
            "{} vs {} features",
            fga.len(),
            efga.len()
        )));
    }
    let rows = fga
        .iter()
        .map(|(name, base)| {
            let (_, ens) = efga
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::FeatureMismatch(format!("{name:?} missing on the ensemble side")))?;
            Ok(ComparisonRow {
                feature: name.clone(),
                fga: *base,
                efga: *ens,
                diff: ens.minus(base),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let avg = |f: fn(&ComparisonRow) -> Metrics| {
        let ms: Vec<Metrics> = rows.iter().map(f).collect();
        Metrics {
            train_recall: mean(ms.iter().map(|m| m.train_recall)),
            test_precision: mean(ms.iter().map(|m| m.test_precision)),
            test_recall: mean(ms.iter().map(|m| m.test_recall)),
        }
    };
    let average = ComparisonRow {
        feature: "Average".into(),
        fga: avg(|r| r.fga),
        efga: avg(|r| r.efga),
        diff: avg(|r| r.diff),
    };
    Ok(Comparison {
        criterion,
        rows,
        average,
    })
}

impl Comparison {
    /// Row indices of the minimum and maximum of each of the nine columns.
    /// Ties go to the first row.
    /// (min, max) of each of the nine value columns, in percent as rendered,
    /// so that rows which print the same also highlight the same.
    pub fn column_extremes(&self) -> [(f64, f64); 9] {
        let mut out = [(f64::INFINITY, f64::NEG_INFINITY); 9];
        for row in &self.rows {
            for (slot, v) in out.iter_mut().zip(row.cells()) {
                let v = rounded(v);
                slot.0 = slot.0.min(v);
                slot.1 = slot.1.max(v);
            }
        }
        out
    }

    /// Markdown table with FGA / EFGA / Differences column groups. Column
    /// maxima are bold, minima italic.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "FGA = top:1, EFGA = {}. Values in percent.\n", self.criterion);
        s.push_str("| Feature | FGA R_tr | FGA P_te | FGA R_te | EFGA R_tr | EFGA P_te | EFGA R_te | Differences R_tr | Differences P_te | Differences R_te |\n");
        s.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
        let ext = self.column_extremes();
        for row in &self.rows {
            let cells: Vec<String> = row
                .cells()
                .iter()
                .enumerate()
                .map(|(c, v)| {
                    let text = pct(*v);
                    let (lo, hi) = ext[c];
                    let v = rounded(*v);
                    if lo == hi {
                        text
                    } else if v == hi {
                        format!("**{text}**")
                    } else if v == lo {
                        format!("_{text}_")
                    } else {
                        text
                    }
                })
                .collect();
            let _ = writeln!(s, "| {} | {} |", row.feature, cells.join(" | "));
        }
        let avg: Vec<String> = self.average.cells().iter().map(|v| pct(*v)).collect();
        let _ = writeln!(s, "| Average | {} |", avg.join(" | "));
        s
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let ctx = "comparison csv";
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "feature",
            "fga_train_recall",
            "fga_test_precision",
            "fga_test_recall",
            "efga_train_recall",
            "efga_test_precision",
            "efga_test_recall",
            "diff_train_recall",
            "diff_test_precision",
            "diff_test_recall",
        ])
        .map_err(|e| Error::parse(ctx, e))?;
        for row in self.rows.iter().chain(std::iter::once(&self.average)) {
            let mut rec = vec![row.feature.clone()];
            rec.extend(row.cells().iter().map(|v| pct(*v)));
            w.write_record(&rec).map_err(|e| Error::parse(ctx, e))?;
        }
        w.flush().map_err(|e| Error::parse(ctx, e))
    }
}

/// Fraction rendered as a percentage with two decimals.
pub fn pct(v: f64) -> String {
    let s = format!("{:.2}", v * 100.0);
    // avoid "-0.00"
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn rounded(v: f64) -> f64 {
    pct(v).parse().expect("pct renders a number")
}

/// Indices of the non-dominated points when both coordinates are
/// maximised, one index per distinct point, ordered by ascending x.
///
/// `p` dominates `q` iff `p >= q` in both coordinates and `p != q`.
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    // x descending, then y descending, then first occurrence
    order.sort_by(|&a, &b| {
        points[b]
            .0
            .total_cmp(&points[a].0)
            .then(points[b].1.total_cmp(&points[a].1))
            .then(a.cmp(&b))
    });
    let mut front = Vec::new();
    let mut best_y = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let x = points[order[i]].0;
        // first of the group has the largest y for this x
        let head = order[i];
        if front.is_empty() || points[head].1 > best_y {
            front.push(head);
        }
        best_y = best_y.max(points[head].1);
        while i < order.len() && points[order[i]].0 == x {
            i += 1;
        }
    }
    front.reverse();
    front
}

/// The Pareto front itself, duplicates kept once, sorted by x.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    pareto_indices(points).into_iter().map(|i| points[i]).collect()
}

/// Which sweep points lie on the (test recall, test precision) front.
pub fn precision_front(points: &[SweepPoint]) -> Vec<bool> {
    flags(points, |p| (p.avg_test_recall, p.avg_test_precision))
}

/// Which sweep points lie on the (test recall, -length) front.
pub fn length_front(points: &[SweepPoint]) -> Vec<bool> {
    flags(points, |p| (p.avg_test_recall, -p.avg_length))
}

fn flags(points: &[SweepPoint], f: impl Fn(&SweepPoint) -> (f64, f64)) -> Vec<bool> {
    let xy: Vec<(f64, f64)> = points.iter().map(f).collect();
    let mut on = vec![false; xy.len()];
    for i in pareto_indices(&xy) {
        on[i] = true;
    }
    on
}

/// `criterion,x,y,on_front` rows; `y` is precision or length as plotted.
pub fn write_pareto_csv<W: Write>(points: &[SweepPoint], length_axis: bool, writer: W) -> Result<()> {
    let ctx = "pareto csv";
    let on = if length_axis {
        length_front(points)
    } else {
        precision_front(points)
    };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["criterion", "x", "y", "on_front"])
        .map_err(|e| Error::parse(ctx, e))?;
    for (p, on) in points.iter().zip(on) {
        let y = if length_axis {
            p.avg_length
        } else {
            p.avg_test_precision
        };
        w.write_record([
            p.criterion.to_string(),
            p.avg_test_recall.to_string(),
            y.to_string(),
            (on as u8).to_string(),
        ])
        .map_err(|e| Error::parse(ctx, e))?;
    }
    w.flush().map_err(|e| Error::parse(ctx, e))
}
