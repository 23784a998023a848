//! Per-(label, region) ROC-AUC evaluation and model comparison.
//!
//! Each (region, label) cell is scored independently across test images:
//! the scores of region r for label m are ranked only against the ground
//! truth of that same cell, so a finding predicted at the wrong anatomical
//! location earns no credit there. Cells whose test labels are all equal
//! are undefined and excluded from every average.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Rank-based (Mann-Whitney) AUC with midrank tie handling. Returns
/// `None` when the labels are all positive or all negative.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores against {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("NaN score passed to roc_auc".into()));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Data("roc_auc labels must be 0 or 1".into()));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Ok(None);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // midranks over tied score runs; every rank is a multiple of 0.5, so
    // the positive rank sum below is exact in f64
    let mut positive_rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                positive_rank_sum += midrank;
            }
        }
        i = j + 1;
    }

    let p = positives as f64;
    let n = negatives as f64;
    Ok(Some((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n)))
}

/// One (region, label) cell of the report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellAuc {
    /// `None` marks an undefined cell (no positives or no negatives).
    pub auc: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
}

/// AUC per (region, label) cell plus per-label and macro averages over the
/// defined cells.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub regions: usize,
    pub labels: usize,
    cells: Vec<CellAuc>,
    pub label_averages: Vec<Option<f64>>,
    pub macro_average: Option<f64>,
}

impl EvalReport {
    pub fn cell(&self, region: usize, label: usize) -> &CellAuc {
        &self.cells[region * self.labels + label]
    }

    pub fn cells(&self) -> &[CellAuc] {
        &self.cells
    }

    /// Mean of the defined cells restricted to a label subset.
    pub fn macro_over_labels(&self, labels: &[usize]) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for &m in labels {
            for r in 0..self.regions {
                if let Some(a) = self.cell(r, m).auc {
                    sum += a;
                    count += 1;
                }
            }
        }
        (count > 0).then(|| sum / count as f64)
    }

    fn defined_mask(&self) -> Vec<bool> {
        self.cells.iter().map(|c| c.auc.is_some()).collect()
    }
}

/// Evaluate per-image probability matrices (k x M each) against per-image
/// label matrices over a test split.
pub fn evaluate(predictions: &[Matrix], labels: &[Matrix]) -> Result<EvalReport> {
    if predictions.is_empty() {
        return Err(Error::Contract("evaluate needs a non-empty split".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} predictions against {} label tensors",
            predictions.len(),
            labels.len()
        )));
    }
    let (k, m_count) = predictions[0].shape();
    for (p, y) in predictions.iter().zip(labels) {
        if p.shape() != (k, m_count) || y.shape() != (k, m_count) {
            return Err(Error::Shape {
                op: "evaluate",
                left_rows: k,
                left_cols: m_count,
                right_rows: y.rows(),
                right_cols: y.cols(),
            });
        }
    }

    let mut cells = Vec::with_capacity(k * m_count);
    for r in 0..k {
        for m in 0..m_count {
            let scores: Vec<f64> = predictions.iter().map(|p| p[(r, m)]).collect();
            let cell_labels: Vec<u8> = labels
                .iter()
                .map(|y| {
                    let v = y[(r, m)];
                    if v == 1.0 {
                        Ok(1u8)
                    } else if v == 0.0 {
                        Ok(0u8)
                    } else {
                        Err(Error::Data("labels must be exactly 0 or 1".into()))
                    }
                })
                .collect::<Result<_>>()?;
            let positives = cell_labels.iter().filter(|&&y| y == 1).count();
            cells.push(CellAuc {
                auc: roc_auc(&scores, &cell_labels)?,
                positives,
                negatives: cell_labels.len() - positives,
            });
        }
    }

    let label_averages: Vec<Option<f64>> = (0..m_count)
        .map(|m| {
            let defined: Vec<f64> = (0..k)
                .filter_map(|r| cells[r * m_count + m].auc)
                .collect();
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
        })
        .collect();
    let defined: Vec<f64> = cells.iter().filter_map(|c| c.auc).collect();
    let macro_average =
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);

    Ok(EvalReport { regions: k, labels: m_count, cells, label_averages, macro_average })
}

/// Signed per-label and macro differences between two reports (a - b).
#[derive(Clone, Debug)]
pub struct Comparison {
    pub label_deltas: Vec<Option<f64>>,
    pub macro_delta: Option<f64>,
}

pub fn compare(a: &EvalReport, b: &EvalReport) -> Result<Comparison> {
    if a.regions != b.regions || a.labels != b.labels {
        return Err(Error::Contract(format!(
            "cannot compare a {}x{} report with a {}x{} report",
            a.regions, a.labels, b.regions, b.labels
        )));
    }
    if a.defined_mask() != b.defined_mask() {
        return Err(Error::Contract(
            "reports have different defined-cell sets".into(),
        ));
    }
    let label_deltas = a
        .label_averages
        .iter()
        .zip(&b.label_averages)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some(x - y),
            _ => None,
        })
        .collect();
    let macro_delta = match (a.macro_average, b.macro_average) {
        (Some(x), Some(y)) => Some(x - y),
        _ => None,
    };
    Ok(Comparison { label_deltas, macro_delta })
}

fn fmt_auc(v: Option<f64>) -> String {
    match v {
        Some(a) => format!("{a:.4}"),
        None => "NA".to_string(),
    }
}

/// Human-readable table: a per-label summary row in L1..LM order, then the
/// full region x label grid.
pub fn render_report_text(
    report: &EvalReport,
    region_names: &[String],
    label_names: &[String],
) -> String {
    let mut out = String::new();
    out.push_str("Per-label average AUC over anatomical regions\n");
    let ids: Vec<String> = (1..=report.labels).map(|i| format!("L{i}")).collect();
    out.push_str(&format!("{:<10}", "label"));
    for id in &ids {
        out.push_str(&format!("{id:>9}"));
    }
    out.push_str(&format!("{:>9}\n", "AVG"));
    out.push_str(&format!("{:<10}", "auc"));
    for avg in &report.label_averages {
        out.push_str(&format!("{:>9}", fmt_auc(*avg)));
    }
    out.push_str(&format!("{:>9}\n\n", fmt_auc(report.macro_average)));

    out.push_str("Per-(region, label) cells\n");
    let name_width = region_names.iter().map(|n| n.len()).max().unwrap_or(6).max(6);
    out.push_str(&format!("{:<width$}", "region", width = name_width + 2));
    for id in &ids {
        out.push_str(&format!("{id:>9}"));
    }
    out.push('\n');
    for (r, name) in region_names.iter().enumerate() {
        out.push_str(&format!("{:<width$}", name, width = name_width + 2));
        for m in 0..report.labels {
            out.push_str(&format!("{:>9}", fmt_auc(report.cell(r, m).auc)));
        }
        out.push('\n');
    }
    let _ = label_names;
    out
}

/// Machine-readable cells: `region<TAB>label<TAB>auc|NA<TAB>n_pos<TAB>n_neg`
/// per line, then per-label average lines with region `ALL`, then one
/// `ALL<TAB>ALL` macro line.
pub fn render_report_tsv(
    report: &EvalReport,
    region_names: &[String],
    label_names: &[String],
) -> String {
    let mut out = String::from("region\tlabel\tauc\tn_pos\tn_neg\n");
    for (r, region) in region_names.iter().enumerate() {
        for (m, label) in label_names.iter().enumerate() {
            let cell = report.cell(r, m);
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                region,
                label,
                fmt_auc(cell.auc),
                cell.positives,
                cell.negatives
            ));
        }
    }
    for (m, label) in label_names.iter().enumerate() {
        let (pos, neg) = (0..report.regions).fold((0, 0), |(p, n), r| {
            let c = report.cell(r, m);
            (p + c.positives, n + c.negatives)
        });
        out.push_str(&format!(
            "ALL\t{}\t{}\t{}\t{}\n",
            label,
            fmt_auc(report.label_averages[m]),
            pos,
            neg
        ));
    }
    let (pos, neg) = report
        .cells
        .iter()
        .fold((0, 0), |(p, n), c| (p + c.positives, n + c.negatives));
    out.push_str(&format!("ALL\tALL\t{}\t{}\t{}\n", fmt_auc(report.macro_average), pos, neg));
    out
}

/// Write `report.txt` and `report.tsv`.
pub fn write_report_files(
    report: &EvalReport,
    region_names: &[String],
    label_names: &[String],
    txt_path: &Path,
    tsv_path: &Path,
) -> Result<()> {
    fs::write(txt_path, render_report_text(report, region_names, label_names))
        .map_err(|e| Error::io(txt_path, e))?;
    fs::write(tsv_path, render_report_tsv(report, region_names, label_names))
        .map_err(|e| Error::io(tsv_path, e))
}

/// Comparison table in the same per-label layout.
pub fn render_comparison(c: &Comparison, label_names: &[String]) -> String {
    let mut out = String::from("label\tdelta\n");
    for (name, delta) in label_names.iter().zip(&c.label_deltas) {
        out.push_str(&format!(
            "{name}\t{}\n",
            delta.map_or("NA".to_string(), |d| format!("{d:+.4}"))
        ));
    }
    out.push_str(&format!(
        "MACRO\t{}\n",
        c.macro_delta.map_or("NA".to_string(), |d| format!("{d:+.4}"))
    ));
    out
}
