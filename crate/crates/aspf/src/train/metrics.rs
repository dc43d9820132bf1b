//! Confusion counts and the derived scores. The positive class is "real"
//! throughout, so TP means a genuine face recognized as genuine.

use crate::error::{Error, Result};
use crate::img::Image;

/// Global confusion counts over one split plus the scores derived from them.
/// Zero denominators yield 0 rather than NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricsReport {
    /// Derive the four scores from raw counts.
    pub fn from_counts(true_pos: u64, false_pos: u64, false_neg: u64, true_neg: u64) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(true_pos, true_pos + false_pos);
        let recall = ratio(true_pos, true_pos + false_neg);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricsReport {
            true_pos,
            false_pos,
            false_neg,
            true_neg,
            accuracy: ratio(true_pos + true_neg, true_pos + false_pos + false_neg + true_neg),
            precision,
            recall,
            f1,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

/// Count the confusion matrix over parallel label slices (1 = real, 0 = fake).
pub fn compute_metrics(pred_labels: &[u8], true_labels: &[u8]) -> Result<MetricsReport> {
    if pred_labels.is_empty() {
        return Err(Error::EmptyInput {
            what: "compute_metrics labels".into(),
        });
    }
    if pred_labels.len() != true_labels.len() {
        return Err(Error::Shape {
            op: "compute_metrics",
            detail: format!("{} predictions vs {} labels", pred_labels.len(), true_labels.len()),
        });
    }
    let (mut tp, mut fp, mut fnn, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &y) in pred_labels.iter().zip(true_labels) {
        if p > 1 || y > 1 {
            return Err(Error::InvalidArg {
                op: "compute_metrics",
                detail: format!("labels must be 0 or 1, got pred {p}, actual {y}"),
            });
        }
        match (p, y) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fnn += 1,
            _ => tn += 1,
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, fnn, tn))
}

/// Aligned plain-text confusion matrix. Rows are actual, columns predicted,
/// "real" first in both.
pub fn render_confusion_text(report: &MetricsReport) -> String {
    let w = report
        .total()
        .max(1)
        .to_string()
        .len()
        .max("pred fake".len());
    let mut out = String::new();
    out.push_str(&format!(
        "{:>12}  {:>w$}  {:>w$}\n",
        "", "pred real", "pred fake"
    ));
    out.push_str(&format!(
        "{:>12}  {:>w$}  {:>w$}\n",
        "actual real", report.true_pos, report.false_neg
    ));
    out.push_str(&format!(
        "{:>12}  {:>w$}  {:>w$}\n",
        "actual fake", report.false_pos, report.true_neg
    ));
    out.push_str(&format!(
        "\naccuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}\n",
        report.accuracy, report.precision, report.recall, report.f1
    ));
    out
}

/// 2x2 confusion matrix as a blue-to-red heatmap, each cell a `cell` x `cell`
/// pixel square, intensity proportional to count / max count.
pub fn render_confusion_heatmap(report: &MetricsReport, cell: usize) -> Result<Image> {
    if cell == 0 {
        return Err(Error::InvalidArg {
            op: "render_confusion_heatmap",
            detail: "cell size must be >= 1".into(),
        });
    }
    let counts = [
        [report.true_pos, report.false_neg],
        [report.false_pos, report.true_neg],
    ];
    let max = counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let side = 2 * cell;
    let mut data = vec![0u8; side * side * 3];
    for (row, row_counts) in counts.iter().enumerate() {
        for (col, &count) in row_counts.iter().enumerate() {
            let v = count as f64 / max;
            let rgb = heat_color(v);
            for dy in 0..cell {
                for dx in 0..cell {
                    let px = ((row * cell + dy) * side + col * cell + dx) * 3;
                    data[px..px + 3].copy_from_slice(&rgb);
                }
            }
        }
    }
    Image::new(side, side, 3, data)
}

/// Map v in [0,1] to blue (cold) through red (hot).
pub fn heat_color(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    [
        (255.0 * v).round() as u8,
        0,
        (255.0 * (1.0 - v)).round() as u8,
    ]
}
