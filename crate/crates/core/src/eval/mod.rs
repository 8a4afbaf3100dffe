//! Localization metrics, duration breakdowns, classifier metrics and
//! annotator agreement.

mod agreement;

pub use agreement::{fleiss_kappa, krippendorff_alpha_interval, per_video_alpha, visibility_counts, AnnotationRecord};

use crate::interval::{iou, DurationClass, TimeInterval};
use crate::localize::Prediction;
use crate::manifest::{ActionRecord, ManifestError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

/// IoU thresholds reported in every metrics table.
pub const RECALL_THRESHOLDS: [f64; 4] = [0.1, 0.3, 0.5, 0.7];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no prediction for action {0:?}")]
    MissingPrediction(String),
    #[error("empty input")]
    EmptyInput,
    #[error("row {row} sums to {sum}, expected {expected}")]
    RaggedRow { row: usize, sum: usize, expected: usize },
    #[error("need at least two raters per item, got {0}")]
    TooFewRaters(usize),
    #[error("chance agreement is 1; kappa is undefined")]
    DegenerateChance,
    #[error("fewer than two items carry two or more values")]
    InsufficientPairs,
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

/// Gold label for one action.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldAction {
    pub action_id: String,
    pub visible: bool,
    /// Present exactly when `visible`.
    pub interval: Option<TimeInterval>,
}

impl GoldAction {
    pub fn from_record(r: &ActionRecord) -> Result<Self, EvalError> {
        Ok(Self {
            action_id: r.action_id.clone(),
            visible: r.is_gold_visible(),
            interval: r.gold_interval()?,
        })
    }
}

fn lookup<'a>(preds: &'a [Prediction]) -> HashMap<&'a str, &'a Prediction> {
    preds.iter().map(|p| (p.action_id.as_str(), p)).collect()
}

fn pair<'a>(
    by_id: &HashMap<&str, &'a Prediction>,
    gold: &GoldAction,
) -> Result<&'a Prediction, EvalError> {
    by_id
        .get(gold.action_id.as_str())
        .copied()
        .ok_or_else(|| EvalError::MissingPrediction(gold.action_id.clone()))
}

/// Per-action IoU for gold-visible actions; 0 when predicted not visible.
fn visible_ious(preds: &[Prediction], gold: &[GoldAction]) -> Result<Vec<f64>, EvalError> {
    let by_id = lookup(preds);
    let mut out = Vec::new();
    for g in gold.iter().filter(|g| g.visible) {
        let p = pair(&by_id, g)?;
        out.push(match (p.visible, p.interval, g.interval) {
            (true, Some(pi), Some(gi)) => iou(&pi, &gi),
            _ => 0.0,
        });
    }
    Ok(out)
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Percentage of actions whose predicted visibility matches gold.
pub fn visibility_accuracy(preds: &[Prediction], gold: &[GoldAction]) -> Result<f64, EvalError> {
    let by_id = lookup(preds);
    let mut hits = 0;
    for g in gold {
        if pair(&by_id, g)?.visible == g.visible {
            hits += 1;
        }
    }
    Ok(percent(hits, gold.len()))
}

/// Percentage of gold-visible actions predicted visible with IoU strictly
/// above `thr`.
pub fn recall_at_iou(preds: &[Prediction], gold: &[GoldAction], thr: f64) -> Result<f64, EvalError> {
    let ious = visible_ious(preds, gold)?;
    Ok(percent(ious.iter().filter(|&&x| x > thr).count(), ious.len()))
}

/// Mean IoU over gold-visible actions, as a percentage.
pub fn mean_iou(preds: &[Prediction], gold: &[GoldAction]) -> Result<f64, EvalError> {
    let ious = visible_ious(preds, gold)?;
    if ious.is_empty() {
        return Ok(0.0);
    }
    Ok(100.0 * ious.iter().sum::<f64>() / ious.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub va: f64,
    /// Keyed by the IoU threshold written as `"0.1"` etc.
    pub recall: BTreeMap<String, f64>,
    pub miou: f64,
    pub n_actions: usize,
    pub n_visible: usize,
}

impl MetricsReport {
    pub fn recall_at(&self, thr: f64) -> Option<f64> {
        self.recall.get(&format!("{thr}")).copied()
    }
}

pub fn evaluate(preds: &[Prediction], gold: &[GoldAction]) -> Result<MetricsReport, EvalError> {
    let mut recall = BTreeMap::new();
    for thr in RECALL_THRESHOLDS {
        recall.insert(format!("{thr}"), recall_at_iou(preds, gold, thr)?);
    }
    Ok(MetricsReport {
        va: visibility_accuracy(preds, gold)?,
        recall,
        miou: mean_iou(preds, gold)?,
        n_actions: gold.len(),
        n_visible: gold.iter().filter(|g| g.visible).count(),
    })
}

/// Gold-duration range in seconds: `(lo, hi]`, or `[0, hi]` for the first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationBucket {
    pub lo: f64,
    /// `None` is unbounded above.
    pub hi: Option<f64>,
}

impl DurationBucket {
    pub fn contains(&self, secs: f64) -> bool {
        let above = if self.lo == 0.0 { secs >= 0.0 } else { secs > self.lo };
        above && self.hi.is_none_or(|hi| secs <= hi)
    }

    pub fn label(&self) -> String {
        match self.hi {
            Some(hi) => format!("{}-{} s", self.lo, hi),
            None => format!(">{} s", self.lo),
        }
    }
}

/// 0-15 s, 15-35 s, 35-60 s, and an overflow bucket above 60 s.
pub const DEFAULT_BUCKETS: [DurationBucket; 4] = [
    DurationBucket { lo: 0.0, hi: Some(15.0) },
    DurationBucket { lo: 15.0, hi: Some(35.0) },
    DurationBucket { lo: 35.0, hi: Some(60.0) },
    DurationBucket { lo: 60.0, hi: None },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub bucket: String,
    pub n: usize,
    /// `None` for an empty bucket.
    pub metrics: Option<MetricsReport>,
}

/// Metrics over gold-visible actions grouped by gold duration.
pub fn breakdown_by_duration(
    preds: &[Prediction],
    gold: &[GoldAction],
    buckets: &[DurationBucket],
) -> Result<Vec<BucketReport>, EvalError> {
    let mut out = Vec::new();
    for b in buckets {
        let members: Vec<GoldAction> = gold
            .iter()
            .filter(|g| g.interval.is_some_and(|i| b.contains(i.duration())))
            .cloned()
            .collect();
        out.push(BucketReport {
            bucket: b.label(),
            n: members.len(),
            metrics: if members.is_empty() {
                None
            } else {
                Some(evaluate(preds, &members)?)
            },
        });
    }
    Ok(out)
}

/// Accuracy, precision, recall and F1 as percentages, with short as the
/// positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn binary_metrics(pred: &[DurationClass], gold: &[DurationClass]) -> Result<BinaryMetrics, EvalError> {
    if pred.len() != gold.len() || gold.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (p, g) in pred.iter().zip(gold) {
        let (ps, gs) = (*p == DurationClass::Short, *g == DurationClass::Short);
        correct += usize::from(ps == gs);
        tp += usize::from(ps && gs);
        fp += usize::from(ps && !gs);
        fneg += usize::from(!ps && gs);
    }
    let precision = percent(tp, tp + fp);
    let recall = percent(tp, tp + fneg);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(BinaryMetrics {
        accuracy: percent(correct, gold.len()),
        precision,
        recall,
        f1,
    })
}

/// Predicts the most frequent gold class everywhere, short on a tie.
pub fn majority_baseline(gold: &[DurationClass]) -> Vec<DurationClass> {
    let short = gold.iter().filter(|&&c| c == DurationClass::Short).count();
    let class = if 2 * short >= gold.len() {
        DurationClass::Short
    } else {
        DurationClass::Long
    };
    vec![class; gold.len()]
}

/// Fixed-column table with one row per method.
pub fn format_table(rows: &[(String, MetricsReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut s = format!("{:<width$} | {:>6} | {:>6} | {:>6} | {:>6} | {:>6} | {:>6}\n", "Method", "VA", "R@0.1", "R@0.3", "R@0.5", "R@0.7", "mIoU");
    s.push_str(&format!("{}\n", "-".repeat(width + 9 * 6)));
    for (name, r) in rows {
        let _ = write!(s, "{name:<width$} | {:>6.1}", r.va);
        for thr in RECALL_THRESHOLDS {
            let _ = write!(s, " | {:>6.1}", r.recall_at(thr).unwrap_or(f64::NAN));
        }
        let _ = writeln!(s, " | {:>6.1}", r.miou);
    }
    s
}

pub fn format_breakdown(rows: &[BucketReport]) -> String {
    let mut s = format!("{:<10} | {:>5} | {:>6} | {:>6}\n", "Duration", "n", "R@0.5", "mIoU");
    for b in rows {
        match &b.metrics {
            Some(m) => {
                let _ = writeln!(s, "{:<10} | {:>5} | {:>6.1} | {:>6.1}", b.bucket, b.n, m.recall_at(0.5).unwrap_or(f64::NAN), m.miou);
            }
            None => {
                let _ = writeln!(s, "{:<10} | {:>5} | {:>6} | {:>6}", b.bucket, "n=0", "-", "-");
            }
        }
    }
    s
}
