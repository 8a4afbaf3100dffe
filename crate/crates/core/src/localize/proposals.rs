//! Merging thresholded spans into proposals, and greedy 1-D NMS.

use super::LocalizeError;
use crate::features::SpanGrid;
use crate::interval::{iou, TimeInterval};

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub interval: TimeInterval,
    /// Maximum score over the member spans.
    pub score: f64,
    /// Indices into the span grid, in time order.
    pub members: Vec<usize>,
}

/// Selects spans scoring strictly above `threshold` and sweeps them in
/// time order, extending the current proposal while the gap from its end
/// to the next span's start is below `merge_gap` (overlaps give negative
/// gaps).
pub fn build_proposals(
    grid: &SpanGrid,
    scores: &[f64],
    threshold: f64,
    merge_gap: f64,
) -> Result<Vec<Proposal>, LocalizeError> {
    if scores.len() != grid.len() {
        return Err(LocalizeError::ScoreCountMismatch {
            spans: grid.len(),
            scores: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..grid.len()).filter(|&i| scores[i] > threshold).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&grid.spans[a], &grid.spans[b]);
        x.start_ms().cmp(&y.start_ms()).then(x.end_ms().cmp(&y.end_ms()))
    });
    let mut out: Vec<Proposal> = Vec::new();
    for i in order {
        let span = grid.spans[i];
        match out.last_mut() {
            Some(p) if span.start() - p.interval.end() < merge_gap => {
                p.interval = p.interval.hull(&span);
                p.score = p.score.max(scores[i]);
                p.members.push(i);
            }
            _ => out.push(Proposal {
                interval: span,
                score: scores[i],
                members: vec![i],
            }),
        }
    }
    Ok(out)
}

/// Greedy suppression of proposals overlapping a better one by IoU above
/// `nms_iou`. Output is sorted by descending score, earlier start first on
/// ties.
pub fn nms(mut proposals: Vec<Proposal>, nms_iou: f64) -> Vec<Proposal> {
    proposals.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.interval.start_ms().cmp(&b.interval.start_ms()))
    });
    let mut kept: Vec<Proposal> = Vec::new();
    for p in proposals {
        if kept.iter().all(|k| iou(&k.interval, &p.interval) <= nms_iou) {
            kept.push(p);
        }
    }
    kept
}
