//! Inter-annotator agreement: Fleiss' kappa for categorical labels and
//! Krippendorff's alpha with the interval metric for time offsets.

use super::EvalError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Fleiss' kappa over an item × category count matrix. Every row must sum
/// to the same rater count `n >= 2`.
pub fn fleiss_kappa(counts: &[Vec<usize>]) -> Result<f64, EvalError> {
    let first = counts.first().ok_or(EvalError::EmptyInput)?;
    let n: usize = first.iter().sum();
    let k = first.len();
    for (row, c) in counts.iter().enumerate() {
        let sum: usize = c.iter().sum();
        if c.len() != k || sum != n {
            return Err(EvalError::RaggedRow {
                row,
                sum,
                expected: n,
            });
        }
    }
    if n < 2 {
        return Err(EvalError::TooFewRaters(n));
    }
    let items = counts.len() as f64;
    let nf = n as f64;
    let p_bar = counts
        .iter()
        .map(|c| (c.iter().map(|&x| (x * x) as f64).sum::<f64>() - nf) / (nf * (nf - 1.0)))
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..k)
        .map(|j| {
            let pj = counts.iter().map(|c| c[j] as f64).sum::<f64>() / (items * nf);
            pj * pj
        })
        .sum();
    if p_e >= 1.0 {
        return Err(EvalError::DegenerateChance);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Krippendorff's alpha, interval level, over an annotator × item matrix
/// with missing entries. Only items with at least two values count.
/// Returns exactly 1.0 when all pairable values are equal.
pub fn krippendorff_alpha_interval(values: &[Vec<Option<f64>>]) -> Result<f64, EvalError> {
    let n_items = values.iter().map(Vec::len).max().unwrap_or(0);
    let units: Vec<Vec<f64>> = (0..n_items)
        .map(|u| values.iter().filter_map(|row| row.get(u).copied().flatten()).collect::<Vec<f64>>())
        .filter(|u| u.len() >= 2)
        .collect();
    if units.len() < 2 {
        return Err(EvalError::InsufficientPairs);
    }
    let n = units.iter().map(Vec::len).sum::<usize>() as f64;
    let mean = units.iter().flatten().sum::<f64>() / n;

    let mut d_o = 0.0;
    for u in &units {
        let m = u.len() as f64;
        let mut s = 0.0;
        for (i, a) in u.iter().enumerate() {
            for b in &u[i + 1..] {
                s += 2.0 * (a - b) * (a - b);
            }
        }
        d_o += s / (m - 1.0);
    }
    d_o /= n;
    // Sum over ordered pairs of (a - b)^2 equals 2n * sum of squared deviations.
    let ss: f64 = units.iter().flatten().map(|v| (v - mean) * (v - mean)).sum();
    let d_e = 2.0 * ss / (n - 1.0);
    if d_e == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - d_o / d_e)
}

/// One annotator's judgement of one action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub action_id: String,
    pub annotator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_ms: Option<u64>,
}

/// Per-video alpha over start and end offsets in seconds, each action
/// contributing a start item and an end item.
pub fn per_video_alpha(records: &[AnnotationRecord]) -> BTreeMap<String, Result<f64, EvalError>> {
    let mut by_video: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        by_video.entry(&r.video_id).or_default().push(r);
    }
    by_video
        .into_iter()
        .map(|(video, recs)| {
            let annotators: Vec<&str> = sorted_unique(recs.iter().map(|r| r.annotator.as_str()));
            let actions: Vec<&str> = sorted_unique(recs.iter().map(|r| r.action_id.as_str()));
            let mut matrix = vec![vec![None; 2 * actions.len()]; annotators.len()];
            for r in &recs {
                let row = annotators.binary_search(&r.annotator.as_str()).expect("collected");
                let col = actions.binary_search(&r.action_id.as_str()).expect("collected");
                matrix[row][col] = r.start_ms.map(crate::interval::ms_to_secs);
                matrix[row][actions.len() + col] = r.end_ms.map(crate::interval::ms_to_secs);
            }
            (video.to_string(), krippendorff_alpha_interval(&matrix))
        })
        .collect()
}

/// Item × {visible, not visible} counts over actions with a visibility
/// label, for [`fleiss_kappa`].
pub fn visibility_counts(records: &[AnnotationRecord]) -> Vec<Vec<usize>> {
    let mut by_action: BTreeMap<(&str, &str), [usize; 2]> = BTreeMap::new();
    for r in records {
        if let Some(v) = r.visible {
            by_action.entry((&r.video_id, &r.action_id)).or_default()[usize::from(!v)] += 1;
        }
    }
    by_action.into_values().map(|c| c.to_vec()).collect()
}

fn sorted_unique<'a>(it: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut v: Vec<&str> = it.collect();
    v.sort_unstable();
    v.dedup();
    v
}
