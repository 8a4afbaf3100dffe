//! Duration-routed localization: short actions take their utterance
//! interval, long actions go through span scoring, proposal merging and
//! NMS.

mod proposals;
mod svm;

pub use proposals::{build_proposals, nms, Proposal};
pub use svm::{rbf, scale_gamma, train_duration_clf, DurationClassifier, SvmConfig, SvmTrainReport};

use crate::features::{EmbeddingTable, SpanGrid};
use crate::interval::{classify_duration, DurationClass, TimeInterval};
use crate::scorers::{ScoreError, SpanScorer, TextFeatures};
use crate::transcript::{align_action_to_utterance, ActionMention, Transcript, TranscriptError};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, thiserror::Error)]
pub enum LocalizeError {
    #[error("duration classifier needs examples of both classes")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{scores} scores for a grid of {spans} spans")]
    ScoreCountMismatch { spans: usize, scores: usize },
    #[error("missing embedding {0:?}")]
    MissingEmbedding(String),
    #[error("bad classifier checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("invalid localizer config: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizerConfig {
    /// Seconds; gold durations at or below this are short.
    pub duration_threshold: f64,
    /// Spans must score strictly above this to join a proposal.
    pub span_score_threshold: f64,
    pub merge_gap: f64,
    /// 1.0 keeps every proposal and reduces NMS to taking the top score.
    pub nms_iou: f64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            duration_threshold: 15.0,
            span_score_threshold: 0.5,
            merge_gap: 3.0,
            nms_iou: 0.5,
        }
    }
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<(), LocalizeError> {
        let bad = |m: &str| Err(LocalizeError::InvalidConfig(m.to_string()));
        if !(self.duration_threshold > 0.0) {
            return bad("duration_threshold must be positive");
        }
        if !(self.span_score_threshold > 0.0) {
            return bad("span_score_threshold must be positive");
        }
        if !(self.merge_gap > 0.0) {
            return bad("merge_gap must be positive");
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return bad("nms_iou must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionPath {
    Align,
    Multimodal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub action_id: String,
    pub visible: bool,
    /// Present exactly when `visible`.
    pub interval: Option<TimeInterval>,
    pub score: Option<f64>,
    pub path: PredictionPath,
}

impl Prediction {
    pub fn not_visible(action_id: impl Into<String>, path: PredictionPath) -> Self {
        Self {
            action_id: action_id.into(),
            visible: false,
            interval: None,
            score: None,
            path,
        }
    }
}

/// Which localization path runs for each action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RoutingMode {
    #[default]
    #[serde(rename = "2seal")]
    TwoSeal,
    #[serde(rename = "align-only")]
    AlignOnly,
    #[serde(rename = "multimodal-only")]
    MultimodalOnly,
}

impl std::str::FromStr for RoutingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "2seal" => Ok(Self::TwoSeal),
            "align-only" => Ok(Self::AlignOnly),
            "multimodal-only" => Ok(Self::MultimodalOnly),
            other => Err(format!("unknown path {other:?}")),
        }
    }
}

impl std::fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TwoSeal => "2seal",
            Self::AlignOnly => "align-only",
            Self::MultimodalOnly => "multimodal-only",
        })
    }
}

/// Decides whether an action is short or long.
pub trait DurationRouter {
    fn route(&self, action: &ActionMention, text: &TextFeatures) -> Result<DurationClass, LocalizeError>;
}

impl DurationRouter for DurationClassifier {
    fn route(&self, _action: &ActionMention, text: &TextFeatures) -> Result<DurationClass, LocalizeError> {
        self.predict(&text.pooled)
    }
}

/// Routes by the gold interval. Actions without one are sent down the
/// multimodal path, which may still call them not visible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldDurationRouter {
    pub threshold: f64,
}

impl DurationRouter for GoldDurationRouter {
    fn route(&self, action: &ActionMention, _text: &TextFeatures) -> Result<DurationClass, LocalizeError> {
        Ok(action
            .gold_interval
            .map_or(DurationClass::Long, |g| classify_duration(&g, self.threshold)))
    }
}

/// Read-only inputs shared by every action in a run.
#[derive(Debug, Clone, Copy)]
pub struct LocalizeContext<'a> {
    pub spans: &'a EmbeddingTable,
    pub scorer: &'a SpanScorer,
    pub cfg: &'a LocalizerConfig,
}

/// Scores for every span of `grid`, min-max rescaled within the clip for
/// the similarity scorers. A constant score vector rescales to all zeros.
pub fn score_grid(ctx: LocalizeContext<'_>, text: &TextFeatures, grid: &SpanGrid) -> Result<Vec<f64>, LocalizeError> {
    let mut scores = Vec::with_capacity(grid.len());
    for id in grid.span_ids() {
        let v = ctx.spans.get_f64(&id).ok_or(LocalizeError::MissingEmbedding(id))?;
        scores.push(ctx.scorer.score(text, &v)?);
    }
    if ctx.scorer.rescales_per_clip() {
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        for s in &mut scores {
            *s = if range > 0.0 { (*s - lo) / range } else { 0.0 };
        }
    }
    Ok(scores)
}

pub fn localize_multimodal(
    ctx: LocalizeContext<'_>,
    action_id: &str,
    text: &TextFeatures,
    grid: &SpanGrid,
) -> Result<Prediction, LocalizeError> {
    let scores = score_grid(ctx, text, grid)?;
    let props = build_proposals(grid, &scores, ctx.cfg.span_score_threshold, ctx.cfg.merge_gap)?;
    Ok(match nms(props, ctx.cfg.nms_iou).into_iter().next() {
        Some(top) => Prediction {
            action_id: action_id.to_string(),
            visible: true,
            interval: Some(top.interval),
            score: Some(top.score),
            path: PredictionPath::Multimodal,
        },
        None => Prediction::not_visible(action_id, PredictionPath::Multimodal),
    })
}

/// The utterance interval, always visible.
pub fn localize_by_alignment(action: &ActionMention, transcript: &Transcript) -> Result<Prediction, LocalizeError> {
    Ok(Prediction {
        action_id: action.id.clone(),
        visible: true,
        interval: Some(align_action_to_utterance(action, transcript)?),
        score: None,
        path: PredictionPath::Align,
    })
}

pub fn two_seal(
    ctx: LocalizeContext<'_>,
    router: &dyn DurationRouter,
    action: &ActionMention,
    transcript: &Transcript,
    text: &TextFeatures,
    grid: &SpanGrid,
) -> Result<Prediction, LocalizeError> {
    match router.route(action, text)? {
        DurationClass::Short => localize_by_alignment(action, transcript),
        DurationClass::Long => localize_multimodal(ctx, &action.id, text, grid),
    }
}

/// Runs the path selected by `mode`. The router is only consulted in
/// [`RoutingMode::TwoSeal`].
pub fn localize_action(
    ctx: LocalizeContext<'_>,
    mode: RoutingMode,
    router: &dyn DurationRouter,
    action: &ActionMention,
    transcript: &Transcript,
    text: &TextFeatures,
    grid: &SpanGrid,
) -> Result<Prediction, LocalizeError> {
    match mode {
        RoutingMode::TwoSeal => two_seal(ctx, router, action, transcript, text, grid),
        RoutingMode::AlignOnly => localize_by_alignment(action, transcript),
        RoutingMode::MultimodalOnly => localize_multimodal(ctx, &action.id, text, grid),
    }
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub action_id: String,
    pub visible: bool,
    pub start_ms: Option<u64>,
    pub end_ms: Option<u64>,
    pub score: Option<f64>,
    pub path: PredictionPath,
}

impl From<&Prediction> for PredictionRecord {
    fn from(p: &Prediction) -> Self {
        Self {
            action_id: p.action_id.clone(),
            visible: p.visible,
            start_ms: p.interval.map(|i| i.start_ms()),
            end_ms: p.interval.map(|i| i.end_ms()),
            score: p.score,
            path: p.path,
        }
    }
}

impl PredictionRecord {
    pub fn to_prediction(&self) -> Result<Prediction, String> {
        let interval = match (self.visible, self.start_ms, self.end_ms) {
            (true, Some(s), Some(e)) => Some(TimeInterval::from_ms(s, e).map_err(|e| e.to_string())?),
            (false, None, None) => None,
            _ => return Err(format!("{}: visibility and interval disagree", self.action_id)),
        };
        Ok(Prediction {
            action_id: self.action_id.clone(),
            visible: self.visible,
            interval,
            score: self.score,
            path: self.path,
        })
    }
}

pub fn write_predictions(mut w: impl Write, preds: &[Prediction]) -> Result<(), LocalizeError> {
    for p in preds {
        let line = serde_json::to_string(&PredictionRecord::from(p)).expect("plain record serializes");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_predictions(r: impl BufRead) -> Result<Vec<Prediction>, LocalizeError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord =
            serde_json::from_str(&line).map_err(|source| LocalizeError::Json { line: i + 1, source })?;
        out.push(rec.to_prediction().map_err(|m| LocalizeError::Json {
            line: i + 1,
            source: serde::de::Error::custom(m),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{generate_spans, Modality};
    use crate::transcript::SubtitleCue;

    fn iv(a: f64, b: f64) -> TimeInterval {
        TimeInterval::new(a, b).unwrap()
    }

    /// A 20 s clip with 2-d span vectors: +e1 inside `gold`, -e1 elsewhere.
    fn fixture(gold: TimeInterval) -> (SpanGrid, EmbeddingTable) {
        let grid = generate_spans("v_c0", &iv(0.0, 20.0), 3.0, 1.0);
        let mut table = EmbeddingTable::new(Modality::VideoSpan, 2);
        for (i, s) in grid.spans.iter().enumerate() {
            let x = if s.coverage_by(&gold) >= 0.5 { 1.0 } else { -1.0 };
            table.insert(grid.span_id(i), &[x, 0.0]).unwrap();
        }
        (grid, table)
    }

    fn action(gold: Option<TimeInterval>) -> (ActionMention, Transcript) {
        let t = Transcript::new(
            "v",
            20.0,
            vec![SubtitleCue {
                index: 0,
                interval: iv(1.0, 3.5),
                text: "pour the water".into(),
            }],
        );
        let a = ActionMention {
            id: "v_a0".into(),
            text: "pour the water".into(),
            cue_index: 0,
            gold_visible: Some(gold.is_some()),
            gold_interval: gold,
        };
        (a, t)
    }

    #[test]
    fn dot_scorer_recovers_planted_interval() {
        let gold = iv(6.0, 14.0);
        let (grid, table) = fixture(gold);
        let scorer = SpanScorer::Dot { projection: None };
        let cfg = LocalizerConfig::default();
        let ctx = LocalizeContext {
            spans: &table,
            scorer: &scorer,
            cfg: &cfg,
        };
        let p = localize_multimodal(ctx, "a", &TextFeatures::pooled(vec![1.0, 0.0]), &grid).unwrap();
        assert!(p.visible);
        let got = p.interval.unwrap();
        assert!(crate::iou(&got, &gold) >= 0.5, "{got:?}");
        assert_eq!(p.score, Some(1.0));
    }

    #[test]
    fn all_below_threshold_is_not_visible() {
        let (grid, table) = fixture(iv(6.0, 14.0));
        let scorer = SpanScorer::Mpu(crate::scorers::ScorerParams::zeros(
            crate::scorers::MpuDims {
                text_dim: 2,
                video_dim: 2,
                hidden: 4,
            },
            Default::default(),
        ));
        let cfg = LocalizerConfig::default();
        let ctx = LocalizeContext {
            spans: &table,
            scorer: &scorer,
            cfg: &cfg,
        };
        // Zero parameters score every span exactly 0.5, not above it.
        let p = localize_multimodal(ctx, "a", &TextFeatures::pooled(vec![1.0, 0.0]), &grid).unwrap();
        assert_eq!(p, Prediction::not_visible("a", PredictionPath::Multimodal));
    }

    #[test]
    fn single_span_above_threshold() {
        let grid = generate_spans("v_c0", &iv(0.0, 10.0), 3.0, 1.0);
        let mut table = EmbeddingTable::new(Modality::VideoSpan, 1);
        for i in 0..grid.len() {
            table.insert(grid.span_id(i), &[if i == 4 { 1.0 } else { 0.0 }]).unwrap();
        }
        let scorer = SpanScorer::Dot { projection: None };
        let cfg = LocalizerConfig::default();
        let ctx = LocalizeContext {
            spans: &table,
            scorer: &scorer,
            cfg: &cfg,
        };
        let p = localize_multimodal(ctx, "a", &TextFeatures::pooled(vec![1.0]), &grid).unwrap();
        assert_eq!(p.interval, Some(grid.spans[4]));
    }

    #[test]
    fn missing_span_embedding() {
        let grid = generate_spans("v_c0", &iv(0.0, 5.0), 3.0, 1.0);
        let table = EmbeddingTable::new(Modality::VideoSpan, 1);
        let scorer = SpanScorer::Dot { projection: None };
        let cfg = LocalizerConfig::default();
        let ctx = LocalizeContext {
            spans: &table,
            scorer: &scorer,
            cfg: &cfg,
        };
        assert!(matches!(
            localize_multimodal(ctx, "a", &TextFeatures::pooled(vec![1.0]), &grid),
            Err(LocalizeError::MissingEmbedding(id)) if id == "v_c0#0"
        ));
    }

    #[test]
    fn routing_matches_branches_exactly() {
        let (grid, table) = fixture(iv(6.0, 14.0));
        let scorer = SpanScorer::Dot { projection: None };
        let cfg = LocalizerConfig::default();
        let ctx = LocalizeContext {
            spans: &table,
            scorer: &scorer,
            cfg: &cfg,
        };
        let text = TextFeatures::pooled(vec![1.0, 0.0]);
        let router = GoldDurationRouter { threshold: 15.0 };

        let (short, t) = action(Some(iv(1.0, 4.0)));
        let routed = two_seal(ctx, &router, &short, &t, &text, &grid).unwrap();
        assert_eq!(routed, localize_by_alignment(&short, &t).unwrap());
        assert_eq!(routed.interval, Some(iv(1.0, 3.5)));

        let (long, t) = action(Some(iv(0.0, 18.0)));
        let routed = two_seal(ctx, &router, &long, &t, &text, &grid).unwrap();
        assert_eq!(routed, localize_multimodal(ctx, &long.id, &text, &grid).unwrap());

        let (hidden, t) = action(None);
        let p = localize_action(ctx, RoutingMode::AlignOnly, &router, &hidden, &t, &text, &grid).unwrap();
        assert_eq!(p.path, PredictionPath::Align);
    }

    #[test]
    fn predictions_round_trip() {
        let preds = vec![
            Prediction {
                action_id: "a".into(),
                visible: true,
                interval: Some(iv(1.5, 4.25)),
                score: Some(0.75),
                path: PredictionPath::Multimodal,
            },
            Prediction::not_visible("b", PredictionPath::Multimodal),
        ];
        let mut buf = Vec::new();
        write_predictions(&mut buf, &preds).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            r#"{"action_id":"a","visible":true,"start_ms":1500,"end_ms":4250,"score":0.75,"path":"multimodal"}"#
        ));
        assert_eq!(read_predictions(buf.as_slice()).unwrap(), preds);
        assert!(read_predictions(&br#"{"action_id":"x","visible":true,"start_ms":null,"end_ms":null,"score":null,"path":"align"}"#[..]).is_err());
    }

    #[test]
    fn config_validation_and_modes() {
        assert!(LocalizerConfig::default().validate().is_ok());
        let cfg = LocalizerConfig {
            nms_iou: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        for m in ["2seal", "align-only", "multimodal-only"] {
            assert_eq!(m.parse::<RoutingMode>().unwrap().to_string(), m);
        }
    }
}
