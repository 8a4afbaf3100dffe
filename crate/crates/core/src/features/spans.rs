use crate::interval::{secs_to_ms, TimeInterval};

pub const DEFAULT_SPAN_LEN: f64 = 3.0;
pub const DEFAULT_SPAN_STRIDE: f64 = 1.0;

/// Fixed-length overlapping spans over one clip, sorted by start.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanGrid {
    pub clip_id: String,
    pub spans: Vec<TimeInterval>,
    pub span_len: f64,
    pub stride: f64,
}

impl SpanGrid {
    /// `<clip_id>#<start_ms>`, the key used in span embedding tables.
    pub fn span_id(&self, i: usize) -> String {
        span_id(&self.clip_id, &self.spans[i])
    }

    pub fn span_ids(&self) -> Vec<String> {
        (0..self.spans.len()).map(|i| self.span_id(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

pub fn span_id(clip_id: &str, span: &TimeInterval) -> String {
    format!("{clip_id}#{}", span.start_ms())
}

/// Minimum fraction of a span lying inside the gold interval for the span
/// to count as a positive for that action.
pub const DEFAULT_POSITIVE_COVERAGE: f64 = 0.5;

/// Span-level label: the span is positive when at least `min_coverage` of
/// it lies inside `gold`.
pub fn is_positive_span(span: &TimeInterval, gold: &TimeInterval, min_coverage: f64) -> bool {
    span.coverage_by(gold) >= min_coverage
}

/// Spans of `span_len` seconds every `stride` seconds from the clip start,
/// keeping each span inside the clip. A clip shorter than `span_len` gets
/// a single span equal to the clip. Arithmetic runs on the millisecond grid.
pub fn generate_spans(clip_id: &str, clip: &TimeInterval, span_len: f64, stride: f64) -> SpanGrid {
    let (start, end) = (clip.start_ms(), clip.end_ms());
    let (len_ms, stride_ms) = (secs_to_ms(span_len).max(1), secs_to_ms(stride).max(1));
    let mut spans = Vec::new();
    if end - start < len_ms {
        spans.push(*clip);
    } else {
        let mut s = start;
        while s + len_ms <= end {
            spans.push(TimeInterval::from_ms(s, s + len_ms).expect("ordered"));
            s += stride_ms;
        }
    }
    SpanGrid {
        clip_id: clip_id.to_string(),
        spans,
        span_len,
        stride,
    }
}
