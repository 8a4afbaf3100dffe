//! Precomputed embeddings, span grids, and synthetic datasets.
//!
//! Text-embedding variants (full phrase, verb only, verb and noun only) are
//! just different tables; callers pick which file to load.

mod embeddings;
mod spans;
mod synth;

pub use embeddings::{EmbeddingError, EmbeddingTable, Modality};
pub use spans::{
    generate_spans, is_positive_span, span_id, SpanGrid, DEFAULT_POSITIVE_COVERAGE, DEFAULT_SPAN_LEN,
    DEFAULT_SPAN_STRIDE,
};
pub use synth::{project, synth_generate, SynthError, SyntheticConfig, SyntheticDataset};
