//! Cross-modal span scorers: the trainable MPU and the frozen dot-product
//! and stacked-cross-attention similarities.

mod adam;
mod mpu;
mod similarity;
mod train;

pub use adam::{adam_step, AdamState};
pub use mpu::{bce_with_logit, sigmoid, MpuDims, ProjectionActivation, ScorerParams};
pub use similarity::{cosine, dot_score, sca_score, TextProjection, DEFAULT_SCA_TEMPERATURE};
pub use train::{balanced_accuracy, train_scorer, ActionExamples, EpochLog, TrainConfig, TrainedScorer};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("dimension mismatch: expected (text {}, video {}), got ({}, {})", expected.0, expected.1, got.0, got.1)]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("empty word or frame list")]
    EmptyInput,
    #[error("no positive spans in the training set")]
    NoPositives,
    #[error("missing embedding {0:?}")]
    MissingEmbedding(String),
    #[error("non-finite loss or gradient in epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("bad scorer checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Mpu,
    Dot,
    Sca,
}

impl std::str::FromStr for ScorerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mpu" => Ok(Self::Mpu),
            "dot" => Ok(Self::Dot),
            "sca" => Ok(Self::Sca),
            other => Err(format!("unknown scorer {other:?}")),
        }
    }
}

/// Text side of a scoring call: a pooled phrase vector and, for SCA,
/// optional per-word vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TextFeatures {
    pub pooled: Vec<f64>,
    /// Empty means "use the pooled vector as the only word".
    pub words: Vec<Vec<f64>>,
}

impl TextFeatures {
    pub fn pooled(v: Vec<f64>) -> Self {
        Self {
            pooled: v,
            words: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpanScorer {
    Mpu(ScorerParams),
    Dot { projection: Option<TextProjection> },
    Sca { temperature: f64 },
}

impl SpanScorer {
    pub fn kind(&self) -> ScorerKind {
        match self {
            Self::Mpu(_) => ScorerKind::Mpu,
            Self::Dot { .. } => ScorerKind::Dot,
            Self::Sca { .. } => ScorerKind::Sca,
        }
    }

    /// Raw similarity scores are rescaled within each clip before
    /// thresholding; MPU scores are already probabilities.
    pub fn rescales_per_clip(&self) -> bool {
        !matches!(self, Self::Mpu(_))
    }

    pub fn score(&self, text: &TextFeatures, span: &[f64]) -> Result<f64, ScoreError> {
        match self {
            Self::Mpu(p) => p.forward(&text.pooled, span),
            Self::Dot { projection: None } => dot_score(&text.pooled, span),
            Self::Dot { projection: Some(p) } => dot_score(&p.apply(&text.pooled)?, span),
            Self::Sca { temperature } => {
                let frames = [span.to_vec()];
                if text.words.is_empty() {
                    sca_score(std::slice::from_ref(&text.pooled), &frames, *temperature)
                } else {
                    sca_score(&text.words, &frames, *temperature)
                }
            }
        }
    }
}
