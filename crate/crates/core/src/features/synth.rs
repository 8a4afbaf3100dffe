//! Planted-signal datasets for exercising the pipeline without real video.
//!
//! Each synthetic video holds one clip with one narrated action. Visible
//! actions get a gold interval; span embeddings overlapping it (by the
//! positive-span rule) carry `signal_gain * M t` plus Gaussian noise, where
//! `M` is one random linear map per dataset. All other spans are noise.
//! Short actions are narrated in sync with their gold interval; long ones
//! are narrated by a brief utterance that drifts from the action start.

use super::embeddings::{EmbeddingTable, Modality};
use super::spans::{generate_spans, is_positive_span};
use crate::dataprep::ClipSpec;
use crate::interval::TimeInterval;
use crate::manifest::ActionRecord;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_clips: usize,
    /// Seconds.
    pub clip_len: f64,
    pub text_dim: usize,
    pub video_dim: usize,
    pub signal_gain: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Fraction of actions with no gold interval and no correlated spans.
    pub nonvisible_fraction: f64,
    /// Fraction of visible actions longer than the duration threshold.
    pub long_fraction: f64,
    pub duration_threshold: f64,
    /// Shortest short action, seconds.
    pub min_short: f64,
    /// Longest long action, seconds (capped at `clip_len`).
    pub max_long: f64,
    /// Max offset, seconds, of a short action's cue edges from its gold edges.
    pub cue_jitter: f64,
    /// Max delay, seconds, of a long action's utterance after the action start.
    pub long_drift: f64,
    /// Strength of the short/long direction planted in text vectors.
    pub duration_gain: f64,
    pub n_channels: usize,
    pub span_len: f64,
    pub span_stride: f64,
    pub positive_coverage: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_clips: 200,
            clip_len: 90.0,
            text_dim: 32,
            video_dim: 32,
            signal_gain: 1.0,
            noise_sigma: 0.1,
            seed: 0,
            nonvisible_fraction: 0.25,
            long_fraction: 0.5,
            duration_threshold: 15.0,
            min_short: 5.0,
            max_long: 60.0,
            cue_jitter: 0.5,
            long_drift: 10.0,
            duration_gain: 2.0,
            n_channels: 20,
            span_len: super::DEFAULT_SPAN_LEN,
            span_stride: super::DEFAULT_SPAN_STRIDE,
            positive_coverage: super::DEFAULT_POSITIVE_COVERAGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.text_dim == 0 || self.video_dim == 0 {
            return bad("dimensions must be positive");
        }
        if !(self.noise_sigma >= 0.0) || !self.signal_gain.is_finite() {
            return bad("noise_sigma must be >= 0 and signal_gain finite");
        }
        if !(0.0..=1.0).contains(&self.nonvisible_fraction) || !(0.0..=1.0).contains(&self.long_fraction) {
            return bad("fractions must lie in [0, 1]");
        }
        if !(self.min_short > 0.0 && self.min_short <= self.duration_threshold) {
            return bad("min_short must lie in (0, duration_threshold]");
        }
        if self.clip_len <= self.duration_threshold + 1.0 || self.max_long <= self.duration_threshold {
            return bad("clip_len and max_long must exceed the duration threshold");
        }
        if self.n_channels == 0 {
            return bad("n_channels must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub records: Vec<ActionRecord>,
    pub clips: Vec<ClipSpec>,
    pub text: EmbeddingTable,
    pub spans: EmbeddingTable,
    /// The planted map, `video_dim x text_dim` row-major.
    pub projection: Vec<f64>,
}

fn uniform_ms(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> u64 {
    let (lo, hi) = ((lo * 1000.0).round() as u64, (hi * 1000.0).round() as u64);
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Projects `t` through the row-major `rows x cols` matrix `m`.
pub fn project(m: &[f64], t: &[f64]) -> Vec<f64> {
    m.chunks_exact(t.len())
        .map(|row| row.iter().zip(t).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn synth_generate(cfg: &SyntheticConfig) -> Result<SyntheticDataset, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = 1.0 / (cfg.text_dim as f64).sqrt();
    let projection: Vec<f64> = gaussian_vec(&mut rng, cfg.video_dim * cfg.text_dim)
        .into_iter()
        .map(|x| x * scale)
        .collect();
    let mut duration_dir = gaussian_vec(&mut rng, cfg.text_dim);
    let norm = duration_dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    duration_dir.iter_mut().for_each(|x| *x /= norm);
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");

    let clip_ms = (cfg.clip_len * 1000.0).round() as u64;
    let clip_len = clip_ms as f64 / 1000.0;
    let mut records = Vec::with_capacity(cfg.n_clips);
    let mut clips = Vec::with_capacity(cfg.n_clips);
    let mut text = EmbeddingTable::new(Modality::Text, cfg.text_dim);
    let mut spans = EmbeddingTable::new(Modality::VideoSpan, cfg.video_dim);

    for k in 0..cfg.n_clips {
        let video_id = format!("vid{k:04}");
        let clip_id = format!("{video_id}_c0");
        let action_id = format!("{video_id}_a0");
        let visible = rng.random::<f64>() >= cfg.nonvisible_fraction;
        let long = rng.random::<f64>() < cfg.long_fraction;

        let (gold, cue) = if visible {
            let dur_ms = if long {
                uniform_ms(&mut rng, cfg.duration_threshold + 0.001, cfg.max_long.min(clip_len))
            } else {
                uniform_ms(&mut rng, cfg.min_short, cfg.duration_threshold)
            };
            let start = rng.random_range(0..=clip_ms - dur_ms);
            let gold = (start, start + dur_ms);
            let cue = if long {
                let delay = uniform_ms(&mut rng, 0.0, cfg.long_drift);
                let len = uniform_ms(&mut rng, 2.0, 5.0);
                let s = (start + delay).min(clip_ms - len);
                (s, s + len)
            } else {
                let j = (cfg.cue_jitter * 1000.0).round() as i64;
                let mut jitter = || if j == 0 { 0 } else { rng.random_range(-j..=j) };
                let s = (start as i64 + jitter()).clamp(0, clip_ms as i64) as u64;
                let e = ((start + dur_ms) as i64 + jitter()).clamp(s as i64, clip_ms as i64) as u64;
                (s, e)
            };
            (Some(gold), cue)
        } else {
            let len = uniform_ms(&mut rng, 2.0, 5.0);
            let s = rng.random_range(0..=clip_ms - len);
            (None, (s, s + len))
        };

        let sign = if long { -1.0 } else { 1.0 };
        let t: Vec<f32> = gaussian_vec(&mut rng, cfg.text_dim)
            .iter()
            .zip(&duration_dir)
            .map(|(x, d)| (x + sign * cfg.duration_gain * d) as f32)
            .collect();
        text.insert(action_id.clone(), &t).expect("fresh id, finite");
        let t64: Vec<f64> = t.iter().map(|&x| x as f64).collect();
        let signal = project(&projection, &t64);

        let clip_interval = TimeInterval::from_ms(0, clip_ms).expect("ordered");
        let gold_interval = gold.map(|(s, e)| TimeInterval::from_ms(s, e).expect("ordered"));
        let grid = generate_spans(&clip_id, &clip_interval, cfg.span_len, cfg.span_stride);
        for (i, span) in grid.spans.iter().enumerate() {
            let planted = gold_interval.is_some_and(|g| is_positive_span(span, &g, cfg.positive_coverage));
            let v: Vec<f32> = (0..cfg.video_dim)
                .map(|d| {
                    let base = if planted { cfg.signal_gain * signal[d] } else { 0.0 };
                    let n = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    (base + n) as f32
                })
                .collect();
            spans.insert(grid.span_id(i), &v).expect("fresh id, finite");
        }

        records.push(ActionRecord {
            action_id: action_id.clone(),
            video_id: video_id.clone(),
            clip_id: Some(clip_id.clone()),
            text: format!("synthetic {} action {k}", if long { "long" } else { "short" }),
            cue_start_ms: cue.0,
            cue_end_ms: cue.1,
            gold_visible: Some(visible),
            gold_start_ms: gold.map(|g| g.0),
            gold_end_ms: gold.map(|g| g.1),
            channel_id: Some(format!("ch{:03}", k % cfg.n_channels)),
            video_duration_ms: Some(clip_ms),
        });
        clips.push(ClipSpec {
            clip_id,
            video_id,
            interval: clip_interval,
            action_ids: vec![action_id],
        });
    }

    Ok(SyntheticDataset {
        records,
        clips,
        text,
        spans,
        projection,
    })
}
