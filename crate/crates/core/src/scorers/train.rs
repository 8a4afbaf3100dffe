//! Minibatch Adam training of the MPU scorer on (action, span) pairs, with
//! per-epoch negative downsampling and early stopping on validation loss.

use super::adam::{adam_step, AdamState};
use super::mpu::{bce_with_logit, MpuDims, ProjectionActivation, ScorerParams};
use super::ScoreError;
use crate::features::{is_positive_span, EmbeddingTable, SpanGrid, DEFAULT_POSITIVE_COVERAGE};
use crate::interval::TimeInterval;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Negatives sampled per positive, from the same clip.
    pub negative_ratio: f64,
    pub hidden_dim: usize,
    pub projection: ProjectionActivation,
    pub positive_coverage: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 64,
            patience_epochs: 15,
            max_epochs: 200,
            seed: 0,
            negative_ratio: 1.0,
            hidden_dim: 256,
            projection: ProjectionActivation::Tanh,
            positive_coverage: DEFAULT_POSITIVE_COVERAGE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let bad = |m: &str| Err(ScoreError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.patience_epochs == 0 || self.max_epochs == 0 || self.hidden_dim == 0 {
            return bad("batch_size, patience_epochs, max_epochs and hidden_dim must be >= 1");
        }
        if !(self.negative_ratio >= 0.0) {
            return bad("negative_ratio must be >= 0");
        }
        Ok(())
    }
}

/// Span vectors of one action's clip, split by the positive-span rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionExamples {
    pub action_id: String,
    pub text: Vec<f64>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

impl ActionExamples {
    /// Labels every span of `grid` against `gold` (all negative when the
    /// action has no gold interval).
    pub fn from_grid(
        action_id: &str,
        text: Vec<f64>,
        grid: &SpanGrid,
        gold: Option<&TimeInterval>,
        spans: &EmbeddingTable,
        min_coverage: f64,
    ) -> Result<Self, ScoreError> {
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for (i, span) in grid.spans.iter().enumerate() {
            let id = grid.span_id(i);
            let v = spans.get_f64(&id).ok_or(ScoreError::MissingEmbedding(id))?;
            if gold.is_some_and(|g| is_positive_span(span, g, min_coverage)) {
                positives.push(v);
            } else {
                negatives.push(v);
            }
        }
        Ok(Self {
            action_id: action_id.to_string(),
            text,
            positives,
            negatives,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub best: bool,
}

#[derive(Debug, Clone)]
pub struct TrainedScorer {
    pub params: ScorerParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainedScorer {
    /// Tab-separated, one line per epoch after a header.
    pub fn log_text(&self) -> String {
        let mut out = String::from("epoch\ttrain_loss\tval_loss\tval_accuracy\tbest\n");
        for e in &self.log {
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{:.4}\t{}",
                e.epoch,
                e.train_loss,
                e.val_loss,
                e.val_accuracy,
                u8::from(e.best)
            );
        }
        out
    }
}

type Pair = (usize, bool, usize);

/// All positives plus up to `ratio` negatives per positive, drawn without
/// replacement from the same clip.
fn sample_pairs(data: &[ActionExamples], ratio: f64, rng: &mut ChaCha8Rng) -> Vec<Pair> {
    let mut pairs = Vec::new();
    for (a, ex) in data.iter().enumerate() {
        if ex.positives.is_empty() {
            continue;
        }
        pairs.extend((0..ex.positives.len()).map(|i| (a, true, i)));
        let want = ((ex.positives.len() as f64 * ratio).round() as usize).min(ex.negatives.len());
        let mut picked = index::sample(rng, ex.negatives.len(), want).into_vec();
        picked.sort_unstable();
        pairs.extend(picked.into_iter().map(|i| (a, false, i)));
    }
    pairs
}

fn pair_input<'a>(data: &'a [ActionExamples], &(a, pos, i): &Pair) -> (&'a [f64], &'a [f64], f64) {
    let ex = &data[a];
    let span = if pos { &ex.positives[i] } else { &ex.negatives[i] };
    (ex.text.as_slice(), span.as_slice(), if pos { 1.0 } else { 0.0 })
}

/// Mean cross-entropy and accuracy at 0.5 over the pairs.
fn evaluate(params: &ScorerParams, data: &[ActionExamples], pairs: &[Pair]) -> Result<(f64, f64), ScoreError> {
    if pairs.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for p in pairs {
        let (t, v, y) = pair_input(data, p);
        let z = params.logit(t, v)?;
        loss += bce_with_logit(z, y);
        if (z > 0.0) == (y == 1.0) {
            correct += 1;
        }
    }
    let n = pairs.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Balanced held-out pairs with a fixed draw, and their loss and accuracy.
pub fn balanced_accuracy(
    params: &ScorerParams,
    data: &[ActionExamples],
    negative_ratio: f64,
    seed: u64,
) -> Result<(f64, f64), ScoreError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = sample_pairs(data, negative_ratio, &mut rng);
    evaluate(params, data, &pairs)
}

/// Trains an MPU scorer and returns the parameters with the lowest
/// validation loss seen. With an empty `val`, a fixed sample of the
/// training set stands in for it.
pub fn train_scorer(
    train: &[ActionExamples],
    val: &[ActionExamples],
    cfg: &TrainConfig,
) -> Result<TrainedScorer, ScoreError> {
    cfg.validate()?;
    let first = train
        .iter()
        .find(|ex| !ex.positives.is_empty())
        .ok_or(ScoreError::NoPositives)?;
    let dims = MpuDims {
        text_dim: first.text.len(),
        video_dim: first.positives[0].len(),
        hidden: cfg.hidden_dim,
    };
    let mut params = ScorerParams::init(dims, cfg.projection, cfg.seed);
    let mut adam = AdamState::new(params.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let val_data = if val.iter().any(|ex| !ex.positives.is_empty()) { val } else { train };
    let val_pairs = sample_pairs(val_data, cfg.negative_ratio, &mut val_rng);

    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut log = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let mut pairs = sample_pairs(train, cfg.negative_ratio, &mut rng);
        pairs.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in pairs.chunks(cfg.batch_size) {
            let (loss, grad) = params.loss_and_gradients(batch.iter().map(|p| pair_input(train, p)))?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ScoreError::NonFinite { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            adam_step(params.values_mut(), &grad, &mut adam, cfg.learning_rate);
        }
        let train_loss = epoch_loss / pairs.len().max(1) as f64;
        let (val_loss, val_accuracy) = evaluate(&params, val_data, &val_pairs)?;
        let improved = val_loss < best_loss;
        if improved {
            best_loss = val_loss;
            best = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            best: improved,
        });
        if since_best >= cfg.patience_epochs {
            break;
        }
    }

    Ok(TrainedScorer {
        params: best,
        log,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{generate_spans, synth_generate, SyntheticConfig};
    use crate::manifest::ActionRecord;

    fn examples(ds_cfg: &SyntheticConfig) -> Vec<ActionExamples> {
        let ds = synth_generate(ds_cfg).unwrap();
        ds.records
            .iter()
            .zip(&ds.clips)
            .map(|(r, c): (&ActionRecord, _)| {
                let grid = generate_spans(&c.clip_id, &c.interval, 3.0, 1.0);
                let gold = r.gold_interval().unwrap();
                ActionExamples::from_grid(
                    &r.action_id,
                    ds.text.get_f64(&r.action_id).unwrap(),
                    &grid,
                    gold.as_ref(),
                    &ds.spans,
                    0.5,
                )
                .unwrap()
            })
            .collect()
    }

    fn quick_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            hidden_dim: 16,
            max_epochs: 40,
            patience_epochs: 5,
            learning_rate: 0.01,
            seed,
            ..Default::default()
        }
    }

    fn data(gain: f64, seed: u64) -> (Vec<ActionExamples>, Vec<ActionExamples>) {
        let mut ex = examples(&SyntheticConfig {
            n_clips: 80,
            clip_len: 40.0,
            max_long: 30.0,
            text_dim: 8,
            video_dim: 8,
            signal_gain: gain,
            noise_sigma: 0.1,
            seed,
            ..Default::default()
        });
        let val = ex.split_off(60);
        (ex, val)
    }

    #[test]
    fn learns_planted_signal() {
        let (train, val) = data(1.0, 1);
        let trained = train_scorer(&train, &val, &quick_cfg(0)).unwrap();
        let (_, acc) = balanced_accuracy(&trained.params, &val, 1.0, 99).unwrap();
        assert!(acc >= 0.9, "held-out accuracy {acc}");
    }

    #[test]
    fn no_signal_stays_near_chance() {
        let (train, val) = data(0.0, 2);
        let trained = train_scorer(&train, &val, &quick_cfg(0)).unwrap();
        let (_, acc) = balanced_accuracy(&trained.params, &val, 1.0, 99).unwrap();
        assert!((acc - 0.5).abs() <= 0.1, "accuracy {acc}");
    }

    #[test]
    fn deterministic_and_keeps_best_checkpoint() {
        let (train, val) = data(1.0, 3);
        let cfg = TrainConfig {
            max_epochs: 12,
            ..quick_cfg(5)
        };
        let a = train_scorer(&train, &val, &cfg).unwrap();
        let b = train_scorer(&train, &val, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);

        let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
        let pairs = sample_pairs(&val, cfg.negative_ratio, &mut val_rng);
        let (returned, _) = evaluate(&a.params, &val, &pairs).unwrap();
        for e in &a.log {
            assert!(returned <= e.val_loss + 1e-12);
        }
        assert_eq!(a.log.iter().filter(|e| e.epoch == a.best_epoch).count(), 1);
        assert!(a.log_text().starts_with("epoch\ttrain_loss"));
    }

    #[test]
    fn no_positives_is_an_error() {
        let ex = ActionExamples {
            action_id: "a".into(),
            text: vec![1.0],
            positives: vec![],
            negatives: vec![vec![0.0]],
        };
        assert!(matches!(
            train_scorer(&[ex], &[], &TrainConfig::default()),
            Err(ScoreError::NoPositives)
        ));
    }

    #[test]
    fn negatives_are_balanced_per_clip() {
        let (train, _) = data(1.0, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pairs = sample_pairs(&train, 1.0, &mut rng);
        for (a, ex) in train.iter().enumerate() {
            let pos = pairs.iter().filter(|p| p.0 == a && p.1).count();
            let neg = pairs.iter().filter(|p| p.0 == a && !p.1).count();
            assert_eq!(pos, ex.positives.len());
            assert_eq!(neg, pos.min(ex.negatives.len()));
        }
    }
}
