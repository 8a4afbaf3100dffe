//! End-to-end run: load or synthesize data, split by channel, train the
//! duration classifier and span scorer, localize the test split and
//! evaluate it.

use crate::config::{Reproducibility, RouterKind, RunConfig, Split};
use crate::errors::ConfigError;
use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use twoseal_core::dataprep::{read_clips, segment_video, ClipSpec};
use twoseal_core::eval::{
    binary_metrics, breakdown_by_duration, evaluate, format_breakdown, format_table, majority_baseline,
    BinaryMetrics, BucketReport, GoldAction, MetricsReport, DEFAULT_BUCKETS,
};
use twoseal_core::features::{generate_spans, synth_generate, EmbeddingTable, Modality, SpanGrid};
use twoseal_core::localize::{
    localize_action, localize_by_alignment, train_duration_clf, write_predictions, DurationClassifier,
    DurationRouter, GoldDurationRouter, LocalizeContext, LocalizeError, Prediction, PredictionPath, RoutingMode,
    SvmTrainReport,
};
use twoseal_core::manifest::{group_by_video, read_manifest, ActionRecord, VideoActions};
use twoseal_core::scorers::{
    train_scorer, ActionExamples, ScoreError, ScorerKind, ScorerParams, SpanScorer, TextFeatures, TrainedScorer,
};
use twoseal_core::transcript::ActionMention;
use twoseal_core::{classify_duration, DurationClass};

/// Raw inputs of a run.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<ActionRecord>,
    pub text: EmbeddingTable,
    pub spans: EmbeddingTable,
    pub clips: Vec<ClipSpec>,
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    if let Some(syn) = &cfg.synthetic {
        let d = synth_generate(syn)?;
        return Ok(Dataset {
            records: d.records,
            text: d.text,
            spans: d.spans,
            clips: d.clips,
        });
    }
    let need = |p: &Option<PathBuf>, name: &str| -> Result<PathBuf> {
        p.clone().ok_or_else(|| ConfigError(format!("paths.{name} is required")).into())
    };
    let manifest = need(&cfg.paths.manifest, "manifest")?;
    let records = read_manifest(BufReader::new(
        File::open(&manifest).with_context(|| format!("opening {}", manifest.display()))?,
    ))
    .with_context(|| format!("reading {}", manifest.display()))?;
    let text_path = need(&cfg.paths.text_embeddings, "text_embeddings")?;
    let text = EmbeddingTable::load(&text_path, Modality::Text).with_context(|| format!("reading {}", text_path.display()))?;
    let span_path = need(&cfg.paths.span_embeddings, "span_embeddings")?;
    let spans =
        EmbeddingTable::load(&span_path, Modality::VideoSpan).with_context(|| format!("reading {}", span_path.display()))?;
    let clips = match &cfg.paths.clips {
        Some(p) => read_clips(BufReader::new(File::open(p)?)).with_context(|| format!("reading {}", p.display()))?,
        None => segment_records(&records, cfg.segment.max_clip_len, cfg.segment.padding)?,
    };
    Ok(Dataset {
        records,
        text,
        spans,
        clips,
    })
}

/// Clips for every video in a manifest.
pub fn segment_records(records: &[ActionRecord], max_len: f64, pad: f64) -> Result<Vec<ClipSpec>> {
    let mut clips = Vec::new();
    for (video, va) in group_by_video(records)? {
        clips.extend(segment_video(&va.transcript, &va.actions, max_len, pad).with_context(|| format!("segmenting {video}"))?);
    }
    Ok(clips)
}

/// One action with everything the localizer needs to find it.
#[derive(Debug, Clone)]
pub struct ActionItem {
    pub mention: ActionMention,
    pub video_id: String,
    pub split: Split,
    pub clip_id: Option<String>,
}

/// A dataset arranged for training and localization.
#[derive(Debug)]
pub struct Prepared {
    pub videos: BTreeMap<String, VideoActions>,
    pub items: Vec<ActionItem>,
    pub grids: BTreeMap<String, SpanGrid>,
    pub text: EmbeddingTable,
    pub spans: EmbeddingTable,
    pub split_sizes: BTreeMap<Split, usize>,
}

impl Prepared {
    pub fn split(&self, s: Split) -> impl Iterator<Item = &ActionItem> {
        self.items.iter().filter(move |i| i.split == s)
    }

    pub fn text_of(&self, id: &str) -> Option<TextFeatures> {
        self.text.get_f64(id).map(TextFeatures::pooled)
    }
}

pub fn prepare(cfg: &RunConfig, data: Dataset) -> Result<Prepared> {
    let channel_of: HashMap<&str, &str> = data.records.iter().map(|r| (r.video_id.as_str(), r.channel())).collect();
    let channels: BTreeSet<String> = channel_of.values().map(|c| c.to_string()).collect();
    let assignment = cfg.split.assign(&channels, cfg.seed)?;
    let mut split_sizes = BTreeMap::new();
    for s in assignment.values() {
        *split_sizes.entry(*s).or_insert(0) += 1;
    }

    let mut clip_of: HashMap<&str, &str> = HashMap::new();
    for c in &data.clips {
        for a in &c.action_ids {
            clip_of.insert(a, &c.clip_id);
        }
    }
    for r in &data.records {
        if let Some(c) = &r.clip_id {
            clip_of.entry(&r.action_id).or_insert(c);
        }
    }
    let grids: BTreeMap<String, SpanGrid> = data
        .clips
        .iter()
        .map(|c| (c.clip_id.clone(), generate_spans(&c.clip_id, &c.interval, cfg.spans.span_len, cfg.spans.stride)))
        .collect();

    let videos = group_by_video(&data.records)?;
    let mut items = Vec::new();
    for (video, va) in &videos {
        let split = assignment[channel_of[video.as_str()]];
        for m in &va.actions {
            items.push(ActionItem {
                mention: m.clone(),
                video_id: video.clone(),
                split,
                clip_id: clip_of.get(m.id.as_str()).map(|c| c.to_string()),
            });
        }
    }
    Ok(Prepared {
        videos,
        items,
        grids,
        text: data.text,
        spans: data.spans,
        split_sizes,
    })
}

/// Visible training-split actions with a text vector, labelled by gold duration.
fn duration_examples<'a>(
    prep: &Prepared,
    items: impl Iterator<Item = &'a ActionItem>,
    threshold: f64,
) -> (Vec<Vec<f64>>, Vec<DurationClass>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for item in items {
        if let (Some(g), Some(v)) = (item.mention.gold_interval, prep.text.get_f64(&item.mention.id)) {
            x.push(v);
            y.push(classify_duration(&g, threshold));
        }
    }
    (x, y)
}

pub fn train_duration(cfg: &RunConfig, prep: &Prepared) -> Result<(DurationClassifier, SvmTrainReport)> {
    let (x, y) = duration_examples(prep, prep.split(Split::Train), cfg.localizer.duration_threshold);
    Ok(train_duration_clf(&x, &y, &cfg.svm)?)
}

/// Held-out duration classification against a majority-class baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationReport {
    pub n: usize,
    pub classifier: BinaryMetrics,
    pub majority: BinaryMetrics,
}

pub fn evaluate_duration(cfg: &RunConfig, prep: &Prepared, clf: &DurationClassifier) -> Result<Option<DurationReport>> {
    let (x, gold) = duration_examples(prep, prep.split(Split::Test), cfg.localizer.duration_threshold);
    if gold.is_empty() {
        return Ok(None);
    }
    let pred = x.iter().map(|v| clf.predict(v)).collect::<Result<Vec<_>, _>>()?;
    Ok(Some(DurationReport {
        n: gold.len(),
        classifier: binary_metrics(&pred, &gold)?,
        majority: binary_metrics(&majority_baseline(&gold), &gold)?,
    }))
}

fn scorer_examples<'a>(
    cfg: &RunConfig,
    prep: &Prepared,
    items: impl Iterator<Item = &'a ActionItem>,
) -> Result<Vec<ActionExamples>> {
    let mut out = Vec::new();
    for item in items {
        let (Some(text), Some(grid)) = (
            prep.text.get_f64(&item.mention.id),
            item.clip_id.as_ref().and_then(|c| prep.grids.get(c)),
        ) else {
            continue;
        };
        match ActionExamples::from_grid(
            &item.mention.id,
            text,
            grid,
            item.mention.gold_interval.as_ref(),
            &prep.spans,
            cfg.train.positive_coverage,
        ) {
            Ok(ex) => out.push(ex),
            Err(ScoreError::MissingEmbedding(id)) => eprintln!("warning: {}: missing span embedding {id}", item.mention.id),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

pub fn train_mpu(cfg: &RunConfig, prep: &Prepared) -> Result<TrainedScorer> {
    let train = scorer_examples(cfg, prep, prep.split(Split::Train))?;
    let val = scorer_examples(cfg, prep, prep.split(Split::Val))?;
    Ok(train_scorer(&train, &val, &cfg.train)?)
}

/// What a run produced besides the predictions themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub reproducibility: Reproducibility,
    pub method: String,
    pub metrics: MetricsReport,
    pub breakdown: Vec<BucketReport>,
    pub duration_classifier: Option<DurationReport>,
    pub scorer_best_epoch: Option<usize>,
    /// Test actions predicted not visible because an embedding was missing.
    pub missing_embeddings: usize,
    /// Channel counts per split.
    pub split_channels: BTreeMap<Split, usize>,
}

impl RunReport {
    pub fn text(&self) -> String {
        let mut s = format_table(&[(self.method.clone(), self.metrics.clone())]);
        s.push('\n');
        s.push_str(&format_breakdown(&self.breakdown));
        if let Some(d) = &self.duration_classifier {
            s.push_str(&format!(
                "\nDuration classifier (n={}): A {:.1} P {:.1} R {:.1} F1 {:.1} | majority: A {:.1} P {:.1} R {:.1} F1 {:.1}\n",
                d.n,
                d.classifier.accuracy,
                d.classifier.precision,
                d.classifier.recall,
                d.classifier.f1,
                d.majority.accuracy,
                d.majority.precision,
                d.majority.recall,
                d.majority.f1
            ));
        }
        let r = &self.reproducibility;
        s.push_str(&format!("\nconfig sha256 {} | seed {} | version {}\n", r.config_sha256, r.seed, r.version));
        s
    }
}

pub fn method_name(cfg: &RunConfig) -> String {
    let scorer = match cfg.scorer {
        ScorerKind::Mpu => "MPU",
        ScorerKind::Dot => "Dot",
        ScorerKind::Sca => "SCA",
    };
    match cfg.path {
        RoutingMode::TwoSeal => format!("2SEAL+{scorer}"),
        RoutingMode::AlignOnly => "Transcript Alignment".to_string(),
        RoutingMode::MultimodalOnly => scorer.to_string(),
    }
}

/// Trained or loaded models for a run.
pub struct Models {
    pub classifier: Option<DurationClassifier>,
    pub scorer: SpanScorer,
    pub trained_scorer: Option<TrainedScorer>,
}

pub fn build_models(cfg: &RunConfig, prep: &Prepared) -> Result<Models> {
    let classifier = if cfg.path == RoutingMode::TwoSeal && cfg.router == RouterKind::Svm {
        Some(match &cfg.paths.duration_checkpoint {
            Some(p) => DurationClassifier::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => train_duration(cfg, prep).context("stage train-duration")?.0,
        })
    } else {
        None
    };
    let needs_scorer = cfg.path != RoutingMode::AlignOnly;
    let (scorer, trained_scorer) = match cfg.scorer {
        ScorerKind::Mpu if needs_scorer => match &cfg.paths.scorer_checkpoint {
            Some(p) => (
                SpanScorer::Mpu(ScorerParams::load(p).with_context(|| format!("loading {}", p.display()))?),
                None,
            ),
            None => {
                let t = train_mpu(cfg, prep).context("stage train-scorer")?;
                (SpanScorer::Mpu(t.params.clone()), Some(t))
            }
        },
        ScorerKind::Mpu => (SpanScorer::Dot { projection: None }, None),
        ScorerKind::Dot => {
            if needs_scorer && prep.text.dim() != prep.spans.dim() {
                return Err(ConfigError(format!(
                    "the dot scorer needs equal text and span dimensions, got {} and {}",
                    prep.text.dim(),
                    prep.spans.dim()
                ))
                .into());
            }
            (SpanScorer::Dot { projection: None }, None)
        }
        ScorerKind::Sca => (
            SpanScorer::Sca {
                temperature: cfg.sca_temperature,
            },
            None,
        ),
    };
    Ok(Models {
        classifier,
        scorer,
        trained_scorer,
    })
}

/// Localizes every test-split action, in manifest order. Returns the
/// predictions and the number of actions dropped for missing embeddings.
pub fn localize_test(cfg: &RunConfig, prep: &Prepared, models: &Models) -> Result<(Vec<Prediction>, usize)> {
    let gold_router = GoldDurationRouter {
        threshold: cfg.localizer.duration_threshold,
    };
    let router: &(dyn DurationRouter + Sync) = match &models.classifier {
        Some(c) => c,
        None => &gold_router,
    };
    let ctx = LocalizeContext {
        spans: &prep.spans,
        scorer: &models.scorer,
        cfg: &cfg.localizer,
    };
    let test: Vec<&ActionItem> = prep.split(Split::Test).collect();
    let results: Vec<(Prediction, Option<String>)> = test
        .par_iter()
        .map(|item| localize_one(cfg, prep, ctx, router, item))
        .collect::<Result<_>>()?;
    let mut missing = 0;
    let mut preds = Vec::with_capacity(results.len());
    for (p, warning) in results {
        if let Some(w) = warning {
            eprintln!("warning: {w}");
            missing += 1;
        }
        preds.push(p);
    }
    Ok((preds, missing))
}

fn localize_one(
    cfg: &RunConfig,
    prep: &Prepared,
    ctx: LocalizeContext<'_>,
    router: &dyn DurationRouter,
    item: &ActionItem,
) -> Result<(Prediction, Option<String>)> {
    let id = &item.mention.id;
    let transcript = &prep.videos[&item.video_id].transcript;
    let dropped = |why: String| Ok((Prediction::not_visible(id.clone(), PredictionPath::Multimodal), Some(why)));
    if cfg.path == RoutingMode::AlignOnly {
        return Ok((localize_by_alignment(&item.mention, transcript)?, None));
    }
    let Some(text) = prep.text_of(id) else {
        return dropped(format!("{id}: missing text embedding; predicted not visible"));
    };
    let Some(grid) = item.clip_id.as_ref().and_then(|c| prep.grids.get(c)) else {
        return dropped(format!("{id}: no clip; predicted not visible"));
    };
    match localize_action(ctx, cfg.path, router, &item.mention, transcript, &text, grid) {
        Ok(p) => Ok((p, None)),
        Err(LocalizeError::MissingEmbedding(span)) => {
            dropped(format!("{id}: missing span embedding {span}; predicted not visible"))
        }
        Err(e) => Err(anyhow::Error::new(e).context(format!("localizing {id}"))),
    }
}

pub fn test_gold(prep: &Prepared) -> Vec<GoldAction> {
    prep.split(Split::Test)
        .map(|i| GoldAction {
            action_id: i.mention.id.clone(),
            visible: i.mention.gold_interval.is_some(),
            interval: i.mention.gold_interval,
        })
        .collect()
}

/// Everything a pipeline run produced.
pub struct PipelineOutput {
    pub predictions: Vec<Prediction>,
    pub gold: Vec<GoldAction>,
    pub report: RunReport,
    pub models: Models,
}

/// Runs the whole pipeline in memory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput> {
    let data = load_dataset(cfg).context("stage load")?;
    let prep = prepare(cfg, data).context("stage split")?;
    let models = build_models(cfg, &prep)?;
    let (predictions, missing) = localize_test(cfg, &prep, &models).context("stage localize")?;
    let gold = test_gold(&prep);
    let metrics = evaluate(&predictions, &gold).context("stage evaluate")?;
    let breakdown = breakdown_by_duration(&predictions, &gold, &DEFAULT_BUCKETS).context("stage evaluate")?;
    let duration_classifier = match &models.classifier {
        Some(c) => evaluate_duration(cfg, &prep, c).context("stage evaluate")?,
        None => None,
    };
    let report = RunReport {
        reproducibility: Reproducibility::of(cfg),
        method: method_name(cfg),
        metrics,
        breakdown,
        duration_classifier,
        scorer_best_epoch: models.trained_scorer.as_ref().map(|t| t.best_epoch),
        missing_embeddings: missing,
        split_channels: prep.split_sizes.clone(),
    };
    Ok(PipelineOutput {
        predictions,
        gold,
        report,
        models,
    })
}

/// Writes predictions, the report pair, and any trained models to `dir`.
pub fn write_outputs(dir: &Path, out: &PipelineOutput) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut w = BufWriter::new(File::create(dir.join("predictions.jsonl"))?);
    write_predictions(&mut w, &out.predictions)?;
    w.flush()?;
    std::fs::write(dir.join("report.txt"), out.report.text())?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&out.report)? + "\n")?;
    if let Some(c) = &out.models.classifier {
        c.save(&dir.join("duration.svm"))?;
    }
    if let Some(t) = &out.models.trained_scorer {
        t.params.save(&dir.join("scorer.scr"))?;
        std::fs::write(dir.join("scorer_log.tsv"), t.log_text())?;
    }
    Ok(())
}
