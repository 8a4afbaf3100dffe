//! One function per subcommand. Each returns the text it prints.

use crate::config::RunConfig;
use crate::errors::ConfigError;
use crate::pipeline::{
    build_models, evaluate_duration, load_dataset, prepare, run_pipeline, segment_records, train_duration, train_mpu,
    write_outputs, RunReport,
};
use anyhow::{bail, Context, Result};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use twoseal_core::dataprep::{motion_filter, read_clips, read_packed_frames, read_pgm_dir, write_clips, FrameSequence, MotionDecision};
use twoseal_core::eval::{
    breakdown_by_duration, evaluate, fleiss_kappa, format_breakdown, format_table, per_video_alpha, visibility_counts,
    AnnotationRecord, BucketReport, GoldAction, MetricsReport, DEFAULT_BUCKETS,
};
use twoseal_core::features::synth_generate;
use twoseal_core::localize::{read_predictions, write_predictions};
use twoseal_core::manifest::{read_manifest, write_manifest, ActionRecord};
use twoseal_core::interval::secs_to_ms;
use twoseal_core::transcript::{
    extract_candidate_actions, filter_transcripts, parse_subtitles, SubtitleFormat, Transcript,
};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

/// Parses every `.vtt`/`.srt` file in `subs`, filters by speech rate and
/// writes a manifest of candidate actions plus a rejection log.
pub fn cmd_ingest(subs: &Path, out: &Path, rejections: Option<&Path>, min_rate: f64) -> Result<String> {
    let mut files: Vec<(PathBuf, SubtitleFormat)> = std::fs::read_dir(subs)
        .with_context(|| format!("reading {}", subs.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let fmt = SubtitleFormat::from_extension(p.extension()?.to_str()?)?;
            Some((p, fmt))
        })
        .collect();
    files.sort_by(|a, b| a.0.cmp(&b.0));
    let mut transcripts = Vec::new();
    for (path, fmt) in &files {
        let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cues = parse_subtitles(&raw, *fmt).with_context(|| format!("{}", path.display()))?;
        let video_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("video").to_string();
        let duration = cues.iter().map(|c| c.interval.end()).fold(0.0, f64::max);
        transcripts.push(Transcript::new(video_id, duration, cues));
    }
    let (kept, rejected) = filter_transcripts(transcripts, min_rate);
    let rej_path = rejections.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("rejections.jsonl"));
    let mut w = create(&rej_path)?;
    for r in &rejected {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    w.flush()?;
    if kept.is_empty() {
        bail!("no transcript passed the {min_rate} words/s filter ({} rejected)", rejected.len());
    }
    let mut records = Vec::new();
    for t in &kept {
        for m in extract_candidate_actions(t, None) {
            let cue = t.cues[m.cue_index].interval;
            records.push(ActionRecord {
                action_id: m.id,
                video_id: t.video_id.clone(),
                clip_id: None,
                text: m.text,
                cue_start_ms: cue.start_ms(),
                cue_end_ms: cue.end_ms(),
                gold_visible: None,
                gold_start_ms: None,
                gold_end_ms: None,
                channel_id: None,
                video_duration_ms: Some(secs_to_ms(t.video_duration)),
            });
        }
    }
    let mut w = create(out)?;
    write_manifest(&mut w, &records)?;
    w.flush()?;
    Ok(format!(
        "{} videos kept, {} rejected, {} candidate actions -> {}\n",
        kept.len(),
        rejected.len(),
        records.len(),
        out.display()
    ))
}

pub fn cmd_segment(manifest: &Path, out: &Path, max_len: f64, pad: f64) -> Result<String> {
    let records = read_manifest(open(manifest)?)?;
    let clips = segment_records(&records, max_len, pad)?;
    let mut w = create(out)?;
    write_clips(&mut w, &clips)?;
    w.flush()?;
    Ok(format!("{} clips -> {}\n", clips.len(), out.display()))
}

/// Clip ids with frames under `dir`: `<clip>.frm` files and `<clip>_<n>.pgm` runs.
fn discover_clips(dir: &Path) -> Result<Vec<String>> {
    let mut ids = BTreeSet::new();
    for e in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = e?.path();
        let (Some(stem), Some(ext)) = (p.file_stem().and_then(|s| s.to_str()), p.extension().and_then(|s| s.to_str()))
        else {
            continue;
        };
        match ext {
            "frm" => {
                ids.insert(stem.to_string());
            }
            "pgm" => {
                if let Some((clip, _)) = stem.rsplit_once('_') {
                    ids.insert(clip.to_string());
                }
            }
            _ => {}
        }
    }
    Ok(ids.into_iter().collect())
}

pub struct MotionArgs<'a> {
    pub frames: &'a Path,
    pub clips: Option<&'a Path>,
    pub kept: Option<&'a Path>,
    pub fps: f64,
    pub sample_every: usize,
    pub threshold: f64,
}

/// Writes one motion report per clip; with a clip list, also writes the
/// clips that survive.
pub fn cmd_motion_filter(a: &MotionArgs<'_>, out: Option<&Path>) -> Result<String> {
    let clip_specs = a.clips.map(|p| read_clips(open(p)?).map_err(anyhow::Error::from)).transpose()?;
    let ids: Vec<String> = match &clip_specs {
        Some(c) => c.iter().map(|c| c.clip_id.clone()).collect(),
        None => discover_clips(a.frames)?,
    };
    let mut reports = Vec::new();
    for id in &ids {
        let packed = a.frames.join(format!("{id}.frm"));
        let frames = if packed.exists() {
            read_packed_frames(open(&packed)?).with_context(|| format!("reading {}", packed.display()))?
        } else {
            read_pgm_dir(a.frames, id).with_context(|| format!("reading frames of {id}"))?
        };
        let seq = FrameSequence {
            clip_id: id.clone(),
            fps: a.fps,
            frames,
        };
        reports.push(motion_filter(&seq, a.sample_every, a.threshold).with_context(|| format!("clip {id}"))?);
    }
    let mut text = String::new();
    for r in &reports {
        let line = serde_json::to_string(r)?;
        text.push_str(&line);
        text.push('\n');
    }
    if let Some(out) = out {
        std::fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    }
    if let (Some(specs), Some(kept_path)) = (&clip_specs, a.kept) {
        let dropped: BTreeSet<&str> = reports
            .iter()
            .filter(|r| r.decision == MotionDecision::Drop)
            .map(|r| r.clip_id.as_str())
            .collect();
        let kept: Vec<_> = specs.iter().filter(|c| !dropped.contains(c.clip_id.as_str())).cloned().collect();
        let mut w = create(kept_path)?;
        write_clips(&mut w, &kept)?;
        w.flush()?;
    }
    let n_drop = reports.iter().filter(|r| r.decision == MotionDecision::Drop).count();
    if out.is_some() {
        Ok(format!("{} clips checked, {} dropped\n", reports.len(), n_drop))
    } else {
        Ok(text)
    }
}

/// Writes a synthetic dataset and a config that runs the pipeline on it.
pub fn cmd_synth(cfg: &RunConfig, dir: &Path) -> Result<String> {
    let mut syn = cfg.synthetic.clone().unwrap_or_default();
    syn.seed = cfg.seed;
    syn.validate()?;
    let d = synth_generate(&syn)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut w = create(&dir.join("manifest.jsonl"))?;
    write_manifest(&mut w, &d.records)?;
    w.flush()?;
    let mut w = create(&dir.join("clips.jsonl"))?;
    write_clips(&mut w, &d.clips)?;
    w.flush()?;
    d.text.save(&dir.join("text.emb"))?;
    d.spans.save(&dir.join("spans.emb"))?;
    let mut run = cfg.clone();
    run.synthetic = None;
    run.spans.span_len = syn.span_len;
    run.spans.stride = syn.span_stride;
    run.paths.manifest = Some("manifest.jsonl".into());
    run.paths.clips = Some("clips.jsonl".into());
    run.paths.text_embeddings = Some("text.emb".into());
    run.paths.span_embeddings = Some("spans.emb".into());
    run.paths.out_dir = Some("run".into());
    std::fs::write(dir.join("config.toml"), run.to_toml())?;
    Ok(format!(
        "{} actions in {} clips -> {}\n",
        d.records.len(),
        d.clips.len(),
        dir.display()
    ))
}

pub fn cmd_train_duration(cfg: &RunConfig, out: &Path) -> Result<String> {
    let prep = prepare(cfg, load_dataset(cfg).context("stage load")?).context("stage split")?;
    let (clf, report) = train_duration(cfg, &prep).context("stage train-duration")?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    clf.save(out)?;
    let mut s = format!(
        "{} support vectors, {} iterations, KKT gap {:.2e}{} -> {}\n",
        report.n_support,
        report.iterations,
        report.kkt_gap,
        if report.converged { "" } else { " (iteration cap reached)" },
        out.display()
    );
    if let Some(d) = evaluate_duration(cfg, &prep, &clf)? {
        s.push_str(&serde_json::to_string_pretty(&d)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn cmd_train_scorer(cfg: &RunConfig, out: &Path) -> Result<String> {
    let prep = prepare(cfg, load_dataset(cfg).context("stage load")?).context("stage split")?;
    let trained = train_mpu(cfg, &prep).context("stage train-scorer")?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    trained.params.save(out)?;
    let log_path = out.with_extension("log.tsv");
    std::fs::write(&log_path, trained.log_text())?;
    Ok(format!(
        "best epoch {} of {} -> {} (log {})\n",
        trained.best_epoch,
        trained.log.len(),
        out.display(),
        log_path.display()
    ))
}

/// Localizes the test split and writes `predictions.jsonl` only.
pub fn cmd_localize(cfg: &RunConfig, dir: &Path) -> Result<String> {
    let prep = prepare(cfg, load_dataset(cfg).context("stage load")?).context("stage split")?;
    let models = build_models(cfg, &prep)?;
    let (preds, missing) = crate::pipeline::localize_test(cfg, &prep, &models).context("stage localize")?;
    std::fs::create_dir_all(dir)?;
    let path = dir.join("predictions.jsonl");
    let mut w = create(&path)?;
    write_predictions(&mut w, &preds)?;
    w.flush()?;
    Ok(format!(
        "{} predictions ({} visible, {} missing embeddings) -> {}\n",
        preds.len(),
        preds.iter().filter(|p| p.visible).count(),
        missing,
        path.display()
    ))
}

#[derive(Debug, Serialize)]
struct Evaluation {
    metrics: MetricsReport,
    breakdown: Vec<BucketReport>,
}

pub fn cmd_evaluate(manifest: &Path, predictions: &Path, only_predicted: bool, out: Option<&Path>) -> Result<String> {
    let records = read_manifest(open(manifest)?)?;
    let preds = read_predictions(open(predictions)?)?;
    let predicted: BTreeSet<&str> = preds.iter().map(|p| p.action_id.as_str()).collect();
    let gold = records
        .iter()
        .filter(|r| !only_predicted || predicted.contains(r.action_id.as_str()))
        .map(GoldAction::from_record)
        .collect::<Result<Vec<_>, _>>()?;
    let metrics = evaluate(&preds, &gold)?;
    let breakdown = breakdown_by_duration(&preds, &gold, &DEFAULT_BUCKETS)?;
    let text = format!(
        "{}\n{}",
        format_table(&[("Predictions".into(), metrics.clone())]),
        format_breakdown(&breakdown)
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("evaluation.txt"), &text)?;
        let ev = Evaluation { metrics, breakdown };
        std::fs::write(dir.join("evaluation.json"), serde_json::to_string_pretty(&ev)? + "\n")?;
    }
    Ok(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct VideoAlpha {
    pub alpha: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct AgreementReport {
    pub videos: BTreeMap<String, VideoAlpha>,
    pub alpha_min: Option<f64>,
    pub alpha_max: Option<f64>,
    pub kappa: Option<f64>,
    pub kappa_error: Option<String>,
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), i + 1))?);
    }
    Ok(out)
}

/// Per-video interval alpha and overall visibility kappa, computed by the
/// library functions without further arithmetic.
pub fn agreement_report(records: &[AnnotationRecord]) -> AgreementReport {
    let videos: BTreeMap<String, VideoAlpha> = per_video_alpha(records)
        .into_iter()
        .map(|(v, r)| {
            let entry = match r {
                Ok(a) => VideoAlpha {
                    alpha: Some(a),
                    error: None,
                },
                Err(e) => VideoAlpha {
                    alpha: None,
                    error: Some(e.to_string()),
                },
            };
            (v, entry)
        })
        .collect();
    let alphas: Vec<f64> = videos.values().filter_map(|v| v.alpha).collect();
    let counts = visibility_counts(records);
    let (kappa, kappa_error) = if counts.is_empty() {
        (None, None)
    } else {
        match fleiss_kappa(&counts) {
            Ok(k) => (Some(k), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    AgreementReport {
        alpha_min: alphas.iter().copied().reduce(f64::min),
        alpha_max: alphas.iter().copied().reduce(f64::max),
        videos,
        kappa,
        kappa_error,
    }
}

pub fn cmd_agreement(annotations: &Path, out: Option<&Path>) -> Result<String> {
    let records = read_annotations(annotations)?;
    let report = agreement_report(&records);
    let mut text = format!("{:<24} | {:>8}\n", "Video", "alpha");
    for (v, a) in &report.videos {
        match (a.alpha, &a.error) {
            (Some(x), _) => text.push_str(&format!("{v:<24} | {x:>8.4}\n")),
            (None, Some(e)) => text.push_str(&format!("{v:<24} | {e}\n")),
            _ => {}
        }
    }
    if let (Some(lo), Some(hi)) = (report.alpha_min, report.alpha_max) {
        text.push_str(&format!("alpha range {lo:.4} to {hi:.4}\n"));
    }
    match (report.kappa, &report.kappa_error) {
        (Some(k), _) => text.push_str(&format!("Fleiss kappa (visibility) {k:.4}\n")),
        (None, Some(e)) => text.push_str(&format!("Fleiss kappa unavailable: {e}\n")),
        _ => {}
    }
    if let Some(out) = out {
        let mut w = create(out)?;
        w.write_all((serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
        w.flush()?;
    }
    Ok(text)
}

/// Combines run reports into one results table.
pub fn cmd_report(inputs: &[PathBuf], out: Option<&Path>) -> Result<String> {
    if inputs.is_empty() {
        return Err(ConfigError("report needs at least one report.json".into()).into());
    }
    let mut rows = Vec::new();
    for p in inputs {
        let r: RunReport = serde_json::from_reader(open(p)?).with_context(|| format!("reading {}", p.display()))?;
        rows.push((r.method, r.metrics));
    }
    let text = format_table(&rows);
    if let Some(out) = out {
        std::fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(text)
}

pub fn cmd_pipeline(cfg: &RunConfig, dir: &Path) -> Result<String> {
    let out = run_pipeline(cfg)?;
    write_outputs(dir, &out).context("stage write")?;
    Ok(out.report.text())
}
