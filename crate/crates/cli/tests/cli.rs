use std::path::Path;
use std::process::{Command, Output};
use twoseal_cli::commands::{agreement_report, AgreementReport};
use twoseal_core::eval::{krippendorff_alpha_interval, AnnotationRecord};

fn twoseal(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoseal"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const DENSE_VTT: &str = "WEBVTT\n\n00:00:01.000 --> 00:00:04.000\nfirst you chop the onions finely\n\n\
00:00:04.500 --> 00:00:08.000\nthen you heat the oil in a large pan\n";

const DENSE_SRT: &str = "1\n00:00:00,500 --> 00:00:03,000\nnow whisk the eggs with a fork\n\n\
2\n00:00:03,200 --> 00:00:06,000\npour the mixture into the hot pan\n";

#[test]
fn ingest_keeps_valid_files_and_logs_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let subs = dir.path().join("subs");
    std::fs::create_dir(&subs).unwrap();
    std::fs::write(subs.join("a.vtt"), DENSE_VTT).unwrap();
    std::fs::write(subs.join("b.srt"), DENSE_SRT).unwrap();
    std::fs::write(subs.join("c.vtt"), DENSE_VTT.replace("onions", "carrots")).unwrap();
    std::fs::write(subs.join("quiet.vtt"), "WEBVTT\n\n00:01:30.000 --> 00:01:40.000\nokay\n").unwrap();
    let o = twoseal(&["ingest", "--subs", "subs", "--out", "manifest.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(dir.path().join("manifest.jsonl")).unwrap();
    for v in ["\"a\"", "\"b\"", "\"c\""] {
        assert!(manifest.contains(v), "missing video {v}");
    }
    assert!(!manifest.contains("\"quiet\""));
    let rejected = std::fs::read_to_string(dir.path().join("manifest.rejections.jsonl")).unwrap();
    assert_eq!(rejected.lines().count(), 1);
    assert!(rejected.contains("quiet"));
}

#[test]
fn ingest_reports_file_and_line_of_malformed_cue() {
    let dir = tempfile::tempdir().unwrap();
    let subs = dir.path().join("subs");
    std::fs::create_dir(&subs).unwrap();
    std::fs::write(subs.join("broken.vtt"), "WEBVTT\n\n00:00:01.000 --> 00:00:0x.000\nhello\n").unwrap();
    let o = twoseal(&["ingest", "--subs", "subs", "--out", "m.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("broken.vtt") && err.contains("line 3"), "{err}");
}

fn annotation(video: &str, action: &str, who: &str, start_ms: u64, end_ms: u64) -> AnnotationRecord {
    AnnotationRecord {
        video_id: video.into(),
        action_id: action.into(),
        annotator: who.into(),
        visible: Some(true),
        start_ms: Some(start_ms),
        end_ms: Some(end_ms),
    }
}

fn run_agreement(dir: &Path, records: &[AnnotationRecord]) -> (Output, Option<AgreementReport>) {
    let lines: Vec<String> = records.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    std::fs::write(dir.join("ann.jsonl"), lines.join("\n")).unwrap();
    let o = twoseal(&["agreement", "--annotations", "ann.jsonl", "--out", "agreement.json"], dir);
    let report = std::fs::read_to_string(dir.join("agreement.json"))
        .ok()
        .map(|s| serde_json::from_str(&s).unwrap());
    (o, report)
}

#[test]
fn agreement_duplicate_annotators_give_alpha_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = Vec::new();
    for who in ["ann1", "ann2"] {
        records.push(annotation("v", "a1", who, 1_000, 5_000));
        records.push(annotation("v", "a2", who, 9_000, 20_000));
    }
    let (o, report) = run_agreement(dir.path(), &records);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(report.unwrap().videos["v"].alpha, Some(1.0));
}

#[test]
fn agreement_single_annotator_reports_insufficient_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![annotation("v", "a1", "solo", 1_000, 5_000), annotation("v", "a2", "solo", 6_000, 9_000)];
    let (o, report) = run_agreement(dir.path(), &records);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = &report.unwrap().videos["v"];
    assert_eq!(v.alpha, None);
    assert!(v.error.as_deref().unwrap().contains("fewer than two items"), "{v:?}");
}

#[test]
fn agreement_output_matches_library_values() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![
        annotation("v", "a1", "x", 1_000, 5_000),
        annotation("v", "a2", "x", 8_000, 12_000),
        annotation("v", "a1", "y", 1_500, 5_500),
        annotation("v", "a2", "y", 7_000, 12_500),
    ];
    let (o, report) = run_agreement(dir.path(), &records);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = report.unwrap();
    assert_eq!(report, agreement_report(&records));
    let matrix = vec![
        vec![Some(1.0), Some(8.0), Some(5.0), Some(12.0)],
        vec![Some(1.5), Some(7.0), Some(5.5), Some(12.5)],
    ];
    let direct = krippendorff_alpha_interval(&matrix).unwrap();
    assert!((report.videos["v"].alpha.unwrap() - direct).abs() < 1e-12);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "seed = 1\nnot_a_key = 3\n").unwrap();
    let o = twoseal(&["--config", "bad.toml", "pipeline", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = twoseal(&["pipeline"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = twoseal(&["--path", "sideways", "pipeline"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_data_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = twoseal(&["evaluate", "--manifest", "nope.jsonl", "--predictions", "p.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

const SMALL: &str = "seed = 4\n\n[synthetic]\nn_clips = 60\n\n[train]\nhidden_dim = 8\nmax_epochs = 5\n";

#[test]
fn synth_then_pipeline_through_generated_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let o = twoseal(&["--config", "small.toml", "synth", "--out", "data"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = twoseal(&["--config", "data/config.toml", "pipeline"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let run = dir.path().join("data/run");
    for f in ["predictions.jsonl", "report.txt", "report.json", "duration.svm", "scorer.scr"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let report = std::fs::read_to_string(run.join("report.txt")).unwrap();
    assert!(report.contains("2SEAL+MPU"), "{report}");
}

#[test]
fn path_and_scorer_flags_reach_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let o = twoseal(&["--config", "small.toml", "synth", "--out", "data"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = "data/config.toml";
    let o = twoseal(&["--config", cfg, "--path", "align-only", "pipeline", "--out", "align"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let preds = std::fs::read_to_string(dir.path().join("align/predictions.jsonl")).unwrap();
    assert!(preds.lines().all(|l| l.contains("\"path\":\"align\"")));
    let o = twoseal(
        &["--config", cfg, "--path", "multimodal-only", "--scorer", "dot", "pipeline", "--out", "dot"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("dot/report.txt")).unwrap();
    assert!(report.contains("Dot"), "{report}");
    let preds = std::fs::read_to_string(dir.path().join("dot/predictions.jsonl")).unwrap();
    assert!(preds.lines().all(|l| l.contains("\"path\":\"multimodal\"")));
}
