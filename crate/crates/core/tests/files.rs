use std::io::BufReader;
use twoseal_core::eval::{evaluate, GoldAction};
use twoseal_core::features::{synth_generate, EmbeddingTable, Modality, SyntheticConfig};
use twoseal_core::localize::{read_predictions, write_predictions, Prediction, PredictionPath};
use twoseal_core::manifest::{read_manifest, write_manifest};
use twoseal_core::TimeInterval;

fn small() -> SyntheticConfig {
    SyntheticConfig {
        n_clips: 12,
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn synthetic_dataset_survives_disk() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth_generate(&small()).unwrap();

    let path = dir.path().join("manifest.jsonl");
    write_manifest(std::fs::File::create(&path).unwrap(), &ds.records).unwrap();
    let back = read_manifest(BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back, ds.records);

    let path = dir.path().join("spans.emb");
    ds.spans.save(&path).unwrap();
    let back = EmbeddingTable::load(&path, Modality::VideoSpan).unwrap();
    assert_eq!(back, ds.spans);
}

#[test]
fn predictions_file_scores_like_memory() {
    let ds = synth_generate(&small()).unwrap();
    let gold: Vec<GoldAction> = ds.records.iter().map(|r| GoldAction::from_record(r).unwrap()).collect();
    let preds: Vec<Prediction> = gold
        .iter()
        .map(|g| Prediction {
            action_id: g.action_id.clone(),
            visible: g.visible,
            interval: g.interval.map(|iv| TimeInterval::new(iv.start() + 1.0, iv.end() + 1.0).unwrap()),
            score: g.visible.then_some(0.75),
            path: PredictionPath::Multimodal,
        })
        .collect();
    let mut buf = Vec::new();
    write_predictions(&mut buf, &preds).unwrap();
    let back = read_predictions(buf.as_slice()).unwrap();
    assert_eq!(evaluate(&back, &gold).unwrap(), evaluate(&preds, &gold).unwrap());
    assert_eq!(evaluate(&back, &gold).unwrap().va, 100.0);
}
