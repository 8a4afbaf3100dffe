//! Action manifest: one JSON record per narrated action.

use crate::interval::{IntervalError, TimeInterval};
use crate::transcript::{ActionMention, SubtitleCue, Transcript};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("action {action:?}: {source}")]
    Interval { action: String, source: IntervalError },
    #[error("action {0:?} has a gold interval but is not marked visible")]
    GoldWithoutVisible(String),
    #[error("duplicate action id {0:?}")]
    DuplicateAction(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub action_id: String,
    pub video_id: String,
    #[serde(default)]
    pub clip_id: Option<String>,
    pub text: String,
    pub cue_start_ms: u64,
    pub cue_end_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_visible: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_start_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_end_ms: Option<u64>,
    /// Channel used for train/val/test splitting; defaults to the video id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_duration_ms: Option<u64>,
}

impl ActionRecord {
    pub fn cue_interval(&self) -> Result<TimeInterval, ManifestError> {
        TimeInterval::from_ms(self.cue_start_ms, self.cue_end_ms).map_err(|source| ManifestError::Interval {
            action: self.action_id.clone(),
            source,
        })
    }

    pub fn gold_interval(&self) -> Result<Option<TimeInterval>, ManifestError> {
        match (self.gold_start_ms, self.gold_end_ms) {
            (Some(s), Some(e)) => TimeInterval::from_ms(s, e)
                .map(Some)
                .map_err(|source| ManifestError::Interval {
                    action: self.action_id.clone(),
                    source,
                }),
            _ => Ok(None),
        }
    }

    pub fn channel(&self) -> &str {
        self.channel_id.as_deref().unwrap_or(&self.video_id)
    }

    /// Gold-visible with a usable gold interval.
    pub fn is_gold_visible(&self) -> bool {
        self.gold_visible == Some(true)
    }

    fn validate(&self) -> Result<(), ManifestError> {
        self.cue_interval()?;
        if self.gold_interval()?.is_some() && !self.is_gold_visible() {
            return Err(ManifestError::GoldWithoutVisible(self.action_id.clone()));
        }
        Ok(())
    }
}

pub fn read_manifest(reader: impl BufRead) -> Result<Vec<ActionRecord>, ManifestError> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ActionRecord =
            serde_json::from_str(&line).map_err(|source| ManifestError::Json { line: i + 1, source })?;
        rec.validate()?;
        if !seen.insert(rec.action_id.clone()) {
            return Err(ManifestError::DuplicateAction(rec.action_id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(mut writer: impl Write, records: &[ActionRecord]) -> Result<(), ManifestError> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// A video rebuilt from manifest records: its transcript (one cue per
/// distinct cue interval) and the actions bound to those cues.
#[derive(Debug, Clone)]
pub struct VideoActions {
    pub transcript: Transcript,
    pub actions: Vec<ActionMention>,
}

/// Groups records by video, reconstructing cue lists from cue timings.
///
/// The video duration is the record's `video_duration_ms` when present,
/// otherwise the latest cue or gold end.
pub fn group_by_video(records: &[ActionRecord]) -> Result<BTreeMap<String, VideoActions>, ManifestError> {
    let mut by_video: BTreeMap<&str, Vec<&ActionRecord>> = BTreeMap::new();
    for r in records {
        by_video.entry(&r.video_id).or_default().push(r);
    }
    let mut out = BTreeMap::new();
    for (video, recs) in by_video {
        let mut cue_keys: Vec<(u64, u64)> = recs.iter().map(|r| (r.cue_start_ms, r.cue_end_ms)).collect();
        cue_keys.sort_unstable();
        cue_keys.dedup();
        let duration_ms = recs
            .iter()
            .filter_map(|r| r.video_duration_ms)
            .max()
            .unwrap_or_else(|| {
                recs.iter()
                    .map(|r| r.cue_end_ms.max(r.gold_end_ms.unwrap_or(0)))
                    .max()
                    .unwrap_or(0)
            });
        let cues = cue_keys
            .iter()
            .enumerate()
            .map(|(index, &(s, e))| SubtitleCue {
                index,
                interval: TimeInterval::from_ms(s, e).expect("validated on read"),
                text: recs
                    .iter()
                    .filter(|r| (r.cue_start_ms, r.cue_end_ms) == (s, e))
                    .map(|r| r.text.as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
            })
            .collect();
        let transcript = Transcript::new(video, duration_ms as f64 / 1000.0, cues);
        let mut actions = Vec::with_capacity(recs.len());
        for r in &recs {
            let cue_index = cue_keys
                .binary_search(&(r.cue_start_ms, r.cue_end_ms))
                .expect("cue key collected above");
            actions.push(ActionMention {
                id: r.action_id.clone(),
                text: r.text.clone(),
                cue_index,
                gold_visible: r.gold_visible,
                gold_interval: r.gold_interval()?,
            });
        }
        out.insert(video.to_string(), VideoActions { transcript, actions });
    }
    Ok(out)
}
