//! Timed transcripts: subtitle ingestion, speech-rate filtering and
//! action-to-utterance alignment.

mod chunker;
mod subtitle;

pub use chunker::{extract_candidate_actions, is_lexicon_verb};
pub use subtitle::{parse_subtitles, serialize_subtitles, SubtitleFormat};

use crate::interval::TimeInterval;
use serde::{Deserialize, Serialize};

/// Minimum average speech rate for a transcript to be kept.
pub const DEFAULT_MIN_WORDS_PER_SECOND: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TranscriptError {
    #[error("line {line}: malformed timestamp in {text:?}")]
    MalformedTimestamp { line: usize, text: String },
    #[error("line {line}: expected a numeric cue counter, found {text:?}")]
    MalformedCounter { line: usize, text: String },
    #[error("line {line}: cue starts before the previous cue")]
    UnorderedCues { line: usize },
    #[error("missing WEBVTT header")]
    MissingHeader,
    #[error("video {0:?} has zero duration")]
    ZeroDuration(String),
    #[error("action {action:?} references unknown cue {cue_index}")]
    UnknownCue { action: String, cue_index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtitleCue {
    pub index: usize,
    pub interval: TimeInterval,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub video_id: String,
    /// Seconds; taken from the manifest, not from the last cue.
    pub video_duration: f64,
    pub cues: Vec<SubtitleCue>,
}

impl Transcript {
    /// Builds a transcript, clamping every cue into `[0, video_duration]`
    /// and renumbering cues in order.
    pub fn new(video_id: impl Into<String>, video_duration: f64, cues: Vec<SubtitleCue>) -> Self {
        let cues = cues
            .into_iter()
            .enumerate()
            .map(|(index, cue)| SubtitleCue {
                index,
                interval: cue.interval.clamp(0.0, video_duration.max(0.0)),
                text: cue.text,
            })
            .collect();
        Self {
            video_id: video_id.into(),
            video_duration,
            cues,
        }
    }

    pub fn word_count(&self) -> usize {
        self.cues.iter().map(|c| c.text.split_whitespace().count()).sum()
    }
}

/// A narrated action found in a transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionMention {
    pub id: String,
    pub text: String,
    pub cue_index: usize,
    pub gold_visible: Option<bool>,
    /// Only present for actions labelled visible.
    pub gold_interval: Option<TimeInterval>,
}

/// Average whitespace-delimited words per second over the whole video.
pub fn words_per_second(t: &Transcript) -> Result<f64, TranscriptError> {
    if !(t.video_duration > 0.0) {
        return Err(TranscriptError::ZeroDuration(t.video_id.clone()));
    }
    Ok(t.word_count() as f64 / t.video_duration)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub video_id: String,
    /// `None` when the rate could not be computed.
    pub words_per_second: Option<f64>,
    pub reason: String,
}

/// Keeps transcripts whose speech rate is at least `min_rate`.
pub fn filter_transcripts(transcripts: Vec<Transcript>, min_rate: f64) -> (Vec<Transcript>, Vec<Rejection>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for t in transcripts {
        match words_per_second(&t) {
            Ok(rate) if rate >= min_rate => kept.push(t),
            Ok(rate) => rejected.push(Rejection {
                video_id: t.video_id.clone(),
                words_per_second: Some(rate),
                reason: format!("{rate:.4} words/s is below {min_rate}"),
            }),
            Err(e) => rejected.push(Rejection {
                video_id: t.video_id.clone(),
                words_per_second: None,
                reason: e.to_string(),
            }),
        }
    }
    (kept, rejected)
}

/// The interval of the utterance that contains the action.
pub fn align_action_to_utterance(action: &ActionMention, t: &Transcript) -> Result<TimeInterval, TranscriptError> {
    t.cues
        .get(action.cue_index)
        .map(|c| c.interval)
        .ok_or_else(|| TranscriptError::UnknownCue {
            action: action.id.clone(),
            cue_index: action.cue_index,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cue(start: f64, end: f64, text: &str) -> SubtitleCue {
        SubtitleCue {
            index: 0,
            interval: TimeInterval::new(start, end).unwrap(),
            text: text.to_string(),
        }
    }

    fn with_words(id: &str, words: usize, duration: f64) -> Transcript {
        let text = vec!["word"; words].join(" ");
        Transcript::new(id, duration, vec![cue(0.0, 1.0, &text)])
    }

    fn mention(id: &str, cue_index: usize) -> ActionMention {
        ActionMention {
            id: id.into(),
            text: "x".into(),
            cue_index,
            gold_visible: None,
            gold_interval: None,
        }
    }

    #[test]
    fn speech_rates() {
        assert_eq!(words_per_second(&with_words("a", 30, 60.0)).unwrap(), 0.5);
        assert_eq!(words_per_second(&with_words("a", 0, 60.0)).unwrap(), 0.0);
        let r = words_per_second(&with_words("a", 29, 60.0)).unwrap();
        assert!((r - 29.0 / 60.0).abs() < 1e-15);
        assert!(r < DEFAULT_MIN_WORDS_PER_SECOND);
        assert!(matches!(
            words_per_second(&with_words("z", 3, 0.0)),
            Err(TranscriptError::ZeroDuration(_))
        ));
    }

    #[test]
    fn punctuation_attached_words_count_once() {
        let t = Transcript::new("v", 10.0, vec![cue(0.0, 1.0, "hello, world! ok\tthen")]);
        assert_eq!(t.word_count(), 4);
    }

    #[test]
    fn filter_keeps_rate_at_threshold() {
        let ts = vec![with_words("a", 36, 60.0), with_words("b", 30, 60.0), with_words("c", 49, 100.0)];
        let (kept, rejected) = filter_transcripts(ts, 0.5);
        let ids: Vec<_> = kept.iter().map(|t| t.video_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected[0].video_id, "c");
        assert_eq!(rejected[0].words_per_second, Some(0.49));
        assert!(filter_transcripts(vec![], 0.5).0.is_empty());
    }

    #[test]
    fn cues_are_clamped_to_the_video() {
        let t = Transcript::new("v", 10.0, vec![cue(8.0, 12.0, "a"), cue(11.0, 13.0, "b")]);
        assert_eq!(t.cues[0].interval, TimeInterval::new(8.0, 10.0).unwrap());
        assert_eq!(t.cues[1].interval, TimeInterval::new(10.0, 10.0).unwrap());
        assert_eq!(t.cues[1].index, 1);
    }

    #[test]
    fn alignment_returns_the_cue_interval() {
        let t = Transcript::new("v", 60.0, vec![cue(0.0, 3.0, "a"), cue(12.0, 17.5, "b")]);
        let expected = TimeInterval::new(12.0, 17.5).unwrap();
        assert_eq!(align_action_to_utterance(&mention("a1", 1), &t).unwrap(), expected);
        assert_eq!(align_action_to_utterance(&mention("a2", 1), &t).unwrap(), expected);
        assert_eq!(
            align_action_to_utterance(&mention("a0", 0), &t).unwrap(),
            TimeInterval::new(0.0, 3.0).unwrap()
        );
        assert!(matches!(
            align_action_to_utterance(&mention("bad", 2), &t),
            Err(TranscriptError::UnknownCue { cue_index: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn raising_min_rate_never_adds(words in proptest::collection::vec(0usize..80, 0..12), lo in 0.0f64..1.5, bump in 0.0f64..1.0) {
            let ts: Vec<_> = words.iter().enumerate().map(|(i, w)| with_words(&i.to_string(), *w, 60.0)).collect();
            let (low, _) = filter_transcripts(ts.clone(), lo);
            let (high, _) = filter_transcripts(ts, lo + bump);
            for t in &high {
                prop_assert!(low.iter().any(|k| k.video_id == t.video_id));
            }
        }
    }
}
