//! WebVTT and SRT reading and writing with millisecond-exact timestamps.

use super::{SubtitleCue, TranscriptError};
use crate::interval::TimeInterval;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubtitleFormat {
    WebVtt,
    Srt,
}

impl SubtitleFormat {
    /// Picks a format from a file extension (`vtt` or `srt`).
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "vtt" => Some(Self::WebVtt),
            "srt" => Some(Self::Srt),
            _ => None,
        }
    }

    fn fraction_separator(self) -> char {
        match self {
            Self::WebVtt => '.',
            Self::Srt => ',',
        }
    }
}

/// Parses `HH:MM:SS.mmm` (or `MM:SS.mmm` in WebVTT) into milliseconds.
fn parse_timestamp(raw: &str, format: SubtitleFormat) -> Option<u64> {
    let (clock, frac) = raw.split_once(format.fraction_separator())?;
    if frac.len() != 3 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let millis: u64 = frac.parse().ok()?;
    let parts: Vec<&str> = clock.split(':').collect();
    let (h, m, s) = match (parts.as_slice(), format) {
        ([h, m, s], _) => (*h, *m, *s),
        ([m, s], SubtitleFormat::WebVtt) => ("0", *m, *s),
        _ => return None,
    };
    let field = |v: &str, max: Option<u64>| -> Option<u64> {
        if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let n: u64 = v.parse().ok()?;
        match max {
            Some(max) if n > max || v.len() != 2 => None,
            _ => Some(n),
        }
    };
    let (h, m, s) = (field(h, None)?, field(m, Some(59))?, field(s, Some(59))?);
    Some(((h * 60 + m) * 60 + s) * 1000 + millis)
}

fn format_timestamp(ms: u64, format: SubtitleFormat) -> String {
    let (h, rem) = (ms / 3_600_000, ms % 3_600_000);
    let (m, rem) = (rem / 60_000, rem % 60_000);
    let (s, millis) = (rem / 1000, rem % 1000);
    format!(
        "{h:02}:{m:02}:{s:02}{}{millis:03}",
        format.fraction_separator()
    )
}

fn parse_timing(line: &str, line_no: usize, format: SubtitleFormat) -> Result<TimeInterval, TranscriptError> {
    let malformed = || TranscriptError::MalformedTimestamp {
        line: line_no,
        text: line.to_string(),
    };
    let (lhs, rhs) = line.split_once("-->").ok_or_else(malformed)?;
    // WebVTT allows cue settings after the end timestamp.
    let end_raw = rhs.split_whitespace().next().ok_or_else(malformed)?;
    let start = parse_timestamp(lhs.trim(), format).ok_or_else(malformed)?;
    let end = parse_timestamp(end_raw, format).ok_or_else(malformed)?;
    TimeInterval::from_ms(start, end).map_err(|_| malformed())
}

/// Parses a subtitle document into cues in document order.
///
/// Cue start times must be non-decreasing; a cue starting before its
/// predecessor is rejected with its line number.
pub fn parse_subtitles(raw: &str, format: SubtitleFormat) -> Result<Vec<SubtitleCue>, TranscriptError> {
    let raw = raw.strip_prefix('\u{feff}').unwrap_or(raw);
    let lines: Vec<&str> = raw.lines().map(|l| l.trim_end_matches('\r')).collect();
    let mut pos = 0;

    if format == SubtitleFormat::WebVtt {
        while pos < lines.len() && lines[pos].trim().is_empty() {
            pos += 1;
        }
        if pos < lines.len() {
            let header = lines[pos];
            if header != "WEBVTT" && !header.starts_with("WEBVTT ") && !header.starts_with("WEBVTT\t") {
                return Err(TranscriptError::MissingHeader);
            }
            pos += 1;
            // Header block runs to the first blank line.
            while pos < lines.len() && !lines[pos].trim().is_empty() {
                pos += 1;
            }
        }
    }

    let mut cues: Vec<SubtitleCue> = Vec::new();
    while pos < lines.len() {
        if lines[pos].trim().is_empty() {
            pos += 1;
            continue;
        }
        let block_start = pos;
        let mut block_end = pos;
        while block_end < lines.len() && !lines[block_end].trim().is_empty() {
            block_end += 1;
        }
        let block = &lines[block_start..block_end];
        pos = block_end;

        if format == SubtitleFormat::WebVtt {
            let first = block[0];
            if first.starts_with("NOTE") || first == "STYLE" || first == "REGION" {
                continue;
            }
        }
        let timing_idx = match block.iter().position(|l| l.contains("-->")) {
            Some(i) if i <= 1 => i,
            _ => {
                return Err(TranscriptError::MalformedTimestamp {
                    line: block_start + 1,
                    text: block[0].to_string(),
                })
            }
        };
        if format == SubtitleFormat::Srt && timing_idx == 1 && block[0].trim().parse::<u64>().is_err() {
            return Err(TranscriptError::MalformedCounter {
                line: block_start + 1,
                text: block[0].to_string(),
            });
        }
        let line_no = block_start + timing_idx + 1;
        let interval = parse_timing(block[timing_idx], line_no, format)?;
        if let Some(prev) = cues.last() {
            if interval.start() < prev.interval.start() {
                return Err(TranscriptError::UnorderedCues { line: line_no });
            }
        }
        let text = block[timing_idx + 1..].join("\n");
        cues.push(SubtitleCue {
            index: cues.len(),
            interval,
            text,
        });
    }
    Ok(cues)
}

/// Renders cues in the requested format. SRT counters are 1-based.
pub fn serialize_subtitles(cues: &[SubtitleCue], format: SubtitleFormat) -> String {
    let mut out = String::new();
    if format == SubtitleFormat::WebVtt {
        out.push_str("WEBVTT\n\n");
    }
    for (i, cue) in cues.iter().enumerate() {
        if format == SubtitleFormat::Srt {
            let _ = writeln!(out, "{}", i + 1);
        }
        let _ = writeln!(
            out,
            "{} --> {}",
            format_timestamp(cue.interval.start_ms(), format),
            format_timestamp(cue.interval.end_ms(), format)
        );
        let _ = writeln!(out, "{}\n", cue.text);
    }
    out
}
