//! Clip preparation: grouping narrated actions into clips of at most a
//! minute, and dropping near-static clips by frame correlation.

use crate::interval::TimeInterval;
use crate::transcript::{ActionMention, Transcript, TranscriptError};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Read, Write};
use std::path::Path;

pub const DEFAULT_MAX_CLIP_LEN: f64 = 60.0;
pub const DEFAULT_CLIP_PAD: f64 = 15.0;
pub const DEFAULT_SAMPLE_EVERY: usize = 100;
pub const DEFAULT_MOTION_THRESHOLD: f64 = 0.8;

const FRAME_MAGIC: &[u8; 4] = b"FRM1";

#[derive(Debug, thiserror::Error)]
pub enum DataPrepError {
    #[error("frame has zero intensity variance")]
    ConstantFrame,
    #[error("frames differ in size: {0}x{1} vs {2}x{3}")]
    FrameSizeMismatch(usize, usize, usize, usize),
    #[error("need at least two sampled frames, got {0}")]
    TooFewFrames(usize),
    #[error("bad frame file: {0}")]
    BadFrameFile(String),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One 8-bit grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self, DataPrepError> {
        if pixels.len() != height * width {
            return Err(DataPrepError::BadFrameFile(format!(
                "{} pixels for a {height}x{width} frame",
                pixels.len()
            )));
        }
        Ok(Self { height, width, pixels })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub clip_id: String,
    pub fps: f64,
    pub frames: Vec<GrayFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSpec {
    pub clip_id: String,
    pub video_id: String,
    pub interval: TimeInterval,
    pub action_ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ClipLine {
    clip_id: String,
    video_id: String,
    start_ms: u64,
    end_ms: u64,
    action_ids: Vec<String>,
}

pub fn write_clips(mut w: impl Write, clips: &[ClipSpec]) -> Result<(), DataPrepError> {
    for c in clips {
        let line = ClipLine {
            clip_id: c.clip_id.clone(),
            video_id: c.video_id.clone(),
            start_ms: c.interval.start_ms(),
            end_ms: c.interval.end_ms(),
            action_ids: c.action_ids.clone(),
        };
        serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_clips(r: impl BufRead) -> Result<Vec<ClipSpec>, DataPrepError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let c: ClipLine = serde_json::from_str(&line).map_err(|source| DataPrepError::Json { line: i + 1, source })?;
        let interval = TimeInterval::from_ms(c.start_ms, c.end_ms)
            .map_err(|e| DataPrepError::BadFrameFile(format!("clip {}: {e}", c.clip_id)))?;
        out.push(ClipSpec {
            clip_id: c.clip_id,
            video_id: c.video_id,
            interval,
            action_ids: c.action_ids,
        });
    }
    Ok(out)
}

/// Splits a group of actions (sorted by cue start) at its widest gap
/// until every group's cue span fits in `max_len`.
fn split_groups(cues: &[(usize, TimeInterval)], max_len: f64, out: &mut Vec<Vec<usize>>) {
    let first = cues[0].1.start();
    let last = cues.iter().map(|c| c.1.end()).fold(f64::MIN, f64::max);
    if cues.len() == 1 || last - first <= max_len {
        out.push(cues.iter().map(|c| c.0).collect());
        return;
    }
    let mut running_end = cues[0].1.end();
    let mut best = (f64::NEG_INFINITY, 1);
    for k in 1..cues.len() {
        let gap = cues[k].1.start() - running_end;
        if gap > best.0 {
            best = (gap, k);
        }
        running_end = running_end.max(cues[k].1.end());
    }
    let (left, right) = cues.split_at(best.1);
    split_groups(left, max_len, out);
    split_groups(right, max_len, out);
}

/// Groups actions into clips and pads each clip by `pad` seconds on both
/// sides, clamped to the video.
///
/// A group is split at its largest inter-cue gap whenever its cue span
/// exceeds `max_len`. Clip ids are `<video_id>_c<k>`.
pub fn segment_video(
    t: &Transcript,
    actions: &[ActionMention],
    max_len: f64,
    pad: f64,
) -> Result<Vec<ClipSpec>, DataPrepError> {
    let mut cues: Vec<(usize, TimeInterval)> = actions
        .iter()
        .enumerate()
        .map(|(i, a)| crate::transcript::align_action_to_utterance(a, t).map(|iv| (i, iv)))
        .collect::<Result<_, _>>()?;
    if cues.is_empty() {
        return Ok(Vec::new());
    }
    cues.sort_by(|a, b| {
        a.1.start()
            .total_cmp(&b.1.start())
            .then(a.1.end().total_cmp(&b.1.end()))
            .then(a.0.cmp(&b.0))
    });
    let mut groups = Vec::new();
    split_groups(&cues, max_len, &mut groups);

    let video_end = t.video_duration.max(0.0);
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(k, members)| {
            let span = members
                .iter()
                .map(|&i| cues.iter().find(|c| c.0 == i).expect("member").1)
                .reduce(|a, b| a.hull(&b))
                .expect("non-empty group");
            let start = (span.start() - pad).max(0.0);
            let end = (span.end() + pad).min(video_end).max(start);
            ClipSpec {
                clip_id: format!("{}_c{k}", t.video_id),
                video_id: t.video_id.clone(),
                interval: TimeInterval::new(start, end).expect("ordered"),
                action_ids: members.iter().map(|&i| actions[i].id.clone()).collect(),
            }
        })
        .collect())
}

/// Pearson correlation of two equally sized real-valued samples.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64, DataPrepError> {
    assert_eq!(a.len(), b.len(), "correlation inputs differ in length");
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(DataPrepError::ConstantFrame);
    }
    Ok((cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0))
}

/// 2-D correlation coefficient between two frames.
pub fn corr2d(a: &GrayFrame, b: &GrayFrame) -> Result<f64, DataPrepError> {
    if (a.height, a.width) != (b.height, b.width) {
        return Err(DataPrepError::FrameSizeMismatch(a.height, a.width, b.height, b.width));
    }
    let fa: Vec<f64> = a.pixels.iter().map(|&p| p as f64).collect();
    let fb: Vec<f64> = b.pixels.iter().map(|&p| p as f64).collect();
    correlation(&fa, &fb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionDecision {
    Keep,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionReport {
    pub clip_id: String,
    pub decision: MotionDecision,
    pub median_correlation: f64,
    pub sampled_frames: usize,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Samples every `sample_every`-th frame, correlates consecutive samples,
/// and drops the clip when the median correlation exceeds `threshold`.
pub fn motion_filter(f: &FrameSequence, sample_every: usize, threshold: f64) -> Result<MotionReport, DataPrepError> {
    let step = sample_every.max(1);
    let sampled: Vec<&GrayFrame> = f.frames.iter().step_by(step).collect();
    if sampled.len() < 2 {
        return Err(DataPrepError::TooFewFrames(sampled.len()));
    }
    let mut coeffs = sampled
        .windows(2)
        .map(|w| corr2d(w[0], w[1]))
        .collect::<Result<Vec<_>, _>>()?;
    let med = median(&mut coeffs);
    Ok(MotionReport {
        clip_id: f.clip_id.clone(),
        decision: if med > threshold { MotionDecision::Drop } else { MotionDecision::Keep },
        median_correlation: med,
        sampled_frames: sampled.len(),
    })
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Reads a packed `FRM1` frame file.
pub fn read_packed_frames(mut r: impl Read) -> Result<Vec<GrayFrame>, DataPrepError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| DataPrepError::BadFrameFile("truncated header".into()))?;
    if &header[..4] != FRAME_MAGIC {
        return Err(DataPrepError::BadFrameFile("bad magic".into()));
    }
    let (count, height, width) = (
        read_u32(&header, 4) as usize,
        read_u32(&header, 8) as usize,
        read_u32(&header, 12) as usize,
    );
    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        let mut pixels = vec![0u8; height * width];
        r.read_exact(&mut pixels)
            .map_err(|_| DataPrepError::BadFrameFile(format!("truncated at frame {i}")))?;
        frames.push(GrayFrame { height, width, pixels });
    }
    Ok(frames)
}

pub fn write_packed_frames(mut w: impl Write, frames: &[GrayFrame]) -> Result<(), DataPrepError> {
    let (h, wd) = frames.first().map_or((0, 0), |f| (f.height, f.width));
    if let Some(f) = frames.iter().find(|f| (f.height, f.width) != (h, wd)) {
        return Err(DataPrepError::FrameSizeMismatch(h, wd, f.height, f.width));
    }
    w.write_all(FRAME_MAGIC)?;
    for v in [frames.len(), h, wd] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for f in frames {
        w.write_all(&f.pixels)?;
    }
    Ok(())
}

/// Parses a binary PGM (`P5`) image with maxval at most 255.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayFrame, DataPrepError> {
    let bad = |m: &str| DataPrepError::BadFrameFile(format!("pgm: {m}"));
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a P5 image"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit images are supported"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let raster = bytes.get(pos..pos + width * height).ok_or_else(|| bad("truncated raster"))?;
    GrayFrame::new(height, width, raster.to_vec())
}

pub fn encode_pgm(frame: &GrayFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

/// Loads `<clip_id>_<index>.pgm` files from `dir`, ordered by index.
pub fn read_pgm_dir(dir: &Path, clip_id: &str) -> Result<Vec<GrayFrame>, DataPrepError> {
    let prefix = format!("{clip_id}_");
    let mut indexed = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(index) = name
            .strip_prefix(&prefix)
            .and_then(|rest| rest.strip_suffix(".pgm"))
            .and_then(|i| i.parse::<u64>().ok())
        else {
            continue;
        };
        indexed.push((index, path));
    }
    indexed.sort();
    indexed
        .into_iter()
        .map(|(_, p)| parse_pgm(&std::fs::read(p)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::SubtitleCue;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frame(h: usize, w: usize, px: &[u8]) -> GrayFrame {
        GrayFrame::new(h, w, px.to_vec()).unwrap()
    }

    fn video(cues: &[(f64, f64)], duration: f64) -> (Transcript, Vec<ActionMention>) {
        let cues: Vec<_> = cues
            .iter()
            .map(|&(s, e)| SubtitleCue {
                index: 0,
                interval: TimeInterval::new(s, e).unwrap(),
                text: "x".into(),
            })
            .collect();
        let n = cues.len();
        let t = Transcript::new("v", duration, cues);
        let actions = (0..n)
            .map(|i| ActionMention {
                id: format!("a{i}"),
                text: "x".into(),
                cue_index: i,
                gold_visible: None,
                gold_interval: None,
            })
            .collect();
        (t, actions)
    }

    #[test]
    fn single_action_padded() {
        let (t, a) = video(&[(100.0, 105.0)], 600.0);
        let clips = segment_video(&t, &a, 60.0, 15.0).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].interval, TimeInterval::new(85.0, 120.0).unwrap());
        assert_eq!(clips[0].clip_id, "v_c0");
    }

    #[test]
    fn padding_clamps_at_zero() {
        let (t, a) = video(&[(5.0, 10.0)], 300.0);
        let clips = segment_video(&t, &a, 60.0, 15.0).unwrap();
        assert_eq!(clips[0].interval, TimeInterval::new(0.0, 25.0).unwrap());
    }

    #[test]
    fn distant_actions_split() {
        let (t, a) = video(&[(0.0, 10.0), (200.0, 210.0)], 300.0);
        let clips = segment_video(&t, &a, 60.0, 15.0).unwrap();
        assert_eq!(clips.len(), 2);
        assert_eq!(clips[0].action_ids, ["a0"]);
        assert_eq!(clips[1].interval, TimeInterval::new(185.0, 225.0).unwrap());
    }

    #[test]
    fn splits_at_widest_gap() {
        // Gaps: 5, 30, 2. Span 85 > 60 so the 30 s gap is cut first.
        let (t, a) = video(&[(0.0, 10.0), (15.0, 20.0), (50.0, 60.0), (62.0, 70.0)], 100.0);
        let clips = segment_video(&t, &a, 60.0, 15.0).unwrap();
        let groups: Vec<_> = clips.iter().map(|c| c.action_ids.clone()).collect();
        assert_eq!(groups, vec![vec!["a0", "a1"], vec!["a2", "a3"]]);
        assert_eq!(clips[1].interval, TimeInterval::new(35.0, 85.0).unwrap());
    }

    #[test]
    fn corr_examples() {
        let a = frame(2, 2, &[0, 1, 2, 3]);
        let b = frame(2, 2, &[0, 2, 1, 3]);
        assert_eq!(corr2d(&a, &a).unwrap(), 1.0);
        let inv = frame(2, 2, &[255, 254, 253, 252]);
        assert_eq!(corr2d(&a, &inv).unwrap(), -1.0);
        // Centered: a = (-1.5,-.5,.5,1.5), b = (-1.5,.5,-.5,1.5); cov 4, var 5 each.
        assert!((corr2d(&a, &b).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(corr2d(&a, &frame(2, 2, &[7; 4])), Err(DataPrepError::ConstantFrame)));
        assert!(matches!(corr2d(&a, &frame(1, 4, &[0, 1, 2, 3])), Err(DataPrepError::FrameSizeMismatch(..))));
    }

    fn seq(frames: Vec<GrayFrame>) -> FrameSequence {
        FrameSequence {
            clip_id: "c".into(),
            fps: 30.0,
            frames,
        }
    }

    #[test]
    fn static_clip_dropped() {
        let f = frame(2, 2, &[0, 1, 2, 3]);
        let r = motion_filter(&seq(vec![f; 301]), 100, 0.8).unwrap();
        assert_eq!(r.sampled_frames, 4);
        assert_eq!(r.median_correlation, 1.0);
        assert_eq!(r.decision, MotionDecision::Drop);
    }

    #[test]
    fn noise_clip_kept() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frames: Vec<_> = (0..5)
            .map(|_| frame(64, 64, &(0..64 * 64).map(|_| rng.random::<u8>()).collect::<Vec<_>>()))
            .collect();
        let r = motion_filter(&seq(frames), 1, 0.8).unwrap();
        assert_eq!(r.decision, MotionDecision::Keep);
        assert!(r.median_correlation.abs() < 0.1);
    }

    #[test]
    fn median_at_threshold_is_kept() {
        let a = frame(2, 2, &[0, 1, 2, 3]);
        let b = frame(2, 2, &[0, 2, 1, 3]);
        let r = motion_filter(&seq(vec![a.clone(), b, a]), 1, 0.8).unwrap();
        assert_eq!(r.median_correlation, 0.8);
        assert_eq!(r.decision, MotionDecision::Keep);
    }

    #[test]
    fn too_few_frames() {
        let a = frame(2, 2, &[0, 1, 2, 3]);
        assert!(matches!(
            motion_filter(&seq(vec![a.clone(); 100]), 100, 0.8),
            Err(DataPrepError::TooFewFrames(1))
        ));
    }

    #[test]
    fn packed_and_pgm_round_trip() {
        let frames = vec![frame(2, 3, &[1, 2, 3, 4, 5, 6]), frame(2, 3, &[6, 5, 4, 3, 2, 1])];
        let mut buf = Vec::new();
        write_packed_frames(&mut buf, &frames).unwrap();
        assert_eq!(&buf[..4], b"FRM1");
        assert_eq!(buf.len(), 16 + 12);
        assert_eq!(read_packed_frames(buf.as_slice()).unwrap(), frames);
        assert!(read_packed_frames(&buf[..20]).is_err());

        let dir = tempfile::tempdir().unwrap();
        for (i, f) in frames.iter().enumerate().rev() {
            std::fs::write(dir.path().join(format!("clip_{}.pgm", i * 100)), encode_pgm(f)).unwrap();
        }
        std::fs::write(dir.path().join("other_0.pgm"), encode_pgm(&frames[0])).unwrap();
        assert_eq!(read_pgm_dir(dir.path(), "clip").unwrap(), frames);
    }

    #[test]
    fn pgm_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[9, 10]);
        assert_eq!(parse_pgm(&bytes).unwrap(), frame(1, 2, &[9, 10]));
        assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
    }

    #[test]
    fn clips_jsonl_round_trip() {
        let (t, a) = video(&[(0.0, 10.0), (200.0, 210.0)], 300.0);
        let clips = segment_video(&t, &a, 60.0, 15.0).unwrap();
        let mut buf = Vec::new();
        write_clips(&mut buf, &clips).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("\"start_ms\":185000"));
        assert_eq!(read_clips(buf.as_slice()).unwrap(), clips);
    }

    proptest! {
        #[test]
        fn correlation_symmetric_and_affine_invariant(
            a in proptest::collection::vec(-10.0f64..10.0, 16),
            b in proptest::collection::vec(-10.0f64..10.0, 16),
            scale in 0.01f64..100.0,
            shift in -50.0f64..50.0,
        ) {
            let ab = correlation(&a, &b).unwrap();
            prop_assert_eq!(ab, correlation(&b, &a).unwrap());
            let b2: Vec<f64> = b.iter().map(|x| scale * x + shift).collect();
            prop_assert!((correlation(&a, &b2).unwrap() - ab).abs() < 1e-9);
        }

        #[test]
        fn segmentation_covers_every_action(
            raw in proptest::collection::vec((0u32..3000, 1u32..120), 1..25),
        ) {
            let mut cues: Vec<(f64, f64)> = raw.iter().map(|&(s, d)| (s as f64, (s + d) as f64)).collect();
            cues.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (t, a) = video(&cues, 3200.0);
            let clips = segment_video(&t, &a, 60.0, 15.0).unwrap();
            let mut ids: Vec<String> = clips.iter().flat_map(|c| c.action_ids.clone()).collect();
            ids.sort();
            let mut expected: Vec<String> = a.iter().map(|m| m.id.clone()).collect();
            expected.sort();
            prop_assert_eq!(ids, expected);
            for c in &clips {
                let mut span: Option<TimeInterval> = None;
                for id in &c.action_ids {
                    let m = a.iter().find(|m| &m.id == id).unwrap();
                    let cue = t.cues[m.cue_index].interval;
                    prop_assert!(c.interval.contains(&cue));
                    span = Some(span.map_or(cue, |s| s.hull(&cue)));
                }
                let span = span.unwrap();
                if c.action_ids.len() > 1 {
                    prop_assert!(span.duration() <= 60.0);
                }
                prop_assert!(c.interval.duration() <= span.duration().max(60.0) + 30.0 + 1e-9);
            }
        }
    }
}
