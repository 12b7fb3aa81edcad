use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_GESTURE: u8 = 15;

/// A gesture G1..G15, or a frame outside every annotated interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GestureLabel {
    Gesture(u8),
    Unlabeled,
}

impl GestureLabel {
    pub fn gesture(id: u8) -> Result<Self> {
        if (1..=MAX_GESTURE).contains(&id) {
            Ok(GestureLabel::Gesture(id))
        } else {
            Err(Error::Data(format!(
                "gesture G{id} is outside the G1..G{MAX_GESTURE} vocabulary"
            )))
        }
    }

    pub fn is_labeled(self) -> bool {
        matches!(self, GestureLabel::Gesture(_))
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GestureLabel::Gesture(g) => write!(f, "G{g}"),
            GestureLabel::Unlabeled => f.write_str("-"),
        }
    }
}

impl FromStr for GestureLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "-" {
            return Ok(GestureLabel::Unlabeled);
        }
        let id = s
            .strip_prefix('G')
            .and_then(|n| n.parse::<u8>().ok())
            .ok_or_else(|| Error::Data(format!("unknown gesture label {s:?}")))?;
        GestureLabel::gesture(id)
    }
}

/// One annotated interval, 1-based inclusive frame numbers as in the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
    pub label: GestureLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GestureTranscript {
    intervals: Vec<Interval>,
}

impl GestureTranscript {
    /// Sorts by start and validates ordering and disjointness.
    pub fn new(mut intervals: Vec<Interval>) -> Result<Self> {
        intervals.sort_by_key(|iv| iv.start);
        for iv in &intervals {
            if iv.start > iv.end {
                return Err(Error::Data(format!(
                    "interval {}..{} starts after it ends",
                    iv.start, iv.end
                )));
            }
        }
        for w in intervals.windows(2) {
            if w[1].start <= w[0].end {
                return Err(Error::Data(format!(
                    "overlapping intervals {}..{} and {}..{}",
                    w[0].start, w[0].end, w[1].start, w[1].end
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    /// Per-frame labels for `frames` frames (0-based indexing).
    pub fn frame_labels(&self, frames: usize) -> Vec<GestureLabel> {
        let mut out = vec![GestureLabel::Unlabeled; frames];
        for iv in &self.intervals {
            let lo = iv.start.saturating_sub(1);
            let hi = iv.end.min(frames);
            for slot in out.iter_mut().take(hi).skip(lo) {
                *slot = iv.label;
            }
        }
        out
    }

    /// Run-length encodes per-frame labels back into 1-based intervals.
    pub fn from_frame_labels(labels: &[GestureLabel]) -> Self {
        let mut intervals = Vec::new();
        let mut i = 0;
        while i < labels.len() {
            let mut j = i;
            while j + 1 < labels.len() && labels[j + 1] == labels[i] {
                j += 1;
            }
            if labels[i].is_labeled() {
                intervals.push(Interval {
                    start: i + 1,
                    end: j + 1,
                    label: labels[i],
                });
            }
            i = j + 1;
        }
        Self { intervals }
    }

    pub fn to_text(&self) -> String {
        self.intervals
            .iter()
            .map(|iv| format!("{} {} {}\n", iv.start, iv.end, iv.label))
            .collect()
    }
}

pub fn parse_transcript_str(text: &str, path: &Path) -> Result<GestureTranscript> {
    let mut intervals = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        if toks.len() != 3 {
            return Err(perr(format!("expected \"start end Gk\", got {line:?}")));
        }
        let start = toks[0]
            .parse()
            .map_err(|_| perr(format!("bad start frame {:?}", toks[0])))?;
        let end = toks[1]
            .parse()
            .map_err(|_| perr(format!("bad end frame {:?}", toks[1])))?;
        let label: GestureLabel = toks[2].parse()?;
        if !label.is_labeled() {
            return Err(Error::Data(format!("line {}: interval without a gesture", i + 1)));
        }
        intervals.push(Interval { start, end, label });
    }
    GestureTranscript::new(intervals)
}

pub fn parse_transcript(path: impl AsRef<Path>) -> Result<GestureTranscript> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_transcript_str(&text, path)
}
