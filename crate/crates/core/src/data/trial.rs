use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::feature_file::FeatureMatrix;
use super::kinematics::{select_kinematic_subset, KinematicFrame};
use super::transcript::{GestureLabel, GestureTranscript};
use crate::error::{Error, Result};
use crate::features::{fuse, FeatureSelection, Modality};
use crate::nn::Tensor2;

/// Feature matrices may carry up to this many extra trailing frames.
pub const MAX_EXTRA_FEATURE_FRAMES: usize = 2;

/// Named column range of a fused feature matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnBlock {
    pub modality: Modality,
    pub start: usize,
    pub len: usize,
}

impl ColumnBlock {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// A fully aligned trial: fused features, labels and trajectory targets
/// share one frame axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrial {
    pub id: String,
    pub subject: String,
    pub features: Tensor2,
    pub labels: Vec<GestureLabel>,
    /// PSM-left xyz then PSM-right xyz, millimetres.
    pub trajectory: Tensor2,
    pub blocks: Vec<ColumnBlock>,
}

impl LabeledTrial {
    pub fn frames(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn block(&self, modality: Modality) -> Option<&ColumnBlock> {
        self.blocks.iter().find(|b| b.modality == modality)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.labels.len();
        if self.features.rows() != t || self.trajectory.rows() != t {
            return Err(Error::Alignment(format!(
                "trial {}: {} feature rows, {} labels, {} trajectory rows",
                self.id,
                self.features.rows(),
                t,
                self.trajectory.rows()
            )));
        }
        if self.trajectory.cols() != 6 {
            return Err(Error::Data(format!(
                "trial {}: trajectory has {} columns, expected 6",
                self.id,
                self.trajectory.cols()
            )));
        }
        if !self.trajectory.is_finite() {
            return Err(Error::Data(format!("trial {}: non-finite trajectory value", self.id)));
        }
        let width: usize = self.blocks.iter().map(|b| b.len).sum();
        if width != self.features.cols() {
            return Err(Error::Data(format!(
                "trial {}: column blocks cover {width} of {} columns",
                self.id,
                self.features.cols()
            )));
        }
        Ok(())
    }
}

/// Fuses the selected modalities frame by frame and attaches labels and
/// trajectory targets.
pub fn align_and_label(
    id: &str,
    subject: &str,
    kin: &[KinematicFrame],
    transcript: &GestureTranscript,
    feature_matrices: &[FeatureMatrix],
    selection: &FeatureSelection,
) -> Result<LabeledTrial> {
    let frames = kin.len();
    let mut sources: Vec<(Modality, &FeatureMatrix)> = Vec::new();
    for kind in selection.extras() {
        let m = feature_matrices
            .iter()
            .find(|m| m.kind == kind)
            .ok_or_else(|| Error::Data(format!("trial {id}: no {kind} feature matrix supplied")))?;
        if m.frames() < frames || m.frames() > frames + MAX_EXTRA_FEATURE_FRAMES {
            return Err(Error::Alignment(format!(
                "trial {id}: {kind} has {} frames but kinematics has {frames}",
                m.frames()
            )));
        }
        sources.push((Modality::Extra(kind), m));
    }

    let mut blocks = Vec::new();
    let mut start = 0;
    for m in selection.modalities() {
        let len = match m {
            Modality::Kinematic(k) => k.width(),
            Modality::Extra(_) => {
                let (_, fm) = sources.iter().find(|(s, _)| s == m).expect("collected above");
                fm.dim()
            }
        };
        blocks.push(ColumnBlock {
            modality: *m,
            start,
            len,
        });
        start += len;
    }

    let mut data = Vec::with_capacity(frames * start);
    let mut traj = Vec::with_capacity(frames * 6);
    for (f, frame) in kin.iter().enumerate() {
        let kin_part = selection.kinematics().map(|k| select_kinematic_subset(frame, k));
        let mut parts: Vec<(Modality, &[f64])> = Vec::new();
        if let (Some(k), Some(v)) = (selection.kinematics(), kin_part.as_ref()) {
            parts.push((Modality::Kinematic(k), v));
        }
        for (m, fm) in &sources {
            parts.push((*m, fm.values.row(f)));
        }
        data.extend(fuse(&parts)?);
        traj.extend_from_slice(&frame.psm_positions_mm());
    }

    let last_end = transcript.intervals().last().map_or(0, |iv| iv.end);
    if last_end > frames {
        log::warn!("trial {id}: transcript runs to frame {last_end} beyond {frames} kinematic frames");
    }
    let trial = LabeledTrial {
        id: id.to_string(),
        subject: subject.to_string(),
        features: Tensor2::from_vec(frames, start, data)?,
        labels: transcript.frame_labels(frames),
        trajectory: Tensor2::from_vec(frames, 6, traj)?,
        blocks,
    };
    trial.validate()?;
    Ok(trial)
}

/// Keeps frames 0, factor, 2·factor, ... of every per-frame array.
pub fn downsample(trial: &LabeledTrial, factor: usize) -> LabeledTrial {
    let factor = factor.max(1);
    let idx: Vec<usize> = (0..trial.frames()).step_by(factor).collect();
    LabeledTrial {
        id: trial.id.clone(),
        subject: trial.subject.clone(),
        features: trial.features.select_rows(idx.iter().copied()),
        labels: idx.iter().map(|&i| trial.labels[i]).collect(),
        trajectory: trial.trajectory.select_rows(idx.iter().copied()),
        blocks: trial.blocks.clone(),
    }
}

/// Index of each gesture class in the model's output head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    classes: Vec<u8>,
}

impl LabelMap {
    /// Collects the gestures present in `trials`, in ascending id order.
    pub fn from_trials<'a>(trials: impl IntoIterator<Item = &'a LabeledTrial>, capacity: usize) -> Result<Self> {
        let mut classes: Vec<u8> = trials
            .into_iter()
            .flat_map(|t| t.labels.iter())
            .filter_map(|l| match l {
                GestureLabel::Gesture(g) => Some(*g),
                GestureLabel::Unlabeled => None,
            })
            .collect();
        classes.sort_unstable();
        classes.dedup();
        Self::new(classes, capacity)
    }

    pub fn new(classes: Vec<u8>, capacity: usize) -> Result<Self> {
        if classes.len() > capacity {
            return Err(Error::Config(format!(
                "{} gesture classes do not fit an output head of {capacity}",
                classes.len()
            )));
        }
        for &g in &classes {
            GestureLabel::gesture(g)?;
        }
        Ok(Self { classes })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, label: GestureLabel) -> Option<usize> {
        match label {
            GestureLabel::Gesture(g) => self.classes.iter().position(|&c| c == g),
            GestureLabel::Unlabeled => None,
        }
    }

    /// Head outputs beyond the known classes decode as Unlabeled.
    pub fn label_of(&self, index: usize) -> GestureLabel {
        self.classes
            .get(index)
            .map_or(GestureLabel::Unlabeled, |&g| GestureLabel::Gesture(g))
    }

    pub fn encode(&self, labels: &[GestureLabel]) -> Vec<Option<usize>> {
        labels.iter().map(|&l| self.index_of(l)).collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<GestureLabel> {
        indices.iter().map(|&i| self.label_of(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::transcript::parse_transcript_str;
    use crate::data::FeatureKind;
    use std::path::Path;

    fn kin(n: usize) -> Vec<KinematicFrame> {
        (0..n)
            .map(|i| {
                let mut f = KinematicFrame::zeros();
                for (c, v) in f.0.iter_mut().enumerate() {
                    *v = (i * 100 + c) as f64 * 1e-3;
                }
                f
            })
            .collect()
    }

    fn transcript() -> GestureTranscript {
        parse_transcript_str("1 3 G1\n5 6 G2", Path::new("t")).unwrap()
    }

    fn matrix(kind: FeatureKind, rows: usize, cols: usize) -> FeatureMatrix {
        let data = (0..rows * cols).map(|v| v as f64).collect();
        FeatureMatrix {
            kind,
            values: Tensor2::from_vec(rows, cols, data).unwrap(),
        }
    }

    #[test]
    fn k14_only_has_width_14() {
        let sel: FeatureSelection = "K14".parse().unwrap();
        let t = align_and_label("a", "s", &kin(6), &transcript(), &[], &sel).unwrap();
        assert_eq!(t.dim(), 14);
        assert_eq!(t.labels[3], GestureLabel::Unlabeled);
        assert_eq!(t.labels[4], GestureLabel::Gesture(2));
        assert!((t.trajectory[(1, 0)] - 138.0).abs() < 1e-9);
    }

    #[test]
    fn fused_width_and_truncation() {
        let sel: FeatureSelection = "K14+C+V_Spatial".parse().unwrap();
        let mats = [matrix(FeatureKind::VSpatial, 8, 5), matrix(FeatureKind::C, 6, 3)];
        let t = align_and_label("a", "s", &kin(6), &transcript(), &mats, &sel).unwrap();
        assert_eq!(t.dim(), 14 + 3 + 5);
        assert_eq!(t.block(Modality::Extra(FeatureKind::C)).unwrap().range(), 14..17);
        assert_eq!(t.features.row(1)[14..17], [3.0, 4.0, 5.0]);
    }

    #[test]
    fn misaligned_lengths_rejected() {
        let sel: FeatureSelection = "K14+C".parse().unwrap();
        for rows in [5, 9] {
            let err = align_and_label(
                "a",
                "s",
                &kin(6),
                &transcript(),
                &[matrix(FeatureKind::C, rows, 2)],
                &sel,
            )
            .unwrap_err();
            assert!(matches!(err, Error::Alignment(ref m) if m.contains(&rows.to_string())));
        }
    }

    #[test]
    fn downsample_keeps_phase_zero() {
        let sel: FeatureSelection = "K38".parse().unwrap();
        let t = align_and_label("a", "s", &kin(30), &GestureTranscript::default(), &[], &sel).unwrap();
        let d = downsample(&t, 3);
        assert_eq!(d.frames(), 10);
        assert_eq!(d.features.row(2), t.features.row(6));
        assert_eq!(downsample(&t, 1), t);
    }

    #[test]
    fn label_map() {
        let m = LabelMap::new(vec![1, 3, 8], 10).unwrap();
        assert_eq!(m.index_of(GestureLabel::Gesture(8)), Some(2));
        assert_eq!(m.index_of(GestureLabel::Unlabeled), None);
        assert_eq!(m.label_of(1), GestureLabel::Gesture(3));
        assert_eq!(m.label_of(7), GestureLabel::Unlabeled);
        assert!(LabelMap::new((1..=11).collect(), 10).is_err());
    }
}
