//! Artificial trials with known generative structure: piecewise gesture
//! regimes, class-conditioned feature means and smooth end-effector paths.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::feature_file::{write_feature_matrix, FeatureKind};
use super::kinematics::{block, format_kinematics, select_kinematic_subset, KinematicFrame, BLOCK_LEN, PSM_OFFSET};
use super::manifest::{write_manifest, ManifestEntry};
use super::transcript::{GestureLabel, GestureTranscript};
use super::trial::{ColumnBlock, LabeledTrial};
use crate::data::KinematicSubset;
use crate::error::{Error, Result};
use crate::features::Modality;
use crate::nn::Tensor2;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryStyle {
    /// Class-dependent velocity plus a sinusoid; continuous across segments.
    Ramp,
    /// Constant class-dependent position inside each segment.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub subjects: usize,
    pub trials_per_subject: usize,
    /// Minimum trial length; segments are appended until it is reached.
    pub min_frames: usize,
    pub segment_len: (usize, usize),
    pub feature_dim: usize,
    pub noise: f64,
    pub subject_shift: f64,
    pub separation: f64,
    pub trajectory: TrajectoryStyle,
    /// Emit K14 kinematic features (positions in metres plus the class
    /// velocities, the class signal in gripper slots) instead of the bare signal.
    pub kinematic_layout: bool,
    /// Seeds everything shared by all subjects (class means, velocities).
    pub world_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 6,
            subjects: 5,
            trials_per_subject: 4,
            min_frames: 300,
            segment_len: (45, 90),
            feature_dim: 14,
            noise: 0.1,
            subject_shift: 0.1,
            separation: 1.0,
            trajectory: TrajectoryStyle::Ramp,
            kinematic_layout: true,
            world_seed: 17,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.classes > 15 {
            return Err(Error::Config(format!(
                "synthetic class count {} outside 1..=15",
                self.classes
            )));
        }
        if self.segment_len.0 == 0 || self.segment_len.0 > self.segment_len.1 {
            return Err(Error::Config(format!(
                "bad segment length range {:?}",
                self.segment_len
            )));
        }
        if self.feature_dim == 0 || self.subjects == 0 || self.trials_per_subject == 0 {
            return Err(Error::Config("synthetic corpus dimensions must be positive".into()));
        }
        if self.noise < 0.0 || self.subject_shift < 0.0 {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        Ok(())
    }
}

/// Parameters shared by every synthetic subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    pub class_means: Tensor2,
    /// Per-class velocity in mm per frame, 6 coordinates.
    pub class_velocity: Tensor2,
    /// Per-class position offset in mm for the constant style.
    pub class_offset: Tensor2,
    pub base: [f64; 6],
}

impl SynthWorld {
    pub fn new(config: &SynthConfig) -> Self {
        let mut rng = rng_for(config.world_seed, &[0]);
        let mut normal = |rows: usize, cols: usize, scale: f64| {
            let data = (0..rows * cols)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Tensor2::from_vec(rows, cols, data).expect("sized")
        };
        let class_means = normal(config.classes, config.feature_dim, config.separation);
        let class_velocity = normal(config.classes, 6, 0.15);
        let class_offset = normal(config.classes, 6, 20.0);
        Self {
            class_means,
            class_velocity,
            class_offset,
            base: [60.0, -40.0, 90.0, -70.0, 50.0, 110.0],
        }
    }
}

/// Generative ground truth of one synthetic trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    /// Class index (0-based) of every frame.
    pub classes: Vec<usize>,
    /// (start, end inclusive, class) per segment.
    pub segments: Vec<(usize, usize, usize)>,
    pub subject_shift: Vec<f64>,
    /// Class signal before placement into kinematic slots, `frames × feature_dim`.
    pub signal: Tensor2,
}

/// PSM columns receiving signal values: both grippers (inside K14), then
/// the angular velocities.
fn signal_slots() -> Vec<usize> {
    let mut slots: Vec<usize> = (0..2)
        .map(|arm| PSM_OFFSET + arm * BLOCK_LEN + block::GRIPPER)
        .collect();
    for arm in 0..2 {
        let b = PSM_OFFSET + arm * BLOCK_LEN;
        slots.extend((0..3).map(|k| b + block::ANGULAR_VELOCITY + k));
    }
    slots
}

/// Kinematic sample with identity rotations, PSM positions equal to `pos`
/// (mm) in metres, linear velocities from the step `prev → pos` in m/s at
/// 30 Hz, and `signal` spread over the signal slots.
fn kinematic_frame(signal: &[f64], pos: &[f64], prev: &[f64], slots: &[usize]) -> KinematicFrame {
    let mut k = KinematicFrame::zeros();
    for b in 0..4 {
        for j in 0..3 {
            k.0[b * BLOCK_LEN + block::ROTATION + 4 * j] = 1.0;
        }
    }
    for arm in 0..2 {
        for j in 0..3 {
            let b = PSM_OFFSET + arm * BLOCK_LEN;
            k.0[b + block::POSITION + j] = pos[arm * 3 + j] / 1000.0;
            k.0[b + block::LINEAR_VELOCITY + j] = (pos[arm * 3 + j] - prev[arm * 3 + j]) * 30.0 / 1000.0;
        }
    }
    for (s, &col) in slots.iter().enumerate() {
        k.0[col] = signal[s % signal.len()];
    }
    k
}

pub fn subject_name(s: usize) -> String {
    // JIGSAWS-style single letters, B onwards.
    ((b'B' + (s % 25) as u8) as char).to_string()
}

pub fn synthesize_trial(
    config: &SynthConfig,
    world: &SynthWorld,
    subject: usize,
    trial: usize,
    seed: u64,
) -> Result<(LabeledTrial, SynthTruth)> {
    config.validate()?;
    let d = config.feature_dim;
    let mut srng = rng_for(config.world_seed, &[1, subject as u64]);
    let subject_shift: Vec<f64> = (0..d)
        .map(|_| config.subject_shift * srng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut rng = rng_for(seed, &[subject as u64, trial as u64]);
    let mut class = rng.random_range(0..config.classes);
    let mut segments = Vec::new();
    let mut t = 0;
    while t < config.min_frames.max(1) {
        let len = rng.random_range(config.segment_len.0..=config.segment_len.1);
        segments.push((t, t + len - 1, class));
        t += len;
        class = (class + 1) % config.classes;
    }
    let frames = t;
    let classes: Vec<usize> = segments
        .iter()
        .flat_map(|&(s, e, c)| std::iter::repeat_n(c, e - s + 1))
        .collect();

    let mut signal = Tensor2::zeros(frames, d);
    for (f, &c) in classes.iter().enumerate() {
        let mean = world.class_means.row(c);
        for (j, v) in signal.row_mut(f).iter_mut().enumerate() {
            *v = mean[j] + subject_shift[j] + config.noise * rng.sample::<f64, _>(StandardNormal);
        }
    }

    let jitter: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
    let phase: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..TAU)).collect();
    let mut trajectory = Tensor2::zeros(frames, 6);
    let mut pos: Vec<f64> = (0..6).map(|k| world.base[k] + jitter[k]).collect();
    for (f, &c) in classes.iter().enumerate() {
        let row = trajectory.row_mut(f);
        match config.trajectory {
            TrajectoryStyle::Ramp => {
                for k in 0..6 {
                    row[k] = pos[k] + 1.5 * (TAU * f as f64 / 90.0 + phase[k]).sin();
                    pos[k] += world.class_velocity[(c, k)];
                }
            }
            TrajectoryStyle::Constant => {
                for k in 0..6 {
                    row[k] = world.base[k] + world.class_offset[(c, k)];
                }
            }
        }
    }

    let features = if config.kinematic_layout {
        let slots = signal_slots();
        let rows: Vec<Vec<f64>> = (0..frames)
            .map(|f| {
                let prev = trajectory.row(f.saturating_sub(1));
                let k = kinematic_frame(signal.row(f), trajectory.row(f), prev, &slots);
                select_kinematic_subset(&k, KinematicSubset::K14)
            })
            .collect();
        Tensor2::from_rows(&rows)?
    } else {
        signal.clone()
    };
    let width = features.cols();
    let lt = LabeledTrial {
        id: format!("Synth_{}{:03}", subject_name(subject), trial + 1),
        subject: subject_name(subject),
        features,
        labels: classes.iter().map(|&c| GestureLabel::Gesture(c as u8 + 1)).collect(),
        trajectory,
        blocks: vec![ColumnBlock {
            modality: Modality::Kinematic(KinematicSubset::K14),
            start: 0,
            len: width,
        }],
    };
    lt.validate()?;
    Ok((
        lt,
        SynthTruth {
            classes,
            segments,
            subject_shift,
            signal,
        },
    ))
}

pub fn synthesize_corpus(config: &SynthConfig, seed: u64) -> Result<Vec<(LabeledTrial, SynthTruth)>> {
    let world = SynthWorld::new(config);
    let mut out = Vec::with_capacity(config.subjects * config.trials_per_subject);
    for s in 0..config.subjects {
        for t in 0..config.trials_per_subject {
            out.push(synthesize_trial(config, &world, s, t, seed)?);
        }
    }
    Ok(out)
}

/// Feature widths of the sidecar files written by [`write_jigsaws_corpus`].
pub const SYNTH_CONTEXT_DIM: usize = 3;
pub const SYNTH_SPATIAL_DIM: usize = 8;

/// Writes a corpus in the on-disk dataset layout: kinematics text,
/// transcripts, context (CSV) and spatial (binary) feature sidecars, and a
/// manifest. Returns the manifest path.
///
/// Kinematic rows carry identity rotations, PSM positions equal to the
/// trajectory in metres, and the synthetic features in the PSM velocity,
/// gripper and angular-velocity slots.
pub fn write_jigsaws_corpus(
    dir: &Path,
    config: &SynthConfig,
    corpus: &[(LabeledTrial, SynthTruth)],
    seed: u64,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for sub in ["kinematics", "transcriptions", "context", "spatial"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut wrng = rng_for(config.world_seed, &[2]);
    let mut side = |dim: usize| {
        let data = (0..config.classes * dim)
            .map(|_| wrng.sample::<f64, _>(StandardNormal))
            .collect();
        Tensor2::from_vec(config.classes, dim, data).expect("sized")
    };
    let context_means = side(SYNTH_CONTEXT_DIM);
    let spatial_means = side(SYNTH_SPATIAL_DIM);

    let slots = signal_slots();

    let mut entries = Vec::new();
    for (i, (trial, truth)) in corpus.iter().enumerate() {
        let mut rng = rng_for(seed, &[3, i as u64]);
        let frames: Vec<KinematicFrame> = (0..trial.frames())
            .map(|f| {
                let prev = trial.trajectory.row(f.saturating_sub(1));
                kinematic_frame(truth.signal.row(f), trial.trajectory.row(f), prev, &slots)
            })
            .collect();
        let mut sidecar = |means: &Tensor2| {
            // One spare trailing row, as real extractor output often has.
            let rows = trial.frames() + 1;
            let mut m = Tensor2::zeros(rows, means.cols());
            for r in 0..rows {
                let c = truth.classes[r.min(trial.frames() - 1)];
                for (j, v) in m.row_mut(r).iter_mut().enumerate() {
                    *v = means[(c, j)] + config.noise * rng.sample::<f64, _>(StandardNormal);
                }
            }
            m
        };
        let context = sidecar(&context_means);
        let spatial = sidecar(&spatial_means);

        let kin_rel = PathBuf::from("kinematics").join(format!("{}.txt", trial.id));
        let tr_rel = PathBuf::from("transcriptions").join(format!("{}.txt", trial.id));
        let c_rel = PathBuf::from("context").join(format!("{}.csv", trial.id));
        let v_rel = PathBuf::from("spatial").join(format!("{}.bin", trial.id));
        let write = |rel: &Path, text: String| {
            let p = dir.join(rel);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write(&kin_rel, format_kinematics(&frames))?;
        write(&tr_rel, GestureTranscript::from_frame_labels(&trial.labels).to_text())?;
        let mut csv_text = String::new();
        for r in 0..context.rows() {
            let row: Vec<String> = context.row(r).iter().map(|v| format!("{v:e}")).collect();
            csv_text.push_str(&row.join(","));
            csv_text.push('\n');
        }
        write(&c_rel, csv_text)?;
        write_feature_matrix(dir.join(&v_rel), &spatial)?;

        entries.push(ManifestEntry {
            trial_id: trial.id.clone(),
            subject: trial.subject.clone(),
            kinematics: kin_rel,
            transcript: tr_rel,
            features: vec![(FeatureKind::C, c_rel), (FeatureKind::VSpatial, v_rel)],
        });
    }
    let manifest = dir.join("manifest.txt");
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}
