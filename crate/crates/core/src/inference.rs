//! Window-at-a-time inference with a trained pipeline.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{align_and_label, FeatureMatrix, GestureLabel, GestureTranscript, KinematicFrame, LabelMap};
use crate::error::{Error, Result};
use crate::experiment::{Checkpoint, Preprocessor, TrainConfig};
use crate::nn::{Parameterized, Real, Tensor2};
use crate::prediction::{end_to_end_infer, Predictor, TRAJ_DIM};
use crate::recognition::Recognizer;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Output for one observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub recognized: Vec<GestureLabel>,
    pub predicted: Vec<GestureLabel>,
    /// Future PSM positions in mm, one row per prediction step.
    pub trajectory: Vec<[f64; TRAJ_DIM]>,
    /// Wall time from raw frames to outputs.
    pub latency_ms: f64,
}

/// Raw model outputs: recognized and predicted class indices plus the
/// absolute trajectory.
pub type RawOutput = (Vec<usize>, Vec<usize>, Tensor2);

pub struct Engine {
    pub config: TrainConfig,
    pub labels: LabelMap,
    pub preprocessor: Option<Preprocessor>,
    pub precision: Precision,
    rec64: Recognizer,
    pred64: Predictor,
    rec32: Recognizer<f32>,
    pred32: Predictor<f32>,
}

fn run_typed<T: Real>(
    features: &Tensor2,
    origin: &[f64; TRAJ_DIM],
    rec: &Recognizer<T>,
    pred: &Predictor<T>,
) -> Result<RawOutput> {
    let x = features.cast::<T>();
    let o = origin.map(T::of);
    let out = end_to_end_infer(&x, &o, rec, pred)?;
    Ok((out.obs_labels, out.pred_labels, out.trajectory.cast()))
}

impl Engine {
    pub fn from_checkpoint(ck: Checkpoint, precision: Precision) -> Self {
        Self {
            rec32: ck.recognizer.cast(),
            pred32: ck.predictor.cast(),
            rec64: ck.recognizer,
            pred64: ck.predictor,
            config: ck.config,
            labels: ck.labels,
            preprocessor: Some(ck.preprocessor),
            precision,
        }
    }

    /// Freshly initialised models of the configured shape, for latency
    /// measurements without a trained checkpoint.
    pub fn untrained(config: TrainConfig, d_in: usize, precision: Precision) -> Result<Self> {
        config.validate()?;
        let rec = Recognizer::new(config.recognizer(d_in), &mut rng_for(config.seed, &[u64::MAX, 0]))?;
        let pred = Predictor::new(config.predictor(d_in), &mut rng_for(config.seed, &[u64::MAX, 1]))?;
        let classes: Vec<u8> = (1..=config.fc_dim.min(15) as u8).collect();
        Ok(Self {
            labels: LabelMap::new(classes, config.fc_dim)?,
            rec32: rec.cast(),
            pred32: pred.cast(),
            rec64: rec,
            pred64: pred,
            config,
            preprocessor: None,
            precision,
        })
    }

    pub fn d_in(&self) -> usize {
        self.rec64.config.d_in
    }

    pub fn param_count(&self) -> usize {
        self.rec64.param_count() + self.pred64.param_count()
    }

    /// Fuses and normalizes raw frames. Returns model-ready features and
    /// the trajectory origin (last observed grid frame).
    pub fn prepare_window(
        &self,
        kin: &[KinematicFrame],
        extras: &[FeatureMatrix],
    ) -> Result<(Tensor2, [f64; TRAJ_DIM])> {
        let w = self.config.w_obs;
        if kin.len() != w {
            return Err(Error::Contract(format!(
                "window has {} frames, expected {w}",
                kin.len()
            )));
        }
        let transcript = GestureTranscript::from_frame_labels(&vec![GestureLabel::Unlabeled; w]);
        let trial = align_and_label("window", "", kin, &transcript, extras, &self.config.features)?;
        let trial = match &self.preprocessor {
            Some(p) => p.apply(&trial)?,
            None => trial,
        };
        let last = (w - 1) / self.config.downsample * self.config.downsample;
        let origin = trial.trajectory.row(last).try_into().expect("6 columns");
        Ok((trial.features, origin))
    }

    /// Runs both models on prepared features.
    pub fn run(&self, features: &Tensor2, origin: &[f64; TRAJ_DIM]) -> Result<RawOutput> {
        match self.precision {
            Precision::F32 => run_typed(features, origin, &self.rec32, &self.pred32),
            Precision::F64 => run_typed(features, origin, &self.rec64, &self.pred64),
        }
    }

    /// Full path from raw frames to labelled outputs, timed.
    pub fn infer(&self, kin: &[KinematicFrame], extras: &[FeatureMatrix]) -> Result<WindowResult> {
        let t0 = Instant::now();
        let (x, origin) = self.prepare_window(kin, extras)?;
        let (obs, pred, traj) = self.run(&x, &origin)?;
        let latency_ms = t0.elapsed().as_secs_f64() * 1e3;
        Ok(WindowResult {
            recognized: self.labels.decode(&obs),
            predicted: self.labels.decode(&pred),
            trajectory: (0..traj.rows())
                .map(|r| traj.row(r).try_into().expect("6 columns"))
                .collect(),
            latency_ms,
        })
    }
}
