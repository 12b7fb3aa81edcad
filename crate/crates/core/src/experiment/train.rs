//! Window preparation, mini-batch training loops and evaluation passes.

use rand::seq::SliceRandom;

use super::config::{GestureSource, TrainConfig};
use crate::data::{tumbling_windows, LabelMap, LabeledTrial, Window};
use crate::error::{Error, Result};
use crate::metrics::{GestureAccumulator, TrajectoryAccumulator};
use crate::nn::{Adam, Mode, Parameterized, Tensor2};
use crate::prediction::{multitask_loss, DecodeMode, Predictor, TRAJ_DIM};
use crate::recognition::{recognition_loss, Recognizer};
use crate::seed::rng_for;

/// Seed-path tags; every random stream is `rng_for(seed, [fold, tag, ...])`.
pub mod stream {
    pub const RECOGNIZER_INIT: u64 = 0;
    pub const PREDICTOR_INIT: u64 = 1;
    pub const RECOGNIZER_SHUFFLE: u64 = 2;
    pub const RECOGNIZER_DROPOUT: u64 = 3;
    pub const PREDICTOR_SHUFFLE: u64 = 4;
    pub const PREDICTOR_DROPOUT: u64 = 5;
}

/// One observation window prepared for the recognizer.
#[derive(Debug, Clone)]
pub struct RecSample {
    pub features: Tensor2,
    pub labels: Vec<Option<usize>>,
}

/// One window with a full horizon, prepared for the predictor. The
/// recognizer outputs are frozen at construction time.
#[derive(Debug, Clone)]
pub struct PredSample {
    pub trial_id: String,
    pub features: Tensor2,
    /// Features on the downsampled grid.
    pub raw: Tensor2,
    pub observed: Vec<Option<usize>>,
    pub origin: [f64; TRAJ_DIM],
    pub target_labels: Vec<Option<usize>>,
    pub target_traj: Tensor2,
    pub enc_hidden: Tensor2,
    pub recognized: Vec<Option<usize>>,
}

impl PredSample {
    pub fn memory_gestures(&self, source: GestureSource) -> &[Option<usize>] {
        match source {
            GestureSource::GroundTruth => &self.observed,
            GestureSource::Recognized => &self.recognized,
        }
    }
}

/// Tumbling windows of every trial, plus the ids of trials too short for
/// a single window.
pub fn cut_windows(trials: &[LabeledTrial], cfg: &TrainConfig) -> Result<(Vec<Window>, Vec<String>)> {
    let mut windows = Vec::new();
    let mut short = Vec::new();
    for t in trials {
        let batch = tumbling_windows(t, cfg.w_obs, cfg.w_pred, cfg.downsample)?;
        if batch.is_empty() {
            short.push(t.id.clone());
        }
        windows.extend(batch.windows);
    }
    Ok((windows, short))
}

pub fn recognition_samples(windows: &[Window], labels: &LabelMap) -> Vec<RecSample> {
    windows
        .iter()
        .map(|w| RecSample {
            features: w.features.clone(),
            labels: labels.encode(&w.labels),
        })
        .collect()
}

/// Predictor samples for every window with a horizon, carrying the frozen
/// recognizer's hidden states and labels.
pub fn prediction_samples(
    windows: &[Window],
    labels: &LabelMap,
    factor: usize,
    recognizer: &Recognizer,
) -> Result<Vec<PredSample>> {
    windows
        .iter()
        .filter_map(|w| w.horizon.as_ref().map(|h| (w, h)))
        .map(|(w, h)| {
            let (out, _) = recognizer.encoder_forward(&w.features, &mut Mode::Eval)?;
            Ok(PredSample {
                trial_id: w.trial_id.clone(),
                features: w.features.clone(),
                raw: w.features_at_rate(factor),
                observed: labels.encode(&w.labels),
                origin: w.last_position(factor),
                target_labels: labels.encode(&h.labels),
                target_traj: h.trajectory.clone(),
                recognized: out.logits.argmax_rows().into_iter().map(Some).collect(),
                enc_hidden: out.hidden,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Recognizer,
    Predictor,
}

/// Summary passed to the per-epoch callback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub stage: Stage,
    pub epoch: usize,
    /// Mean training loss over the epoch's windows.
    pub loss: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

fn check_finite<M: Parameterized<f64>>(model: &M, loss: f64, stage: Stage, epoch: usize, batch: usize) -> Result<()> {
    if !loss.is_finite() || !model.grads_finite() {
        return Err(Error::Numeric(format!(
            "{stage:?} training produced a non-finite loss or gradient at epoch {epoch}, batch {batch}"
        )));
    }
    Ok(())
}

fn batches(n: usize, cfg: &TrainConfig, fold: u64, tag: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(cfg.seed, &[fold, tag, epoch as u64]));
    order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect()
}

/// Trains the recognizer with per-frame cross-entropy. `on_epoch` runs
/// after every epoch and may stop training early.
pub fn train_recognizer(
    model: &mut Recognizer,
    samples: &[RecSample],
    cfg: &TrainConfig,
    fold: u64,
    on_epoch: &mut dyn FnMut(&EpochReport, &Recognizer) -> Control,
) -> Result<Adam> {
    let mut adam = Adam::new(model, cfg.adam());
    if samples.is_empty() {
        return Err(Error::Config("no training windows for the recognizer".into()));
    }
    model.zero_grad();
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for (b, batch) in batches(samples.len(), cfg, fold, stream::RECOGNIZER_SHUFFLE, epoch)
            .iter()
            .enumerate()
        {
            let mut rng = rng_for(cfg.seed, &[fold, stream::RECOGNIZER_DROPOUT, epoch as u64, b as u64]);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &samples[i];
                if s.labels.iter().all(Option::is_none) {
                    continue;
                }
                let mut mode = Mode::Train {
                    dropout: cfg.dropout,
                    rng: &mut rng,
                };
                let (out, cache) = model.encoder_forward(&s.features, &mut mode)?;
                let mut lg = recognition_loss(&out.logits, &s.labels)?;
                total += lg.loss;
                lg.grad.scale(scale);
                model.backward(&cache, &lg.grad);
            }
            check_finite(model, total, Stage::Recognizer, epoch, b)?;
            let lr = cfg.learning_rate(adam.steps_taken() + 1)?;
            adam.step(model, lr);
            model.zero_grad();
        }
        let report = EpochReport {
            stage: Stage::Recognizer,
            epoch,
            loss: total / samples.len() as f64,
            steps: adam.steps_taken(),
        };
        log::info!("fold {fold} recognizer epoch {epoch}: loss {:.4}", report.loss);
        if on_epoch(&report, model) == Control::Stop {
            break;
        }
    }
    Ok(adam)
}

/// Trains the predictor with teacher forcing on the multitask loss. The
/// recognizer is frozen: its hidden states are taken from the samples.
pub fn train_predictor(
    model: &mut Predictor,
    samples: &[PredSample],
    cfg: &TrainConfig,
    fold: u64,
    on_epoch: &mut dyn FnMut(&EpochReport, &Predictor) -> Control,
) -> Result<Adam> {
    let mut adam = Adam::new(model, cfg.adam());
    if samples.is_empty() {
        return Err(Error::Config("no training windows with a prediction horizon".into()));
    }
    let weights = cfg.loss_weights();
    model.zero_grad();
    for epoch in 0..cfg.predictor_epochs {
        let mut total = 0.0;
        for (b, batch) in batches(samples.len(), cfg, fold, stream::PREDICTOR_SHUFFLE, epoch)
            .iter()
            .enumerate()
        {
            let mut rng = rng_for(cfg.seed, &[fold, stream::PREDICTOR_DROPOUT, epoch as u64, b as u64]);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &samples[i];
                let mut mode = Mode::Train {
                    dropout: cfg.dropout,
                    rng: &mut rng,
                };
                let (memory, mem_cache) =
                    model.build_memory(&s.enc_hidden, s.memory_gestures(cfg.predictor_memory), &s.raw)?;
                let (pred, cache) =
                    model.forward_teacher_forced(&memory, &s.origin, &s.target_labels, &s.target_traj, &mut mode)?;
                let mut l = multitask_loss(
                    &pred.gesture_logits,
                    &s.target_labels,
                    &pred.trajectory,
                    &s.target_traj,
                    weights,
                )?;
                total += l.loss;
                l.d_logits.scale(scale);
                l.d_traj.scale(scale);
                model.backward(&mem_cache, &cache, &l.d_logits, &l.d_traj);
            }
            check_finite(model, total, Stage::Predictor, epoch, b)?;
            let lr = cfg.learning_rate(adam.steps_taken() + 1)?;
            adam.step(model, lr);
            model.zero_grad();
        }
        let report = EpochReport {
            stage: Stage::Predictor,
            epoch,
            loss: total / samples.len() as f64,
            steps: adam.steps_taken(),
        };
        log::info!("fold {fold} predictor epoch {epoch}: loss {:.4}", report.loss);
        if on_epoch(&report, model) == Control::Stop {
            break;
        }
    }
    Ok(adam)
}

/// Per-frame recognition scores over `samples`.
pub fn evaluate_recognition(model: &Recognizer, samples: &[RecSample]) -> Result<GestureAccumulator> {
    let mut acc = GestureAccumulator::default();
    for s in samples {
        acc.add(&model.recognize(&s.features)?, &s.labels);
    }
    Ok(acc)
}

/// How the decoder is driven during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoding {
    TeacherForced,
    Autoregressive,
}

/// Gesture and trajectory scores of the predictor, with memory gestures
/// taken from `source`.
pub fn evaluate_prediction(
    model: &Predictor,
    samples: &[PredSample],
    source: GestureSource,
    decoding: Decoding,
) -> Result<(GestureAccumulator, TrajectoryAccumulator)> {
    let mut g = GestureAccumulator::default();
    let mut t = TrajectoryAccumulator::default();
    for s in samples {
        let (memory, _) = model.build_memory(&s.enc_hidden, s.memory_gestures(source), &s.raw)?;
        let mode = match decoding {
            Decoding::TeacherForced => DecodeMode::TeacherForced {
                gestures: &s.target_labels,
                trajectory: &s.target_traj,
            },
            Decoding::Autoregressive => DecodeMode::Autoregressive,
        };
        let p = model.predict(&memory, &s.origin, mode)?;
        g.add(&p.gestures(), &s.target_labels);
        t.add(&p.trajectory, &s.target_traj);
    }
    Ok((g, t))
}
