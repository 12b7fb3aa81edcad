//! Leave-one-user-out cross-validation.

use std::time::Instant;

use sha2::{Digest, Sha256};

use super::config::{GestureSource, TrainConfig};
use super::preprocess::Preprocessor;
use super::train::{
    cut_windows, evaluate_prediction, evaluate_recognition, prediction_samples, recognition_samples, stream,
    train_predictor, train_recognizer, Control, Decoding, EpochReport, PredSample,
};
use crate::data::{louo_splits, Fold, LabelMap, LabeledTrial};
use crate::error::{Error, Result};
use crate::metrics::{latency_stats, EvalReport, FoldReport, LatencyStats};
use crate::nn::Adam;
use crate::prediction::{end_to_end_infer, Predictor};
use crate::recognition::Recognizer;
use crate::seed::rng_for;

/// Observer of training progress; either stage may be cut short.
pub trait TrainHooks {
    fn recognizer_epoch(&mut self, _fold: &str, _report: &EpochReport, _model: &Recognizer) -> Control {
        Control::Continue
    }
    fn predictor_epoch(&mut self, _fold: &str, _report: &EpochReport, _model: &Predictor) -> Control {
        Control::Continue
    }
}

pub struct NoHooks;

impl TrainHooks for NoHooks {}

/// Training trials for a final model: all of them, or all but `holdout`'s.
/// Also returns the RNG stream, which matches the corresponding LOUO fold
/// when a subject is held out.
pub fn training_set<'a>(trials: &'a [LabeledTrial], holdout: Option<&str>) -> Result<(u64, Vec<&'a LabeledTrial>)> {
    let folds = louo_splits(trials)?;
    match holdout {
        Some(s) => {
            let i = folds
                .iter()
                .position(|f| f.subject == s)
                .ok_or_else(|| Error::Config(format!("no subject {s:?} in the dataset")))?;
            Ok((i as u64, folds[i].train.iter().map(|&j| &trials[j]).collect()))
        }
        None => Ok((folds.len() as u64, trials.iter().collect())),
    }
}

/// Everything needed to run inference after training.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub labels: LabelMap,
    pub preprocessor: Preprocessor,
    pub recognizer: Recognizer,
    pub predictor: Predictor,
    pub recognizer_adam: Adam,
    pub predictor_adam: Adam,
    /// Root of the seed path used for this training run.
    pub stream: u64,
}

/// Label vocabulary from the config, or from every trial when the config
/// leaves it empty.
pub fn label_map(trials: &[LabeledTrial], cfg: &TrainConfig) -> Result<LabelMap> {
    if cfg.gestures.is_empty() {
        LabelMap::from_trials(trials, cfg.fc_dim)
    } else {
        LabelMap::new(cfg.gestures.clone(), cfg.fc_dim)
    }
}

/// SHA-256 of the sorted trial ids, hex encoded.
pub fn fingerprint<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut ids: Vec<&str> = ids.into_iter().collect();
    ids.sort_unstable();
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Fits preprocessing and trains both models on `train`. `stream` roots
/// every random draw, so distinct folds never share randomness.
pub fn train_models(
    train: &[&LabeledTrial],
    labels: &LabelMap,
    cfg: &TrainConfig,
    stream: u64,
    name: &str,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainedModels> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let preprocessor = Preprocessor::fit(train, cfg.pca_components)?;
    let prepared = train
        .iter()
        .map(|t| preprocessor.apply(t))
        .collect::<Result<Vec<_>>>()?;
    let (windows, _) = cut_windows(&prepared, cfg)?;
    let d_in = preprocessor.output_dim();

    let mut recognizer = Recognizer::new(
        cfg.recognizer(d_in),
        &mut rng_for(cfg.seed, &[stream, stream::RECOGNIZER_INIT]),
    )?;
    let rec_samples = recognition_samples(&windows, labels);
    let recognizer_adam = train_recognizer(&mut recognizer, &rec_samples, cfg, stream, &mut |r, m| {
        hooks.recognizer_epoch(name, r, m)
    })?;

    let mut predictor = Predictor::new(
        cfg.predictor(d_in),
        &mut rng_for(cfg.seed, &[stream, stream::PREDICTOR_INIT]),
    )?;
    let pred_samples = prediction_samples(&windows, labels, cfg.downsample, &recognizer)?;
    let predictor_adam = train_predictor(&mut predictor, &pred_samples, cfg, stream, &mut |r, m| {
        hooks.predictor_epoch(name, r, m)
    })?;

    Ok(TrainedModels {
        labels: labels.clone(),
        preprocessor,
        recognizer,
        predictor,
        recognizer_adam,
        predictor_adam,
        stream,
    })
}

/// Single-precision end-to-end latency over the given windows.
pub fn measure_latency(models: &TrainedModels, samples: &[PredSample], warmup: usize) -> Result<Option<LatencyStats>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let rec = models.recognizer.cast::<f32>();
    let pred = models.predictor.cast::<f32>();
    let mut times = Vec::with_capacity(samples.len());
    for s in samples {
        let x = s.features.cast::<f32>();
        let origin = s.origin.map(|v| v as f32);
        let t0 = Instant::now();
        let out = end_to_end_infer(&x, &origin, &rec, &pred)?;
        times.push(t0.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    latency_stats(&times, warmup.min(times.len() - 1)).map(Some)
}

/// Evaluates trained models on held-out trials.
pub fn evaluate_models(
    models: &TrainedModels,
    test: &[&LabeledTrial],
    cfg: &TrainConfig,
    name: &str,
) -> Result<FoldReport> {
    let prepared = test
        .iter()
        .map(|t| models.preprocessor.apply(t))
        .collect::<Result<Vec<_>>>()?;
    let (windows, short_trials) = cut_windows(&prepared, cfg)?;
    let rec_samples = recognition_samples(&windows, &models.labels);
    let recognition = evaluate_recognition(&models.recognizer, &rec_samples)?.finish();
    let pred_samples = prediction_samples(&windows, &models.labels, cfg.downsample, &models.recognizer)?;
    let (g_gt, t_gt) = evaluate_prediction(
        &models.predictor,
        &pred_samples,
        GestureSource::GroundTruth,
        Decoding::Autoregressive,
    )?;
    let (g_rec, t_rec) = evaluate_prediction(
        &models.predictor,
        &pred_samples,
        GestureSource::Recognized,
        Decoding::Autoregressive,
    )?;
    let latency = if cfg.measure_latency {
        measure_latency(models, &pred_samples, cfg.latency_warmup)?
    } else {
        None
    };
    Ok(FoldReport {
        fold: name.to_string(),
        recognition,
        prediction_gt: g_gt.finish(),
        prediction_rec: g_rec.finish(),
        trajectory_gt: t_gt.finish()?,
        trajectory_rec: t_rec.finish()?,
        latency,
        short_trials,
        train_fingerprint: None,
    })
}

/// Result of one fold, with its models kept for inspection.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub report: FoldReport,
    pub models: TrainedModels,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Trains on every subject but the fold's and evaluates on the held-out
/// subject. Fails if any training trial belongs to the test subject.
pub fn run_fold(
    trials: &[LabeledTrial],
    fold_index: usize,
    fold: &Fold,
    labels: &LabelMap,
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<FoldOutcome> {
    let train: Vec<&LabeledTrial> = fold.train.iter().map(|&i| &trials[i]).collect();
    let test: Vec<&LabeledTrial> = fold.test.iter().map(|&i| &trials[i]).collect();
    if let Some(t) = train.iter().find(|t| t.subject == fold.subject) {
        return Err(Error::Contract(format!(
            "fold {}: training trial {} belongs to the test subject",
            fold.subject, t.id
        )));
    }
    let name = format!("fold_{}", fold.subject);
    log::info!("{name}: {} train / {} test trials", train.len(), test.len());
    let models = train_models(&train, labels, cfg, fold_index as u64, &name, hooks)?;
    let mut report = evaluate_models(&models, &test, cfg, &fold.subject)?;
    let train_ids: Vec<String> = train.iter().map(|t| t.id.clone()).collect();
    report.train_fingerprint = Some(fingerprint(train_ids.iter().map(String::as_str)));
    Ok(FoldOutcome {
        report,
        models,
        train_ids,
        test_ids: test.iter().map(|t| t.id.clone()).collect(),
    })
}

/// Complete LOUO run. With `only` set, just that subject's fold is run;
/// seeds still follow the fold's position in the full split.
pub fn run_louo(
    trials: &[LabeledTrial],
    cfg: &TrainConfig,
    only: Option<&str>,
    hooks: &mut dyn TrainHooks,
) -> Result<(EvalReport, Vec<FoldOutcome>)> {
    cfg.validate()?;
    let labels = label_map(trials, cfg)?;
    let folds = louo_splits(trials)?;
    if let Some(s) = only {
        if !folds.iter().any(|f| f.subject == s) {
            return Err(Error::Config(format!("no fold for subject {s:?}")));
        }
    }
    let mut outcomes = Vec::new();
    for (i, fold) in folds.iter().enumerate() {
        if only.is_some_and(|s| s != fold.subject) {
            continue;
        }
        outcomes.push(run_fold(trials, i, fold, &labels, cfg, hooks)?);
    }
    let report = EvalReport::from_folds(
        cfg.features.to_string(),
        outcomes.iter().map(|o| o.report.clone()).collect(),
    );
    Ok((report, outcomes))
}

/// LOUO evaluation of each loss-weight pair `(w_gesture, w_traj)` on top of
/// `cfg`. Models are discarded; only the reports are kept.
pub fn sweep_loss_weights(
    trials: &[LabeledTrial],
    cfg: &TrainConfig,
    weights: &[(f64, f64)],
    only: Option<&str>,
    hooks: &mut dyn TrainHooks,
) -> Result<Vec<((f64, f64), EvalReport)>> {
    weights
        .iter()
        .map(|&(g, t)| {
            let mut c = cfg.clone();
            c.w_gesture = g;
            c.w_traj = t;
            Ok(((g, t), run_louo(trials, &c, only, hooks)?.0))
        })
        .collect()
}
