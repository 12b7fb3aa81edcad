//! Model checkpoints: config, label map, preprocessing, both parameter
//! sets and optionally the optimizer moments.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::container;
use super::louo::TrainedModels;
use super::preprocess::Preprocessor;
use crate::data::LabelMap;
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamState, Parameterized, Tensor2};
use crate::prediction::Predictor;
use crate::recognition::Recognizer;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

type Shapes = Vec<(String, (usize, usize))>;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    labels: LabelMap,
    preprocessor: Preprocessor,
    recognizer: Shapes,
    predictor: Shapes,
    /// Step counts of the recognizer and predictor optimizers when saved.
    optimizer_steps: Option<(u64, u64)>,
    /// Seed path root; the random streams are reconstructed from
    /// `(config.seed, stream)`.
    stream: u64,
}

/// A trained pipeline as stored on disk.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub labels: LabelMap,
    pub preprocessor: Preprocessor,
    pub recognizer: Recognizer,
    pub predictor: Predictor,
    pub optimizers: Option<(Adam, Adam)>,
    pub stream: u64,
}

impl Checkpoint {
    pub fn from_models(config: &TrainConfig, models: &TrainedModels, with_optimizer: bool) -> Self {
        Self {
            config: config.clone(),
            labels: models.labels.clone(),
            preprocessor: models.preprocessor.clone(),
            recognizer: models.recognizer.clone(),
            predictor: models.predictor.clone(),
            optimizers: with_optimizer.then(|| (models.recognizer_adam.clone(), models.predictor_adam.clone())),
            stream: models.stream,
        }
    }

    /// Errors unless `config` describes the same inputs and architecture.
    pub fn check_compatible(&self, config: &TrainConfig) -> Result<()> {
        let a = &self.config;
        if a.features != config.features {
            return Err(Error::Config(format!(
                "checkpoint was trained on features {} but the config selects {}",
                a.features, config.features
            )));
        }
        let arch = |c: &TrainConfig| {
            (
                (c.w_obs, c.w_pred, c.downsample, c.pca_components),
                (c.d_model, c.d_ff, c.fc_dim, c.d_emb),
                (c.enc_layers, c.enc_heads, c.dec_layers, c.dec_heads),
                (c.tcn_channels.clone(), c.tcn_width, c.trajectory_mode),
            )
        };
        if arch(a) != arch(config) {
            return Err(Error::Config(
                "checkpoint architecture (window, layer or width settings) differs from the config".into(),
            ));
        }
        Ok(())
    }
}

fn flatten<M: Parameterized<f64>>(model: &M, out: &mut Vec<f64>) {
    model.visit_params("", &mut |_, p| out.extend_from_slice(p.value.data()));
}

fn fill<M: Parameterized<f64>>(model: &mut M, expected: &Shapes, blob: &mut &[f64], what: &str) -> Result<()> {
    let actual = model.param_shapes();
    if actual.len() != expected.len() {
        return Err(Error::Checkpoint(format!(
            "{what}: stored {} parameter tensors, model has {}",
            expected.len(),
            actual.len()
        )));
    }
    for ((an, ashape), (en, eshape)) in actual.iter().zip(expected) {
        if an != en || ashape != eshape {
            return Err(Error::Checkpoint(format!(
                "{what}: stored {en} {}x{} does not match model {an} {}x{}",
                eshape.0, eshape.1, ashape.0, ashape.1
            )));
        }
    }
    let mut short = false;
    model.visit_params_mut("", &mut |_, p| {
        let n = p.len();
        if blob.len() < n {
            short = true;
            return;
        }
        p.value.data_mut().copy_from_slice(&blob[..n]);
        *blob = &blob[n..];
    });
    if short {
        return Err(Error::Checkpoint(format!("{what}: parameter data is truncated")));
    }
    Ok(())
}

fn take_tensor(blob: &mut &[f64], shape: (usize, usize)) -> Result<Tensor2> {
    let n = shape.0 * shape.1;
    if blob.len() < n {
        return Err(Error::Checkpoint("optimizer data is truncated".into()));
    }
    let t = Tensor2::from_vec(shape.0, shape.1, blob[..n].to_vec())?;
    *blob = &blob[n..];
    Ok(t)
}

fn restore_adam<M: Parameterized<f64>>(model: &M, config: &TrainConfig, steps: u64, blob: &mut &[f64]) -> Result<Adam> {
    let mut adam = Adam::new(model, config.adam());
    for (state, (_, shape)) in adam.states.iter_mut().zip(model.param_shapes()) {
        *state = AdamState {
            m: take_tensor(blob, shape)?,
            v: take_tensor(blob, shape)?,
            step: steps,
            ..state.clone()
        };
    }
    Ok(adam)
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let meta = Meta {
        config: ck.config.clone(),
        labels: ck.labels.clone(),
        preprocessor: ck.preprocessor.clone(),
        recognizer: ck.recognizer.param_shapes(),
        predictor: ck.predictor.param_shapes(),
        optimizer_steps: ck.optimizers.as_ref().map(|(r, p)| (r.steps_taken(), p.steps_taken())),
        stream: ck.stream,
    };
    let mut blob = Vec::with_capacity(ck.recognizer.param_count() + ck.predictor.param_count());
    flatten(&ck.recognizer, &mut blob);
    flatten(&ck.predictor, &mut blob);
    if let Some((r, p)) = &ck.optimizers {
        for s in r.states.iter().chain(&p.states) {
            blob.extend_from_slice(s.m.data());
            blob.extend_from_slice(s.v.data());
        }
    }
    container::write(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, &meta, &blob)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let (meta, blob): (Meta, Vec<f64>) = container::read(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    meta.config.validate()?;
    let d_in = meta.preprocessor.output_dim();
    // Initial values are overwritten below; the generator only satisfies the constructors.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut recognizer = Recognizer::new(meta.config.recognizer(d_in), &mut rng)?;
    let mut predictor = Predictor::new(meta.config.predictor(d_in), &mut rng)?;
    let mut rest: &[f64] = &blob;
    fill(&mut recognizer, &meta.recognizer, &mut rest, "recognizer")?;
    fill(&mut predictor, &meta.predictor, &mut rest, "predictor")?;
    let optimizers = match meta.optimizer_steps {
        Some((rs, ps)) => Some((
            restore_adam(&recognizer, &meta.config, rs, &mut rest)?,
            restore_adam(&predictor, &meta.config, ps, &mut rest)?,
        )),
        None => None,
    };
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} unexpected trailing values", rest.len())));
    }
    Ok(Checkpoint {
        config: meta.config,
        labels: meta.labels,
        preprocessor: meta.preprocessor,
        recognizer,
        predictor,
        optimizers,
        stream: meta.stream,
    })
}

/// Loads a checkpoint and checks it against the caller's config.
pub fn load_checkpoint_for(path: &Path, config: &TrainConfig) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    ck.check_compatible(config)?;
    Ok(ck)
}
