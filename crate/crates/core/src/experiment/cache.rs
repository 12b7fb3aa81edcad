//! Prepared-dataset cache keyed by a hash of every input byte.
//!
//! Trials are stored fused and aligned but not normalized: normalization
//! and PCA are fitted per fold at training time.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use super::container;
use crate::data::manifest::load_trial;
use crate::data::{read_manifest, ColumnBlock, GestureLabel, LabeledTrial};
use crate::error::{Error, Result};
use crate::features::FeatureSelection;
use crate::nn::Tensor2;

pub const CACHE_MAGIC: [u8; 4] = *b"SGDS";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrialMeta {
    id: String,
    subject: String,
    frames: usize,
    dim: usize,
    labels: Vec<GestureLabel>,
    blocks: Vec<ColumnBlock>,
    windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    input_hash: String,
    selection: FeatureSelection,
    w_obs: usize,
    w_pred: usize,
    downsample: usize,
    trials: Vec<TrialMeta>,
}

/// A loaded cache.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDataset {
    pub input_hash: String,
    pub selection: FeatureSelection,
    pub trials: Vec<LabeledTrial>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrepareOutcome {
    /// The cache already matched the inputs; nothing was written.
    Hit,
    Written,
}

fn hash_file(h: &mut Sha256, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    h.update(path.to_string_lossy().as_bytes());
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(&bytes);
    Ok(())
}

/// Hash over the manifest, every file it references for `selection`, and
/// the windowing settings.
pub fn input_hash(manifest: &Path, cfg: &TrainConfig) -> Result<String> {
    let mut h = Sha256::new();
    hash_file(&mut h, manifest)?;
    for e in read_manifest(manifest)? {
        hash_file(&mut h, &e.kinematics)?;
        hash_file(&mut h, &e.transcript)?;
        for kind in cfg.features.extras() {
            if let Some((_, p)) = e.features.iter().find(|(k, _)| *k == kind) {
                hash_file(&mut h, p)?;
            }
        }
    }
    h.update(format!("{}|{}|{}|{}", cfg.features, cfg.w_obs, cfg.w_pred, cfg.downsample).as_bytes());
    Ok(hex::encode(h.finalize()))
}

fn read_meta(path: &Path) -> Result<(Meta, Vec<f64>)> {
    container::read(path, CACHE_MAGIC, CACHE_VERSION)
}

/// Parses and fuses every trial of `manifest` and writes the cache to
/// `out`, unless `out` already holds a cache of identical inputs.
pub fn prepare(manifest: &Path, cfg: &TrainConfig, out: &Path) -> Result<PrepareOutcome> {
    let hash = input_hash(manifest, cfg)?;
    if out.exists() {
        match read_meta(out) {
            Ok((meta, _)) if meta.input_hash == hash => {
                log::info!("{}: cache is up to date", out.display());
                return Ok(PrepareOutcome::Hit);
            }
            Ok(_) => log::info!("{}: inputs changed, rebuilding", out.display()),
            Err(e) => log::warn!("{}: unreadable cache ({e}), rebuilding", out.display()),
        }
    }
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::Data(format!("{}: manifest lists no trials", manifest.display())));
    }
    let mut trials = Vec::with_capacity(entries.len());
    let mut blob = Vec::new();
    for e in &entries {
        let t = load_trial(e, &cfg.features)?;
        blob.extend_from_slice(t.features.data());
        blob.extend_from_slice(t.trajectory.data());
        trials.push(TrialMeta {
            id: t.id.clone(),
            subject: t.subject.clone(),
            frames: t.frames(),
            dim: t.dim(),
            windows: t.frames() / cfg.w_obs,
            labels: t.labels,
            blocks: t.blocks,
        });
    }
    let meta = Meta {
        input_hash: hash,
        selection: cfg.features.clone(),
        w_obs: cfg.w_obs,
        w_pred: cfg.w_pred,
        downsample: cfg.downsample,
        trials,
    };
    container::write(out, CACHE_MAGIC, CACHE_VERSION, &meta, &blob)?;
    Ok(PrepareOutcome::Written)
}

pub fn load_prepared(path: &Path) -> Result<PreparedDataset> {
    let (meta, blob) = read_meta(path)?;
    let mut rest: &[f64] = &blob;
    let mut take = |rows: usize, cols: usize| -> Result<Tensor2> {
        let n = rows * cols;
        if rest.len() < n {
            return Err(Error::Checkpoint(format!(
                "{}: cache data is truncated",
                path.display()
            )));
        }
        let t = Tensor2::from_vec(rows, cols, rest[..n].to_vec())?;
        rest = &rest[n..];
        Ok(t)
    };
    let mut trials = Vec::with_capacity(meta.trials.len());
    for m in meta.trials {
        let features = take(m.frames, m.dim)?;
        let trajectory = take(m.frames, 6)?;
        let t = LabeledTrial {
            id: m.id,
            subject: m.subject,
            features,
            labels: m.labels,
            trajectory,
            blocks: m.blocks,
        };
        t.validate()?;
        trials.push(t);
    }
    Ok(PreparedDataset {
        input_hash: meta.input_hash,
        selection: meta.selection,
        trials,
    })
}
