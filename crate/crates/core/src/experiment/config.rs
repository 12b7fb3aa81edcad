//! Flat `key = value` training configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSelection;
use crate::nn::{AdamConfig, NoamSchedule};
use crate::prediction::{LossWeights, PredictorConfig, TrajectoryMode};
use crate::recognition::RecognizerConfig;

/// Which observed gestures go into the decoder memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GestureSource {
    GroundTruth,
    Recognized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub features: FeatureSelection,
    pub w_obs: usize,
    pub w_pred: usize,
    pub downsample: usize,
    pub epochs: usize,
    pub predictor_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub d_model: usize,
    pub enc_layers: usize,
    pub enc_heads: usize,
    pub dec_layers: usize,
    pub dec_heads: usize,
    pub d_ff: usize,
    pub fc_dim: usize,
    pub d_emb: usize,
    pub tcn_channels: Vec<usize>,
    pub tcn_width: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub warmup_steps: usize,
    /// Multiplier on the warmup schedule.
    pub lr_factor: f64,
    pub w_gesture: f64,
    pub w_traj: f64,
    pub dropout: f64,
    pub trajectory_mode: TrajectoryMode,
    /// Memory gesture source while training the predictor.
    pub predictor_memory: GestureSource,
    /// Gesture ids (1..=15) in head order; empty derives them from the data.
    pub gestures: Vec<u8>,
    /// Principal components kept for V_Seg features; 0 disables PCA.
    pub pca_components: usize,
    pub measure_latency: bool,
    pub latency_warmup: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            features: "K14".parse().expect("valid selection"),
            w_obs: 30,
            w_pred: 10,
            downsample: 3,
            epochs: 20,
            predictor_epochs: 20,
            batch_size: 10,
            seed: 0,
            d_model: 60,
            enc_layers: 3,
            enc_heads: 2,
            dec_layers: 2,
            dec_heads: 4,
            d_ff: 240,
            fc_dim: 10,
            d_emb: 16,
            tcn_channels: vec![32, 64, 60],
            tcn_width: 5,
            adam_beta1: 0.9,
            adam_beta2: 0.98,
            adam_eps: 1e-9,
            warmup_steps: 4000,
            lr_factor: 1.0,
            w_gesture: 1.0,
            w_traj: 0.01,
            dropout: 0.1,
            trajectory_mode: TrajectoryMode::Delta,
            predictor_memory: GestureSource::GroundTruth,
            gestures: Vec::new(),
            pca_components: 0,
            measure_latency: true,
            latency_warmup: 10,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn join_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub const KEYS: [&'static str; 32] = [
        "features",
        "w_obs",
        "w_pred",
        "downsample",
        "epochs",
        "predictor_epochs",
        "batch_size",
        "seed",
        "d_model",
        "enc_layers",
        "enc_heads",
        "dec_layers",
        "dec_heads",
        "d_ff",
        "fc_dim",
        "d_emb",
        "tcn_channels",
        "tcn_width",
        "adam_beta1",
        "adam_beta2",
        "adam_eps",
        "warmup_steps",
        "lr_factor",
        "w_gesture",
        "w_traj",
        "dropout",
        "trajectory_mode",
        "predictor_memory",
        "gestures",
        "pca_components",
        "measure_latency",
        "latency_warmup",
    ];

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "features" => self.features = v.parse()?,
            "w_obs" => self.w_obs = parse_num(key, v)?,
            "w_pred" => self.w_pred = parse_num(key, v)?,
            "downsample" => self.downsample = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "predictor_epochs" => self.predictor_epochs = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "d_model" => self.d_model = parse_num(key, v)?,
            "enc_layers" => self.enc_layers = parse_num(key, v)?,
            "enc_heads" => self.enc_heads = parse_num(key, v)?,
            "dec_layers" => self.dec_layers = parse_num(key, v)?,
            "dec_heads" => self.dec_heads = parse_num(key, v)?,
            "d_ff" => self.d_ff = parse_num(key, v)?,
            "fc_dim" => self.fc_dim = parse_num(key, v)?,
            "d_emb" => self.d_emb = parse_num(key, v)?,
            "tcn_channels" => self.tcn_channels = parse_list(key, v)?,
            "tcn_width" => self.tcn_width = parse_num(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse_num(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse_num(key, v)?,
            "adam_eps" => self.adam_eps = parse_num(key, v)?,
            "warmup_steps" => self.warmup_steps = parse_num(key, v)?,
            "lr_factor" => self.lr_factor = parse_num(key, v)?,
            "w_gesture" => self.w_gesture = parse_num(key, v)?,
            "w_traj" => self.w_traj = parse_num(key, v)?,
            "dropout" => self.dropout = parse_num(key, v)?,
            "trajectory_mode" => {
                self.trajectory_mode = match v {
                    "delta" => TrajectoryMode::Delta,
                    "absolute" => TrajectoryMode::Absolute,
                    _ => {
                        return Err(Error::Config(format!(
                            "trajectory_mode must be delta or absolute, got {v:?}"
                        )))
                    }
                }
            }
            "predictor_memory" => {
                self.predictor_memory = match v {
                    "ground_truth" => GestureSource::GroundTruth,
                    "recognized" => GestureSource::Recognized,
                    _ => {
                        return Err(Error::Config(format!(
                            "predictor_memory must be ground_truth or recognized, got {v:?}"
                        )))
                    }
                }
            }
            "gestures" => self.gestures = parse_list(key, v)?,
            "pca_components" => self.pca_components = parse_num(key, v)?,
            "measure_latency" => self.measure_latency = parse_num(key, v)?,
            "latency_warmup" => self.latency_warmup = parse_num(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides such as those given on the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {:?} is not key=value", o.as_ref())))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", i + 1)))?;
            cfg.set(k, v)
                .map_err(|e| Error::Config(format!("config line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Serializes every field; `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let mode = match self.trajectory_mode {
            TrajectoryMode::Delta => "delta",
            TrajectoryMode::Absolute => "absolute",
        };
        let mem = match self.predictor_memory {
            GestureSource::GroundTruth => "ground_truth",
            GestureSource::Recognized => "recognized",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("features", self.features.to_string()),
            ("w_obs", self.w_obs.to_string()),
            ("w_pred", self.w_pred.to_string()),
            ("downsample", self.downsample.to_string()),
            ("epochs", self.epochs.to_string()),
            ("predictor_epochs", self.predictor_epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("d_model", self.d_model.to_string()),
            ("enc_layers", self.enc_layers.to_string()),
            ("enc_heads", self.enc_heads.to_string()),
            ("dec_layers", self.dec_layers.to_string()),
            ("dec_heads", self.dec_heads.to_string()),
            ("d_ff", self.d_ff.to_string()),
            ("fc_dim", self.fc_dim.to_string()),
            ("d_emb", self.d_emb.to_string()),
            ("tcn_channels", join_list(&self.tcn_channels)),
            ("tcn_width", self.tcn_width.to_string()),
            ("adam_beta1", format!("{:?}", self.adam_beta1)),
            ("adam_beta2", format!("{:?}", self.adam_beta2)),
            ("adam_eps", format!("{:?}", self.adam_eps)),
            ("warmup_steps", self.warmup_steps.to_string()),
            ("lr_factor", format!("{:?}", self.lr_factor)),
            ("w_gesture", format!("{:?}", self.w_gesture)),
            ("w_traj", format!("{:?}", self.w_traj)),
            ("dropout", format!("{:?}", self.dropout)),
            ("trajectory_mode", mode.to_string()),
            ("predictor_memory", mem.to_string()),
            ("gestures", join_list(&self.gestures)),
            ("pca_components", self.pca_components.to_string()),
            ("measure_latency", self.measure_latency.to_string()),
            ("latency_warmup", self.latency_warmup.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.predictor_epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.downsample == 0 || self.w_obs == 0 || !self.w_obs.is_multiple_of(self.downsample) {
            return bad(format!(
                "w_obs ({}) must be a positive multiple of downsample ({})",
                self.w_obs, self.downsample
            ));
        }
        if self.w_pred == 0 {
            return bad("w_pred must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.warmup_steps == 0 || !(self.lr_factor > 0.0) {
            return bad("warmup_steps and lr_factor must be positive".into());
        }
        if self.gestures.len() > self.fc_dim {
            return bad(format!(
                "{} gestures exceed fc_dim {}",
                self.gestures.len(),
                self.fc_dim
            ));
        }
        if self.tcn_channels.last() != Some(&self.d_model) {
            return bad(format!("tcn_channels must end at d_model {}", self.d_model));
        }
        if self.w_obs < (1 << self.tcn_channels.len()) {
            return bad(format!(
                "w_obs {} is shorter than the {} frames needed by {} pooling stages",
                self.w_obs,
                1 << self.tcn_channels.len(),
                self.tcn_channels.len()
            ));
        }
        for (d, h, what) in [
            (self.d_model, self.enc_heads, "enc_heads"),
            (self.d_model, self.dec_heads, "dec_heads"),
        ] {
            if h == 0 || d % h != 0 {
                return bad(format!("{what} = {h} must divide d_model = {d}"));
            }
        }
        self.loss_weights().validate()
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            gesture: self.w_gesture,
            trajectory: self.w_traj,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn schedule(&self) -> NoamSchedule {
        NoamSchedule {
            d_model: self.d_model,
            warmup_steps: self.warmup_steps,
        }
    }

    pub fn learning_rate(&self, step: u64) -> Result<f64> {
        Ok(self.lr_factor * self.schedule().rate(step)?)
    }

    pub fn recognizer(&self, d_in: usize) -> RecognizerConfig {
        RecognizerConfig {
            d_in,
            d_model: self.d_model,
            layers: self.enc_layers,
            heads: self.enc_heads,
            d_ff: self.d_ff,
            fc_dim: self.fc_dim,
            tcn_channels: self.tcn_channels.clone(),
            tcn_width: self.tcn_width,
        }
    }

    pub fn predictor(&self, d_in: usize) -> PredictorConfig {
        PredictorConfig {
            d_in,
            d_model: self.d_model,
            layers: self.dec_layers,
            heads: self.dec_heads,
            d_ff: self.d_ff,
            fc_dim: self.fc_dim,
            d_emb: self.d_emb,
            w_pred: self.w_pred,
            factor: self.downsample,
            trajectory: self.trajectory_mode,
        }
    }
}
