//! Joint gesture and trajectory prediction with a transformer decoder.
//!
//! The decoder memory is built from the recognizer's hidden states, the
//! observed gesture labels and the fused input features, all on the
//! downsampled grid. Decoder step `s` receives the gesture and position of
//! step `s − 1`; step 0 receives a learned start embedding and the last
//! observed position.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::norm::LayerNormCache;
use crate::nn::param::join;
use crate::nn::transformer::DecoderLayerCache;
use crate::nn::{
    cross_entropy, cumulative_l2, sinusoidal_positions, DecoderLayer, LayerNorm, Linear, Mode, ParamTensor,
    Parameterized, Real, Tensor2,
};
use crate::recognition::Recognizer;

pub const TRAJ_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryMode {
    /// Head outputs offsets from the last observed position.
    Delta,
    /// Head outputs coordinates directly.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub d_in: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub fc_dim: usize,
    pub d_emb: usize,
    pub w_pred: usize,
    /// Frames of the observation window per decoder-rate step.
    pub factor: usize,
    pub trajectory: TrajectoryMode,
}

impl PredictorConfig {
    /// Two decoder layers, four heads, width 60, ten-step horizon.
    pub fn paper(d_in: usize) -> Self {
        Self {
            d_in,
            d_model: 60,
            layers: 2,
            heads: 4,
            d_ff: 240,
            fc_dim: 10,
            d_emb: 16,
            w_pred: 10,
            factor: 3,
            trajectory: TrajectoryMode::Delta,
        }
    }

    /// Embedding row used for observed frames without a label.
    pub fn unlabeled_row(&self) -> usize {
        self.fc_dim
    }

    pub fn start_row(&self) -> usize {
        self.fc_dim + 1
    }

    fn embed_row(&self, label: Option<usize>) -> usize {
        label.unwrap_or(self.unlabeled_row())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gesture: f64,
    pub trajectory: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            gesture: 1.0,
            trajectory: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.gesture < 0.0 || self.trajectory < 0.0 || !(self.gesture + self.trajectory > 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be non-negative and not both zero, got {} and {}",
                self.gesture, self.trajectory
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Predictor<T = f64> {
    pub config: PredictorConfig,
    /// `(fc_dim + 2) × d_emb`: one row per class, then unlabeled, then start.
    pub embedding: ParamTensor<T>,
    pub memory_proj: Linear<T>,
    pub input_proj: Linear<T>,
    pub layers: Vec<DecoderLayer<T>>,
    pub final_norm: LayerNorm<T>,
    pub gesture_head: Linear<T>,
    pub traj_head: Linear<T>,
}

pub struct MemoryCache<T> {
    concat: Tensor2<T>,
    rows: Vec<usize>,
    grid: Vec<usize>,
    w_obs: usize,
}

pub struct DecodeCache<T> {
    tokens_in: Tensor2<T>,
    rows: Vec<usize>,
    layers: Vec<DecoderLayerCache<T>>,
    final_norm: LayerNormCache<T>,
    hidden: Tensor2<T>,
}

/// How decoder inputs after step 0 are obtained.
pub enum DecodeMode<'a, T> {
    /// Ground-truth previous gestures and absolute positions.
    TeacherForced {
        gestures: &'a [Option<usize>],
        trajectory: &'a Tensor2<T>,
    },
    /// The model's own argmax gesture and predicted position.
    Autoregressive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub gesture_logits: Tensor2<T>,
    /// Absolute positions, `w_pred × 6`.
    pub trajectory: Tensor2<T>,
}

impl<T> Prediction<T> {
    pub fn gestures(&self) -> Vec<usize>
    where
        T: Real,
    {
        self.gesture_logits.argmax_rows()
    }
}

/// Gradients with respect to the memory inputs.
pub struct MemoryGrads<T> {
    pub enc_hidden: Tensor2<T>,
    pub raw: Tensor2<T>,
}

impl<T: Real> Predictor<T> {
    pub fn new(config: PredictorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        if config.factor == 0 || config.w_pred == 0 || config.d_in == 0 {
            return Err(Error::Config("predictor dimensions must be positive".into()));
        }
        let d = config.d_model;
        let rows = config.fc_dim + 2;
        let layers = (0..config.layers)
            .map(|_| DecoderLayer::new(d, config.heads, config.d_ff, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            embedding: ParamTensor::xavier(rows, config.d_emb, rows, config.d_emb, rng),
            memory_proj: Linear::new(d + config.d_emb + config.d_in, d, rng),
            input_proj: Linear::new(config.d_emb + TRAJ_DIM, d, rng),
            layers,
            final_norm: LayerNorm::new(d),
            gesture_head: Linear::new(d, config.fc_dim, rng),
            traj_head: Linear::new(d, TRAJ_DIM, rng),
            config,
        })
    }

    fn embed(&self, rows: &[usize]) -> Tensor2<T> {
        self.embedding.value.select_rows(rows.iter().copied())
    }

    /// Memory of `W_obs / factor` rows: projected `[hidden; embedding; raw]`
    /// plus positions. `raw` must already be on the downsampled grid.
    pub fn build_memory(
        &self,
        enc_hidden: &Tensor2<T>,
        obs_gestures: &[Option<usize>],
        raw: &Tensor2<T>,
    ) -> Result<(Tensor2<T>, MemoryCache<T>)> {
        let w_obs = enc_hidden.rows();
        if obs_gestures.len() != w_obs {
            return Err(Error::Contract(format!(
                "{} observed labels for {w_obs} hidden rows",
                obs_gestures.len()
            )));
        }
        let grid: Vec<usize> = (0..w_obs).step_by(self.config.factor).collect();
        if grid.len() != raw.rows() {
            return Err(Error::Contract(format!(
                "{} raw feature rows do not match {} downsampled hidden rows",
                raw.rows(),
                grid.len()
            )));
        }
        let rows: Vec<usize> = grid.iter().map(|&g| self.config.embed_row(obs_gestures[g])).collect();
        let hidden = enc_hidden.select_rows(grid.iter().copied());
        let concat = Tensor2::hcat(&[&hidden, &self.embed(&rows), raw])?;
        let mut memory = self.memory_proj.forward(&concat)?;
        memory.add_assign(&sinusoidal_positions(memory.rows(), memory.cols()));
        Ok((
            memory,
            MemoryCache {
                concat,
                rows,
                grid,
                w_obs,
            },
        ))
    }

    fn to_input(&self, absolute: &[T], origin: &[T; TRAJ_DIM]) -> [T; TRAJ_DIM] {
        let mut out = [T::zero(); TRAJ_DIM];
        for k in 0..TRAJ_DIM {
            out[k] = match self.config.trajectory {
                TrajectoryMode::Delta => absolute[k] - origin[k],
                TrajectoryMode::Absolute => absolute[k],
            };
        }
        out
    }

    fn decode(
        &self,
        rows: &[usize],
        coords: &Tensor2<T>,
        memory: &Tensor2<T>,
        mode: &mut Mode,
    ) -> Result<(Tensor2<T>, Tensor2<T>, DecodeCache<T>)> {
        let tokens_in = Tensor2::hcat(&[&self.embed(rows), coords])?;
        let mut h = self.input_proj.forward(&tokens_in)?;
        h.add_assign(&sinusoidal_positions(h.rows(), h.cols()));
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(&h, memory, mode)?;
            caches.push(c);
            h = y;
        }
        let (hidden, final_norm) = self.final_norm.forward(&h);
        let logits = self.gesture_head.forward(&hidden)?;
        let traj_out = self.traj_head.forward(&hidden)?;
        Ok((
            logits,
            traj_out,
            DecodeCache {
                tokens_in,
                rows: rows.to_vec(),
                layers: caches,
                final_norm,
                hidden,
            },
        ))
    }

    fn absolute(&self, traj_out: &Tensor2<T>, origin: &[T; TRAJ_DIM]) -> Tensor2<T> {
        let mut out = traj_out.clone();
        if self.config.trajectory == TrajectoryMode::Delta {
            for r in 0..out.rows() {
                for (v, o) in out.row_mut(r).iter_mut().zip(origin) {
                    *v += *o;
                }
            }
        }
        out
    }

    /// Teacher-forced decoding, keeping what `backward` needs.
    pub fn forward_teacher_forced(
        &self,
        memory: &Tensor2<T>,
        origin: &[T; TRAJ_DIM],
        gestures: &[Option<usize>],
        trajectory: &Tensor2<T>,
        mode: &mut Mode,
    ) -> Result<(Prediction<T>, DecodeCache<T>)> {
        let s = self.config.w_pred;
        if gestures.len() != s || trajectory.shape() != (s, TRAJ_DIM) {
            return Err(Error::dim(
                "teacher-forced targets",
                format!("{s} labels and {s}x{TRAJ_DIM}"),
                format!("{} labels and {}", gestures.len(), trajectory.shape_str()),
            ));
        }
        let mut rows = vec![self.config.start_row()];
        let mut coords = Tensor2::zeros(s, TRAJ_DIM);
        coords.row_mut(0).copy_from_slice(&self.to_input(origin, origin));
        for i in 1..s {
            rows.push(self.config.embed_row(gestures[i - 1]));
            coords
                .row_mut(i)
                .copy_from_slice(&self.to_input(trajectory.row(i - 1), origin));
        }
        let (logits, traj_out, cache) = self.decode(&rows, &coords, memory, mode)?;
        Ok((
            Prediction {
                gesture_logits: logits,
                trajectory: self.absolute(&traj_out, origin),
            },
            cache,
        ))
    }

    /// Runs the decoder in either mode without keeping caches. The
    /// autoregressive mode re-decodes the growing prefix at every step.
    pub fn predict(
        &self,
        memory: &Tensor2<T>,
        origin: &[T; TRAJ_DIM],
        mode: DecodeMode<'_, T>,
    ) -> Result<Prediction<T>> {
        match mode {
            DecodeMode::TeacherForced { gestures, trajectory } => Ok(self
                .forward_teacher_forced(memory, origin, gestures, trajectory, &mut Mode::Eval)?
                .0),
            DecodeMode::Autoregressive => {
                let s = self.config.w_pred;
                let mut rows = vec![self.config.start_row()];
                let mut coords = Tensor2::zeros(s, TRAJ_DIM);
                coords.row_mut(0).copy_from_slice(&self.to_input(origin, origin));
                let mut logits = Tensor2::zeros(s, self.config.fc_dim);
                let mut traj = Tensor2::zeros(s, TRAJ_DIM);
                for step in 0..s {
                    let prefix = coords.row_range(0, step + 1);
                    let (lg, tr, _) = self.decode(&rows, &prefix, memory, &mut Mode::Eval)?;
                    logits.row_mut(step).copy_from_slice(lg.row(step));
                    let abs = self.absolute(&tr.row_range(step, 1), origin);
                    traj.row_mut(step).copy_from_slice(abs.row(0));
                    if step + 1 < s {
                        rows.push(lg.row_range(step, 1).argmax_rows()[0]);
                        coords
                            .row_mut(step + 1)
                            .copy_from_slice(&self.to_input(abs.row(0), origin));
                    }
                }
                Ok(Prediction {
                    gesture_logits: logits,
                    trajectory: traj,
                })
            }
        }
    }

    /// Backpropagates head gradients through the decoder and the memory.
    /// `d_traj` is the gradient with respect to the absolute trajectory.
    pub fn backward(
        &mut self,
        mem_cache: &MemoryCache<T>,
        cache: &DecodeCache<T>,
        d_logits: &Tensor2<T>,
        d_traj: &Tensor2<T>,
    ) -> MemoryGrads<T> {
        let mut dh = self.gesture_head.backward(&cache.hidden, d_logits);
        dh.add_assign(&self.traj_head.backward(&cache.hidden, d_traj));
        let mut g = self.final_norm.backward(&cache.final_norm, &dh);
        let mut dmem: Option<Tensor2<T>> = None;
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers).rev() {
            let (dx, dm) = layer.backward(c, &g);
            g = dx;
            match dmem.as_mut() {
                Some(acc) => acc.add_assign(&dm),
                None => dmem = Some(dm),
            }
        }
        let d_tokens = self.input_proj.backward(&cache.tokens_in, &g);
        let d_emb = self.config.d_emb;
        for (i, &r) in cache.rows.iter().enumerate() {
            for (acc, &v) in self.embedding.grad.row_mut(r).iter_mut().zip(&d_tokens.row(i)[..d_emb]) {
                *acc += v;
            }
        }

        let dmem = dmem.unwrap_or_else(|| Tensor2::zeros(mem_cache.concat.rows(), self.config.d_model));
        let d_concat = self.memory_proj.backward(&mem_cache.concat, &dmem);
        let d_model = self.config.d_model;
        for (i, &r) in mem_cache.rows.iter().enumerate() {
            for (acc, &v) in self
                .embedding
                .grad
                .row_mut(r)
                .iter_mut()
                .zip(&d_concat.row(i)[d_model..d_model + d_emb])
            {
                *acc += v;
            }
        }
        let mut enc_hidden = Tensor2::zeros(mem_cache.w_obs, d_model);
        for (i, &g) in mem_cache.grid.iter().enumerate() {
            enc_hidden.row_mut(g).copy_from_slice(&d_concat.row(i)[..d_model]);
        }
        MemoryGrads {
            enc_hidden,
            raw: d_concat.col_slice(d_model + d_emb, self.config.d_in),
        }
    }

    pub fn cast<U: Real>(&self) -> Predictor<U> {
        Predictor {
            config: self.config.clone(),
            embedding: self.embedding.cast(),
            memory_proj: self.memory_proj.cast(),
            input_proj: self.input_proj.cast(),
            layers: self.layers.iter().map(DecoderLayer::cast).collect(),
            final_norm: self.final_norm.cast(),
            gesture_head: self.gesture_head.cast(),
            traj_head: self.traj_head.cast(),
        }
    }
}

impl<T: Real> Parameterized<T> for Predictor<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a ParamTensor<T>)) {
        f(&join(prefix, "embedding"), &self.embedding);
        self.memory_proj.visit_params(&join(prefix, "memory_proj"), f);
        self.input_proj.visit_params(&join(prefix, "input_proj"), f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit_params(&join(prefix, &format!("dec{i}")), f);
        }
        self.final_norm.visit_params(&join(prefix, "final_norm"), f);
        self.gesture_head.visit_params(&join(prefix, "gesture_head"), f);
        self.traj_head.visit_params(&join(prefix, "traj_head"), f);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamTensor<T>)) {
        f(&join(prefix, "embedding"), &mut self.embedding);
        self.memory_proj.visit_params_mut(&join(prefix, "memory_proj"), f);
        self.input_proj.visit_params_mut(&join(prefix, "input_proj"), f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_params_mut(&join(prefix, &format!("dec{i}")), f);
        }
        self.final_norm.visit_params_mut(&join(prefix, "final_norm"), f);
        self.gesture_head.visit_params_mut(&join(prefix, "gesture_head"), f);
        self.traj_head.visit_params_mut(&join(prefix, "traj_head"), f);
    }
}

pub struct MultitaskLoss<T> {
    pub loss: T,
    pub gesture: T,
    pub trajectory: T,
    pub d_logits: Tensor2<T>,
    pub d_traj: Tensor2<T>,
}

/// `w_g · CE + w_t · Σ‖Δp‖²`. A horizon with no labelled step contributes
/// no gesture term.
pub fn multitask_loss<T: Real>(
    gesture_logits: &Tensor2<T>,
    gesture_targets: &[Option<usize>],
    traj: &Tensor2<T>,
    traj_targets: &Tensor2<T>,
    w: LossWeights,
) -> Result<MultitaskLoss<T>> {
    w.validate()?;
    let (ce, mut d_logits) = if gesture_targets.iter().any(Option::is_some) {
        let lg = cross_entropy(gesture_logits, gesture_targets)?;
        (lg.loss, lg.grad)
    } else if gesture_targets.len() != gesture_logits.rows() {
        return Err(Error::dim(
            "multitask_loss",
            gesture_logits.shape_str(),
            format!("{} labels", gesture_targets.len()),
        ));
    } else {
        (T::zero(), Tensor2::zeros(gesture_logits.rows(), gesture_logits.cols()))
    };
    let l2 = cumulative_l2(traj, traj_targets)?;
    let (wg, wt) = (T::of(w.gesture), T::of(w.trajectory));
    d_logits.scale(wg);
    let mut d_traj = l2.grad;
    d_traj.scale(wt);
    Ok(MultitaskLoss {
        loss: wg * ce + wt * l2.loss,
        gesture: ce,
        trajectory: l2.loss,
        d_logits,
        d_traj,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndToEnd<T> {
    pub obs_labels: Vec<usize>,
    pub pred_labels: Vec<usize>,
    pub trajectory: Tensor2<T>,
}

/// Recognize the window, build memory from the recognized labels and decode
/// both heads autoregressively.
pub fn end_to_end_infer<T: Real>(
    window: &Tensor2<T>,
    origin: &[T; TRAJ_DIM],
    recognizer: &Recognizer<T>,
    predictor: &Predictor<T>,
) -> Result<EndToEnd<T>> {
    let (out, _) = recognizer.encoder_forward(window, &mut Mode::Eval)?;
    let obs_labels = out.logits.argmax_rows();
    let gestures: Vec<Option<usize>> = obs_labels.iter().map(|&c| Some(c)).collect();
    let raw = window.select_rows((0..window.rows()).step_by(predictor.config.factor));
    let (memory, _) = predictor.build_memory(&out.hidden, &gestures, &raw)?;
    let p = predictor.predict(&memory, origin, DecodeMode::Autoregressive)?;
    Ok(EndToEnd {
        obs_labels,
        pred_labels: p.gestures(),
        trajectory: p.trajectory,
    })
}
