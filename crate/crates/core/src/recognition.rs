//! Per-frame gesture recognition: temporal-convolution features, a
//! transformer encoder and a linear classification head.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{TcnCache, TcnConfig, TcnEncoder};
use crate::nn::norm::LayerNormCache;
use crate::nn::param::join;
use crate::nn::transformer::EncoderLayerCache;
use crate::nn::{
    cross_entropy, sinusoidal_positions, EncoderLayer, LayerNorm, Linear, LossGrad, Mode, ParamTensor, Parameterized,
    Real, Tensor2,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecognizerConfig {
    pub d_in: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub fc_dim: usize,
    pub tcn_channels: Vec<usize>,
    pub tcn_width: usize,
}

impl RecognizerConfig {
    /// Three encoder layers, two heads, width 60, ten output classes.
    pub fn paper(d_in: usize) -> Self {
        Self {
            d_in,
            d_model: 60,
            layers: 3,
            heads: 2,
            d_ff: 240,
            fc_dim: 10,
            tcn_channels: vec![32, 64, 60],
            tcn_width: 5,
        }
    }

    pub fn tcn(&self) -> TcnConfig {
        TcnConfig {
            d_in: self.d_in,
            channels: self.tcn_channels.clone(),
            width: self.tcn_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tcn_channels.last() != Some(&self.d_model) {
            return Err(Error::Config(format!(
                "temporal encoder must end at d_model = {}, channel plan is {:?}",
                self.d_model, self.tcn_channels
            )));
        }
        if self.d_in == 0 || self.fc_dim == 0 || self.layers == 0 {
            return Err(Error::Config("recognizer dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Recognizer<T = f64> {
    pub config: RecognizerConfig,
    pub tcn: TcnEncoder<T>,
    pub layers: Vec<EncoderLayer<T>>,
    pub final_norm: LayerNorm<T>,
    pub head: Linear<T>,
}

/// Intermediate values of one forward pass, consumed by `backward`.
pub struct RecognizerCache<T> {
    tcn: TcnCache<T>,
    layers: Vec<EncoderLayerCache<T>>,
    final_norm: LayerNormCache<T>,
    hidden: Tensor2<T>,
}

pub struct EncoderOutput<T> {
    pub hidden: Tensor2<T>,
    pub logits: Tensor2<T>,
}

impl<T: Real> Recognizer<T> {
    pub fn new(config: RecognizerConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let tcn = TcnEncoder::new(&config.tcn(), rng)?;
        let layers = (0..config.layers)
            .map(|_| EncoderLayer::new(config.d_model, config.heads, config.d_ff, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            final_norm: LayerNorm::new(config.d_model),
            head: Linear::new(config.d_model, config.fc_dim, rng),
            tcn,
            layers,
            config,
        })
    }

    /// Hidden states `W×d_model` and logits `W×fc_dim` for one window.
    pub fn encoder_forward(&self, x: &Tensor2<T>, mode: &mut Mode) -> Result<(EncoderOutput<T>, RecognizerCache<T>)> {
        let (mut h, tcn) = self.tcn.forward(x)?;
        h.add_assign(&sinusoidal_positions(h.rows(), h.cols()));
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(&h, mode)?;
            caches.push(c);
            h = y;
        }
        let (hidden, final_norm) = self.final_norm.forward(&h);
        let logits = self.head.forward(&hidden)?;
        Ok((
            EncoderOutput {
                hidden: hidden.clone(),
                logits,
            },
            RecognizerCache {
                tcn,
                layers: caches,
                final_norm,
                hidden,
            },
        ))
    }

    /// Per-frame class indices; ties go to the lowest index.
    pub fn recognize(&self, x: &Tensor2<T>) -> Result<Vec<usize>> {
        Ok(self.encoder_forward(x, &mut Mode::Eval)?.0.logits.argmax_rows())
    }

    /// Accumulates parameter gradients from `d_logits` and returns the
    /// gradient with respect to the input window.
    pub fn backward(&mut self, cache: &RecognizerCache<T>, d_logits: &Tensor2<T>) -> Tensor2<T> {
        let dh = self.head.backward(&cache.hidden, d_logits);
        let mut g = self.final_norm.backward(&cache.final_norm, &dh);
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers).rev() {
            g = layer.backward(c, &g);
        }
        self.tcn.backward(&cache.tcn, &g)
    }

    pub fn cast<U: Real>(&self) -> Recognizer<U> {
        Recognizer {
            config: self.config.clone(),
            tcn: self.tcn.cast(),
            layers: self.layers.iter().map(EncoderLayer::cast).collect(),
            final_norm: self.final_norm.cast(),
            head: self.head.cast(),
        }
    }
}

impl<T: Real> Parameterized<T> for Recognizer<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a ParamTensor<T>)) {
        self.tcn.visit_params(&join(prefix, "tcn"), f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit_params(&join(prefix, &format!("enc{i}")), f);
        }
        self.final_norm.visit_params(&join(prefix, "final_norm"), f);
        self.head.visit_params(&join(prefix, "head"), f);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamTensor<T>)) {
        self.tcn.visit_params_mut(&join(prefix, "tcn"), f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_params_mut(&join(prefix, &format!("enc{i}")), f);
        }
        self.final_norm.visit_params_mut(&join(prefix, "final_norm"), f);
        self.head.visit_params_mut(&join(prefix, "head"), f);
    }
}

/// Masked mean cross-entropy; `None` frames are ignored.
pub fn recognition_loss<T: Real>(logits: &Tensor2<T>, labels: &[Option<usize>]) -> Result<LossGrad<T>> {
    cross_entropy(logits, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn model(seed: u64) -> Recognizer {
        Recognizer::new(RecognizerConfig::paper(14), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn window(seed: u64) -> Tensor2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        Tensor2::from_vec(30, 14, (0..420).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn paper_shapes() {
        let m = model(0);
        let (out, _) = m.encoder_forward(&window(1), &mut Mode::Eval).unwrap();
        assert_eq!(out.hidden.shape(), (30, 60));
        assert_eq!(out.logits.shape(), (30, 10));
        assert_eq!(m.recognize(&window(1)).unwrap().len(), 30);
    }

    #[test]
    fn eval_is_deterministic_and_position_aware() {
        let m = model(0);
        let x = window(2);
        let a = m.encoder_forward(&x, &mut Mode::Eval).unwrap().0.logits;
        let b = m.encoder_forward(&x, &mut Mode::Eval).unwrap().0.logits;
        assert_eq!(a, b);
        let rev = x.select_rows((0..30).rev());
        let c = m.encoder_forward(&rev, &mut Mode::Eval).unwrap().0.logits;
        assert_ne!(a, c.select_rows((0..30).rev()));
    }

    #[test]
    fn equal_logits_pick_index_zero() {
        let mut m = model(0);
        m.head.w.value.fill(0.0);
        assert!(m.recognize(&window(3)).unwrap().iter().all(|&c| c == 0));
    }

    #[test]
    fn bad_channel_plan() {
        let mut cfg = RecognizerConfig::paper(14);
        cfg.tcn_channels = vec![32, 64, 50];
        assert!(Recognizer::<f64>::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
