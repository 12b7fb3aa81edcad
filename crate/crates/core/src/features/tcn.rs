//! Temporal-convolution encoder: a stack of conv → ReLU → max-pool stages
//! followed by nearest-neighbour upsampling back to the window length.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::conv::{max_pool1d_backward, relu, relu_backward, upsample_repeat_backward};
use crate::nn::param::join;
use crate::nn::{max_pool1d, upsample_repeat, Conv1d, ParamTensor, Parameterized, Real, Tensor2};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcnConfig {
    pub d_in: usize,
    /// Output channels per layer; the last entry is `d_model`.
    pub channels: Vec<usize>,
    pub width: usize,
}

impl TcnConfig {
    pub fn new(d_in: usize, d_model: usize) -> Self {
        Self {
            d_in,
            channels: vec![32, 64, d_model],
            width: 5,
        }
    }

    pub fn d_model(&self) -> usize {
        *self.channels.last().expect("validated non-empty")
    }

    /// Shortest window the pooling stack can handle.
    pub fn min_window(&self) -> usize {
        1 << self.channels.len()
    }
}

#[derive(Debug, Clone)]
pub struct TcnEncoder<T = f64> {
    pub layers: Vec<Conv1d<T>>,
}

struct StageCache<T> {
    unfolded: Tensor2<T>,
    activated: Tensor2<T>,
    argmax: Vec<usize>,
}

pub struct TcnCache<T> {
    stages: Vec<StageCache<T>>,
    pooled_len: usize,
}

impl<T: Real> TcnEncoder<T> {
    pub fn new(config: &TcnConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        if config.channels.is_empty() {
            return Err(Error::Config("temporal encoder needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(config.channels.len());
        let mut din = config.d_in;
        for &dout in &config.channels {
            layers.push(Conv1d::new(din, dout, config.width, rng)?);
            din = dout;
        }
        Ok(Self { layers })
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].din()
    }

    pub fn d_model(&self) -> usize {
        self.layers.last().expect("non-empty").dout()
    }

    pub fn min_window(&self) -> usize {
        1 << self.layers.len()
    }

    fn check_input(&self, x: &Tensor2<T>) -> Result<()> {
        if x.rows() < self.min_window() {
            return Err(Error::Config(format!(
                "window of {} frames is shorter than {} needed by {} pooling stages",
                x.rows(),
                self.min_window(),
                self.layers.len()
            )));
        }
        if x.cols() != self.d_in() {
            return Err(Error::dim("tcn_encode", format!("d_in {}", self.d_in()), x.shape_str()));
        }
        Ok(())
    }

    /// Output of the last pooling stage, before upsampling.
    pub fn pooled(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            let (y, _) = layer.forward(&h)?;
            h = max_pool1d(&relu(&y)).0;
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Tensor2<T>) -> Result<(Tensor2<T>, TcnCache<T>)> {
        self.check_input(x)?;
        let mut stages = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (y, unfolded) = layer.forward(&h)?;
            let activated = relu(&y);
            let (pooled, argmax) = max_pool1d(&activated);
            stages.push(StageCache {
                unfolded,
                activated,
                argmax,
            });
            h = pooled;
        }
        let pooled_len = h.rows();
        Ok((upsample_repeat(&h, x.rows())?, TcnCache { stages, pooled_len }))
    }

    pub fn backward(&mut self, cache: &TcnCache<T>, dy: &Tensor2<T>) -> Tensor2<T> {
        let mut g = upsample_repeat_backward(dy, cache.pooled_len);
        for (layer, st) in self.layers.iter_mut().zip(&cache.stages).rev() {
            let da = max_pool1d_backward(&g, &st.argmax, st.activated.rows());
            let dz = relu_backward(&st.activated, &da);
            g = layer.backward(&st.unfolded, &dz);
        }
        g
    }

    pub fn cast<U: Real>(&self) -> TcnEncoder<U> {
        TcnEncoder {
            layers: self.layers.iter().map(Conv1d::cast).collect(),
        }
    }
}

impl<T: Real> Parameterized<T> for TcnEncoder<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a ParamTensor<T>)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit_params(&join(prefix, &format!("conv{i}")), f);
        }
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamTensor<T>)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_params_mut(&join(prefix, &format!("conv{i}")), f);
        }
    }
}

/// Encodes one window; see [`TcnEncoder::forward`].
pub fn tcn_encode<T: Real>(window: &Tensor2<T>, params: &TcnEncoder<T>) -> Result<Tensor2<T>> {
    Ok(params.forward(window)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn shapes_and_short_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc: TcnEncoder = TcnEncoder::new(&TcnConfig::new(14, 60), &mut rng).unwrap();
        let y = tcn_encode(&Tensor2::filled(30, 14, 0.3), &enc).unwrap();
        assert_eq!(y.shape(), (30, 60));
        assert_eq!(enc.pooled(&Tensor2::zeros(30, 14)).unwrap().rows(), 4);
        assert!(matches!(
            tcn_encode(&Tensor2::zeros(7, 14), &enc),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_in_zero_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc: TcnEncoder = TcnEncoder::new(&TcnConfig::new(5, 12), &mut rng).unwrap();
        let y = tcn_encode(&Tensor2::zeros(16, 5), &enc).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }
}
