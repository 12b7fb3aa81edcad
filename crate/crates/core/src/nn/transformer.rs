//! Pre-norm transformer encoder and decoder layers.

use rand_chacha::ChaCha8Rng;

use super::attention::{MhaCache, MultiHeadAttention};
use super::conv::{relu, relu_backward};
use super::linear::Linear;
use super::norm::{LayerNorm, LayerNormCache};
use super::param::{apply_mask, join, Mode, ParamTensor, Parameterized};
use super::tensor::{Real, Tensor2};
use crate::error::Result;

/// Fixed sinusoidal position table, `len × d`.
pub fn sinusoidal_positions<T: Real>(len: usize, d: usize) -> Tensor2<T> {
    let mut pe = Tensor2::zeros(len, d);
    for t in 0..len {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = t as f64 / 10000f64.powf(2.0 * pair / d as f64);
            pe[(t, i)] = T::of(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

/// Position-wise `Linear → ReLU → Linear`, dropout on the output.
#[derive(Debug, Clone)]
pub struct FeedForward<T = f64> {
    pub inner: Linear<T>,
    pub outer: Linear<T>,
}

pub struct FfnCache<T> {
    x: Tensor2<T>,
    hidden: Tensor2<T>,
    mask: Option<Vec<T>>,
}

impl<T: Real> FeedForward<T> {
    pub fn new(d_model: usize, d_ff: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            inner: Linear::new(d_model, d_ff, rng),
            outer: Linear::new(d_ff, d_model, rng),
        }
    }

    pub fn forward(&self, x: &Tensor2<T>, mode: &mut Mode) -> Result<(Tensor2<T>, FfnCache<T>)> {
        let hidden = relu(&self.inner.forward(x)?);
        let mut y = self.outer.forward(&hidden)?;
        let mask = mode.dropout_mask::<T>(y.data().len());
        apply_mask(&mut y, &mask);
        Ok((
            y,
            FfnCache {
                x: x.clone(),
                hidden,
                mask,
            },
        ))
    }

    pub fn backward(&mut self, cache: &FfnCache<T>, dy: &Tensor2<T>) -> Tensor2<T> {
        let mut dy = dy.clone();
        apply_mask(&mut dy, &cache.mask);
        let dh = self.outer.backward(&cache.hidden, &dy);
        let dh = relu_backward(&cache.hidden, &dh);
        self.inner.backward(&cache.x, &dh)
    }

    pub fn cast<U: Real>(&self) -> FeedForward<U> {
        FeedForward {
            inner: self.inner.cast(),
            outer: self.outer.cast(),
        }
    }
}

impl<T: Real> Parameterized<T> for FeedForward<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a ParamTensor<T>)) {
        self.inner.visit_params(&join(prefix, "inner"), f);
        self.outer.visit_params(&join(prefix, "outer"), f);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamTensor<T>)) {
        self.inner.visit_params_mut(&join(prefix, "inner"), f);
        self.outer.visit_params_mut(&join(prefix, "outer"), f);
    }
}

/// `h = x + MHA(LN(x)); y = h + FFN(LN(h))`.
#[derive(Debug, Clone)]
pub struct EncoderLayer<T = f64> {
    pub norm_attn: LayerNorm<T>,
    pub attn: MultiHeadAttention<T>,
    pub norm_ffn: LayerNorm<T>,
    pub ffn: FeedForward<T>,
}

pub struct EncoderLayerCache<T> {
    ln1: LayerNormCache<T>,
    attn: MhaCache<T>,
    ln2: LayerNormCache<T>,
    ffn: FfnCache<T>,
}

impl<T: Real> EncoderLayer<T> {
    pub fn new(d_model: usize, heads: usize, d_ff: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            norm_attn: LayerNorm::new(d_model),
            attn: MultiHeadAttention::new(d_model, heads, rng)?,
            norm_ffn: LayerNorm::new(d_model),
            ffn: FeedForward::new(d_model, d_ff, rng),
        })
    }

    pub fn forward(&self, x: &Tensor2<T>, mode: &mut Mode) -> Result<(Tensor2<T>, EncoderLayerCache<T>)> {
        let (n1, ln1) = self.norm_attn.forward(x);
        let (a, attn) = self.attn.forward(&n1, &n1, false, mode)?;
        let h = x.add(&a);
        let (n2, ln2) = self.norm_ffn.forward(&h);
        let (f, ffn) = self.ffn.forward(&n2, mode)?;
        Ok((h.add(&f), EncoderLayerCache { ln1, attn, ln2, ffn }))
    }

    pub fn backward(&mut self, cache: &EncoderLayerCache<T>, dy: &Tensor2<T>) -> Tensor2<T> {
        let dn2 = self.ffn.backward(&cache.ffn, dy);
        let mut dh = self.norm_ffn.backward(&cache.ln2, &dn2);
        dh.add_assign(dy);
        let (dq, dkv) = self.attn.backward(&cache.attn, &dh);
        let dn1 = dq.add(&dkv);
        let mut dx = self.norm_attn.backward(&cache.ln1, &dn1);
        dx.add_assign(&dh);
        dx
    }

    pub fn cast<U: Real>(&self) -> EncoderLayer<U> {
        EncoderLayer {
            norm_attn: self.norm_attn.cast(),
            attn: self.attn.cast(),
            norm_ffn: self.norm_ffn.cast(),
            ffn: self.ffn.cast(),
        }
    }
}

impl<T: Real> Parameterized<T> for EncoderLayer<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a ParamTensor<T>)) {
        self.norm_attn.visit_params(&join(prefix, "norm_attn"), f);
        self.attn.visit_params(&join(prefix, "attn"), f);
        self.norm_ffn.visit_params(&join(prefix, "norm_ffn"), f);
        self.ffn.visit_params(&join(prefix, "ffn"), f);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamTensor<T>)) {
        self.norm_attn.visit_params_mut(&join(prefix, "norm_attn"), f);
        self.attn.visit_params_mut(&join(prefix, "attn"), f);
        self.norm_ffn.visit_params_mut(&join(prefix, "norm_ffn"), f);
        self.ffn.visit_params_mut(&join(prefix, "ffn"), f);
    }
}

/// Causal self-attention, cross-attention over `memory`, then FFN; all pre-norm.
#[derive(Debug, Clone)]
pub struct DecoderLayer<T = f64> {
    pub norm_self: LayerNorm<T>,
    pub self_attn: MultiHeadAttention<T>,
    pub norm_cross: LayerNorm<T>,
    pub cross_attn: MultiHeadAttention<T>,
    pub norm_ffn: LayerNorm<T>,
    pub ffn: FeedForward<T>,
}

pub struct DecoderLayerCache<T> {
    ln1: LayerNormCache<T>,
    self_attn: MhaCache<T>,
    ln2: LayerNormCache<T>,
    cross_attn: MhaCache<T>,
    ln3: LayerNormCache<T>,
    ffn: FfnCache<T>,
}

impl<T: Real> DecoderLayer<T> {
    pub fn new(d_model: usize, heads: usize, d_ff: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            norm_self: LayerNorm::new(d_model),
            self_attn: MultiHeadAttention::new(d_model, heads, rng)?,
            norm_cross: LayerNorm::new(d_model),
            cross_attn: MultiHeadAttention::new(d_model, heads, rng)?,
            norm_ffn: LayerNorm::new(d_model),
            ffn: FeedForward::new(d_model, d_ff, rng),
        })
    }

    pub fn forward(
        &self,
        x: &Tensor2<T>,
        memory: &Tensor2<T>,
        mode: &mut Mode,
    ) -> Result<(Tensor2<T>, DecoderLayerCache<T>)> {
        let (n1, ln1) = self.norm_self.forward(x);
        let (a, self_attn) = self.self_attn.forward(&n1, &n1, true, mode)?;
        let h1 = x.add(&a);
        let (n2, ln2) = self.norm_cross.forward(&h1);
        let (c, cross_attn) = self.cross_attn.forward(&n2, memory, false, mode)?;
        let h2 = h1.add(&c);
        let (n3, ln3) = self.norm_ffn.forward(&h2);
        let (f, ffn) = self.ffn.forward(&n3, mode)?;
        Ok((
            h2.add(&f),
            DecoderLayerCache {
                ln1,
                self_attn,
                ln2,
                cross_attn,
                ln3,
                ffn,
            },
        ))
    }

    /// Returns `(dx, dmemory)`.
    pub fn backward(&mut self, cache: &DecoderLayerCache<T>, dy: &Tensor2<T>) -> (Tensor2<T>, Tensor2<T>) {
        let dn3 = self.ffn.backward(&cache.ffn, dy);
        let mut dh2 = self.norm_ffn.backward(&cache.ln3, &dn3);
        dh2.add_assign(dy);
        let (dn2, dmem) = self.cross_attn.backward(&cache.cross_attn, &dh2);
        let mut dh1 = self.norm_cross.backward(&cache.ln2, &dn2);
        dh1.add_assign(&dh2);
        let (dq, dkv) = self.self_attn.backward(&cache.self_attn, &dh1);
        let mut dx = self.norm_self.backward(&cache.ln1, &dq.add(&dkv));
        dx.add_assign(&dh1);
        (dx, dmem)
    }

    pub fn cast<U: Real>(&self) -> DecoderLayer<U> {
        DecoderLayer {
            norm_self: self.norm_self.cast(),
            self_attn: self.self_attn.cast(),
            norm_cross: self.norm_cross.cast(),
            cross_attn: self.cross_attn.cast(),
            norm_ffn: self.norm_ffn.cast(),
            ffn: self.ffn.cast(),
        }
    }
}

impl<T: Real> Parameterized<T> for DecoderLayer<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a ParamTensor<T>)) {
        self.norm_self.visit_params(&join(prefix, "norm_self"), f);
        self.self_attn.visit_params(&join(prefix, "self_attn"), f);
        self.norm_cross.visit_params(&join(prefix, "norm_cross"), f);
        self.cross_attn.visit_params(&join(prefix, "cross_attn"), f);
        self.norm_ffn.visit_params(&join(prefix, "norm_ffn"), f);
        self.ffn.visit_params(&join(prefix, "ffn"), f);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamTensor<T>)) {
        self.norm_self.visit_params_mut(&join(prefix, "norm_self"), f);
        self.self_attn.visit_params_mut(&join(prefix, "self_attn"), f);
        self.norm_cross.visit_params_mut(&join(prefix, "norm_cross"), f);
        self.cross_attn.visit_params_mut(&join(prefix, "cross_attn"), f);
        self.norm_ffn.visit_params_mut(&join(prefix, "norm_ffn"), f);
        self.ffn.visit_params_mut(&join(prefix, "ffn"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_start_with_sin_cos_of_zero() {
        let pe = sinusoidal_positions::<f64>(3, 4);
        assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe[(1, 0)] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[(1, 3)] - (1.0 / 100f64).cos()).abs() < 1e-15);
    }
}
