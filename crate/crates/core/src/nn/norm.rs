use super::param::{join, ParamTensor, Parameterized};
use super::tensor::{Real, Tensor2};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerNorm<T = f64> {
    pub gain: ParamTensor<T>,
    pub bias: ParamTensor<T>,
    pub eps: f64,
}

pub struct LayerNormCache<T> {
    xhat: Tensor2<T>,
    inv_std: Vec<T>,
}

impl<T: Real> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: ParamTensor::new(Tensor2::filled(1, dim, T::one())),
            bias: ParamTensor::zeros(1, dim),
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn forward(&self, x: &Tensor2<T>) -> (Tensor2<T>, LayerNormCache<T>) {
        layer_norm(x, &self.gain, &self.bias, self.eps)
    }

    pub fn backward(&mut self, cache: &LayerNormCache<T>, dy: &Tensor2<T>) -> Tensor2<T> {
        let (rows, cols) = dy.shape();
        let n = T::of(cols as f64);
        let mut dx = Tensor2::zeros(rows, cols);
        let gain = self.gain.value.row(0).to_vec();
        for r in 0..rows {
            let xh = cache.xhat.row(r);
            let g = dy.row(r);
            let mut sum_d = T::zero();
            let mut sum_dx = T::zero();
            for c in 0..cols {
                let d = g[c] * gain[c];
                sum_d += d;
                sum_dx += d * xh[c];
                self.gain.grad[(0, c)] += g[c] * xh[c];
                self.bias.grad[(0, c)] += g[c];
            }
            let mean_d = sum_d / n;
            let mean_dx = sum_dx / n;
            let s = cache.inv_std[r];
            let out = dx.row_mut(r);
            for c in 0..cols {
                out[c] = s * (g[c] * gain[c] - mean_d - xh[c] * mean_dx);
            }
        }
        dx
    }

    pub fn cast<U: Real>(&self) -> LayerNorm<U> {
        LayerNorm {
            gain: self.gain.cast(),
            bias: self.bias.cast(),
            eps: self.eps,
        }
    }
}

impl<T: Real> Parameterized<T> for LayerNorm<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a ParamTensor<T>)) {
        f(&join(prefix, "gain"), &self.gain);
        f(&join(prefix, "bias"), &self.bias);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamTensor<T>)) {
        f(&join(prefix, "gain"), &mut self.gain);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Row-wise normalisation to zero mean / unit variance followed by
/// `gain ⊙ x̂ + bias`.
pub fn layer_norm<T: Real>(
    x: &Tensor2<T>,
    gain: &ParamTensor<T>,
    bias: &ParamTensor<T>,
    eps: f64,
) -> (Tensor2<T>, LayerNormCache<T>) {
    let (rows, cols) = x.shape();
    let n = T::of(cols as f64);
    let eps = T::of(eps);
    let mut xhat = Tensor2::zeros(rows, cols);
    let mut y = Tensor2::zeros(rows, cols);
    let mut inv_std = Vec::with_capacity(rows);
    let g = gain.value.row(0);
    let b = bias.value.row(0);
    for r in 0..rows {
        let xr = x.row(r);
        let mean = xr.iter().copied().sum::<T>() / n;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let s = T::one() / (var + eps).sqrt();
        inv_std.push(s);
        let xh = xhat.row_mut(r);
        for c in 0..cols {
            xh[c] = (xr[c] - mean) * s;
        }
        let yr = y.row_mut(r);
        for c in 0..cols {
            yr[c] = g[c] * xhat[(r, c)] + b[c];
        }
    }
    (y, LayerNormCache { xhat, inv_std })
}
