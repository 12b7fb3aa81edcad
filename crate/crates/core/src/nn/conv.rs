//! Temporal convolution, ReLU, max pooling and nearest-neighbour upsampling.

use rand_chacha::ChaCha8Rng;

use super::param::{join, ParamTensor, Parameterized};
use super::tensor::{matmul_at_acc, Real, Tensor2};
use crate::error::{Error, Result};

/// Same-length 1-D convolution over time with symmetric zero padding.
///
/// The kernel is stored as a `(k·din) × dout` matrix whose row `j·din + c`
/// holds the weights for tap `j` and input channel `c`.
#[derive(Debug, Clone)]
pub struct Conv1d<T = f64> {
    pub kernel: ParamTensor<T>,
    pub bias: ParamTensor<T>,
    pub width: usize,
}

impl<T: Real> Conv1d<T> {
    pub fn new(din: usize, dout: usize, width: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        check_width(width)?;
        Ok(Self {
            kernel: ParamTensor::xavier(width * din, dout, width * din, width * dout, rng),
            bias: ParamTensor::zeros(1, dout),
            width,
        })
    }

    pub fn din(&self) -> usize {
        self.kernel.value.rows() / self.width
    }

    pub fn dout(&self) -> usize {
        self.kernel.value.cols()
    }

    /// Returns the output and the unfolded input needed by `backward`.
    pub fn forward(&self, x: &Tensor2<T>) -> Result<(Tensor2<T>, Tensor2<T>)> {
        temporal_conv1d(x, &self.kernel, &self.bias, self.width)
    }

    pub fn backward(&mut self, unfolded: &Tensor2<T>, dy: &Tensor2<T>) -> Tensor2<T> {
        matmul_at_acc(unfolded, dy, &mut self.kernel.grad);
        self.bias.grad.add_assign(&dy.sum_rows());
        let dcols = dy.matmul_bt(&self.kernel.value).expect("shapes fixed by forward");
        fold(&dcols, self.width, self.din())
    }

    pub fn cast<U: Real>(&self) -> Conv1d<U> {
        Conv1d {
            kernel: self.kernel.cast(),
            bias: self.bias.cast(),
            width: self.width,
        }
    }
}

impl<T: Real> Parameterized<T> for Conv1d<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a ParamTensor<T>)) {
        f(&join(prefix, "kernel"), &self.kernel);
        f(&join(prefix, "bias"), &self.bias);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamTensor<T>)) {
        f(&join(prefix, "kernel"), &mut self.kernel);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

fn check_width(width: usize) -> Result<()> {
    if width.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "temporal convolution needs an odd kernel width, got {width}"
        )));
    }
    Ok(())
}

/// `out[t] = Σ_j kernel[j]·x[t + j − k/2] + bias`, zero outside `[0, T)`.
///
/// Returns `(out, unfolded_input)`.
pub fn temporal_conv1d<T: Real>(
    x: &Tensor2<T>,
    kernel: &ParamTensor<T>,
    bias: &ParamTensor<T>,
    width: usize,
) -> Result<(Tensor2<T>, Tensor2<T>)> {
    check_width(width)?;
    let din = x.cols();
    if kernel.value.rows() != width * din {
        return Err(Error::dim(
            "temporal_conv1d",
            x.shape_str(),
            format!("kernel {} (width {width})", kernel.value.shape_str()),
        ));
    }
    let cols = unfold(x, width);
    let mut out = cols.matmul(&kernel.value)?;
    out.add_row_broadcast(&bias.value);
    Ok((out, cols))
}

fn unfold<T: Real>(x: &Tensor2<T>, width: usize) -> Tensor2<T> {
    let (t_len, din) = x.shape();
    let half = (width / 2) as isize;
    let mut cols = Tensor2::zeros(t_len, width * din);
    for t in 0..t_len {
        let dst = cols.row_mut(t);
        for j in 0..width {
            let src = t as isize + j as isize - half;
            if src >= 0 && (src as usize) < t_len {
                dst[j * din..(j + 1) * din].copy_from_slice(x.row(src as usize));
            }
        }
    }
    cols
}

fn fold<T: Real>(dcols: &Tensor2<T>, width: usize, din: usize) -> Tensor2<T> {
    let t_len = dcols.rows();
    let half = (width / 2) as isize;
    let mut dx = Tensor2::zeros(t_len, din);
    for t in 0..t_len {
        let src = dcols.row(t);
        for j in 0..width {
            let at = t as isize + j as isize - half;
            if at >= 0 && (at as usize) < t_len {
                for (d, &g) in dx.row_mut(at as usize).iter_mut().zip(&src[j * din..(j + 1) * din]) {
                    *d += g;
                }
            }
        }
    }
    dx
}

pub fn relu<T: Real>(x: &Tensor2<T>) -> Tensor2<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given the forward *output*.
pub fn relu_backward<T: Real>(y: &Tensor2<T>, dy: &Tensor2<T>) -> Tensor2<T> {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
    dx
}

/// Channel-wise max over non-overlapping pairs; an odd tail passes through.
///
/// Returns the pooled tensor and, per output cell, the source row chosen.
pub fn max_pool1d<T: Real>(x: &Tensor2<T>) -> (Tensor2<T>, Vec<usize>) {
    let (t_len, d) = x.shape();
    let out_len = t_len.div_ceil(2);
    let mut y = Tensor2::zeros(out_len, d);
    let mut argmax = vec![0usize; out_len * d];
    for o in 0..out_len {
        let a = 2 * o;
        let b = (a + 1).min(t_len - 1);
        for c in 0..d {
            let (va, vb) = (x[(a, c)], x[(b, c)]);
            let (src, v) = if vb > va { (b, vb) } else { (a, va) };
            y[(o, c)] = v;
            argmax[o * d + c] = src;
        }
    }
    (y, argmax)
}

pub fn max_pool1d_backward<T: Real>(dy: &Tensor2<T>, argmax: &[usize], in_len: usize) -> Tensor2<T> {
    let d = dy.cols();
    let mut dx = Tensor2::zeros(in_len, d);
    for o in 0..dy.rows() {
        for c in 0..d {
            dx[(argmax[o * d + c], c)] += dy[(o, c)];
        }
    }
    dx
}

/// Repeat counts for nearest-neighbour upsampling from `t_in` to `t_out`.
///
/// Split points are `round(i·t_out/t_in)` with halves rounded up, so input
/// row `i` covers output rows `[s_i, s_{i+1})`.
pub fn repeat_counts(t_in: usize, t_out: usize) -> Vec<usize> {
    let split = |i: usize| (2 * i * t_out + t_in) / (2 * t_in);
    (0..t_in).map(|i| split(i + 1) - split(i)).collect()
}

pub fn upsample_repeat<T: Real>(x: &Tensor2<T>, target_len: usize) -> Result<Tensor2<T>> {
    let t_in = x.rows();
    if target_len < t_in || t_in == 0 {
        return Err(Error::Contract(format!(
            "upsample target length {target_len} is shorter than input length {t_in}"
        )));
    }
    let mut y = Tensor2::zeros(target_len, x.cols());
    let mut at = 0;
    for (i, n) in repeat_counts(t_in, target_len).into_iter().enumerate() {
        for _ in 0..n {
            y.row_mut(at).copy_from_slice(x.row(i));
            at += 1;
        }
    }
    Ok(y)
}

pub fn upsample_repeat_backward<T: Real>(dy: &Tensor2<T>, t_in: usize) -> Tensor2<T> {
    let mut dx = Tensor2::zeros(t_in, dy.cols());
    let mut at = 0;
    for (i, n) in repeat_counts(t_in, dy.rows()).into_iter().enumerate() {
        for _ in 0..n {
            for (d, &g) in dx.row_mut(i).iter_mut().zip(dy.row(at)) {
                *d += g;
            }
            at += 1;
        }
    }
    dx
}
