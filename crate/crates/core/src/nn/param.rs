use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{Real, Tensor2};

/// A learnable tensor together with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T = f64> {
    pub value: Tensor2<T>,
    pub grad: Tensor2<T>,
}

impl<T: Real> ParamTensor<T> {
    pub fn new(value: Tensor2<T>) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Tensor2::zeros(r, c),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Tensor2::zeros(rows, cols))
    }

    /// Uniform Glorot initialisation with the given fan-in/fan-out.
    pub fn xavier(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| T::of(rng.random_range(-limit..limit)))
            .collect();
        Self::new(Tensor2::from_vec(rows, cols, data).expect("sized above"))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cast<U: Real>(&self) -> ParamTensor<U> {
        ParamTensor::new(self.value.cast())
    }
}

/// Anything that owns parameters. Visit order is fixed and defines the
/// layout used by optimizers and checkpoints.
pub trait Parameterized<T: Real> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a ParamTensor<T>));
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamTensor<T>));

    fn zero_grad(&mut self) {
        self.visit_params_mut("", &mut |_, p| p.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, p| n += p.len());
        n
    }

    /// Names and shapes in visit order.
    fn param_shapes(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        self.visit_params("", &mut |name, p| out.push((name.to_string(), p.value.shape())));
        out
    }

    fn grads_finite(&self) -> bool {
        let mut ok = true;
        self.visit_params("", &mut |_, p| ok &= p.grad.is_finite());
        ok
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Forward-pass mode. Dropout is active only in `Train`.
pub enum Mode<'a> {
    Eval,
    Train { dropout: f64, rng: &'a mut ChaCha8Rng },
}

impl Mode<'_> {
    /// Draws an inverted-dropout mask of `n` scale factors, or `None` when
    /// dropout is inactive.
    pub(crate) fn dropout_mask<T: Real>(&mut self, n: usize) -> Option<Vec<T>> {
        match self {
            Mode::Train { dropout, rng } if *dropout > 0.0 => {
                let keep = 1.0 - *dropout;
                let scale = T::of(1.0 / keep);
                Some(
                    (0..n)
                        .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                        .collect(),
                )
            }
            _ => None,
        }
    }
}

pub(crate) fn apply_mask<T: Real>(x: &mut Tensor2<T>, mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (v, &s) in x.data_mut().iter_mut().zip(m) {
            *v *= s;
        }
    }
}
