use rand_chacha::ChaCha8Rng;

use super::param::{join, ParamTensor, Parameterized};
use super::tensor::{matmul_at_acc, Real, Tensor2};
use crate::error::{Error, Result};

/// Fully connected layer `y = x·W + b`.
#[derive(Debug, Clone)]
pub struct Linear<T = f64> {
    pub w: ParamTensor<T>,
    pub b: ParamTensor<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(din: usize, dout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: ParamTensor::xavier(din, dout, din, dout, rng),
            b: ParamTensor::zeros(1, dout),
        }
    }

    pub fn from_params(w: Tensor2<T>, b: Tensor2<T>) -> Result<Self> {
        if b.rows() != 1 || b.cols() != w.cols() {
            return Err(Error::dim("Linear::from_params", w.shape_str(), b.shape_str()));
        }
        Ok(Self {
            w: ParamTensor::new(w),
            b: ParamTensor::new(b),
        })
    }

    pub fn din(&self) -> usize {
        self.w.value.rows()
    }

    pub fn dout(&self) -> usize {
        self.w.value.cols()
    }

    pub fn forward(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        linear_forward(x, &self.w, &self.b)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    /// `x` is the input the forward pass saw.
    pub fn backward(&mut self, x: &Tensor2<T>, dy: &Tensor2<T>) -> Tensor2<T> {
        matmul_at_acc(x, dy, &mut self.w.grad);
        self.b.grad.add_assign(&dy.sum_rows());
        dy.matmul_bt(&self.w.value).expect("shapes fixed by forward")
    }

    pub fn cast<U: Real>(&self) -> Linear<U> {
        Linear {
            w: self.w.cast(),
            b: self.b.cast(),
        }
    }
}

impl<T: Real> Parameterized<T> for Linear<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a ParamTensor<T>)) {
        f(&join(prefix, "w"), &self.w);
        f(&join(prefix, "b"), &self.b);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamTensor<T>)) {
        f(&join(prefix, "w"), &mut self.w);
        f(&join(prefix, "b"), &mut self.b);
    }
}

/// `out[t] = x[t]·w + b`.
pub fn linear_forward<T: Real>(x: &Tensor2<T>, w: &ParamTensor<T>, b: &ParamTensor<T>) -> Result<Tensor2<T>> {
    if x.cols() != w.value.rows() {
        return Err(Error::dim("linear", x.shape_str(), w.value.shape_str()));
    }
    if b.value.shape() != (1, w.value.cols()) {
        return Err(Error::dim("linear bias", w.value.shape_str(), b.value.shape_str()));
    }
    let mut y = x.matmul(&w.value)?;
    y.add_row_broadcast(&b.value);
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor2 {
        Tensor2::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let l = Linear::from_params(Tensor2::identity(2), Tensor2::zeros(1, 2)).unwrap();
        assert_eq!(l.forward(&t(&[&[1.0, 2.0]])).unwrap(), t(&[&[1.0, 2.0]]));
    }

    #[test]
    fn hand_multiplied_case() {
        let l = Linear::from_params(t(&[&[3.0], &[5.0]]), t(&[&[7.0]])).unwrap();
        let y = l.forward(&t(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(y, t(&[&[10.0], &[12.0]]));
    }

    #[test]
    fn head_shape() {
        let mut rng = rand::SeedableRng::seed_from_u64(0);
        let l = Linear::<f64>::new(60, 10, &mut rng);
        assert_eq!(l.forward(&Tensor2::zeros(30, 60)).unwrap().shape(), (30, 10));
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let l = Linear::from_params(Tensor2::<f64>::zeros(3, 2), Tensor2::zeros(1, 2)).unwrap();
        let msg = l.forward(&Tensor2::zeros(4, 5)).unwrap_err().to_string();
        assert!(msg.contains("4x5") && msg.contains("3x2"), "{msg}");
    }
}
