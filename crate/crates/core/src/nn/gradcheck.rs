//! Central finite-difference checking of hand-written backward passes.

use super::param::Parameterized;
use super::tensor::Tensor2;

/// Relative errors of analytic against numeric gradients.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// One entry per input tensor.
    pub inputs: Vec<f64>,
    /// Over all parameters jointly; 0 when the model has none.
    pub params: f64,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.inputs.iter().copied().fold(self.params, f64::max)
    }
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, or 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

fn nudge<M: Parameterized<f64>>(model: &mut M, flat: usize, delta: f64) {
    let mut seen = 0;
    model.visit_params_mut("", &mut |_, p| {
        let n = p.len();
        if flat >= seen && flat < seen + n {
            p.value.data_mut()[flat - seen] += delta;
        }
        seen += n;
    });
}

fn collect_grads<M: Parameterized<f64>>(model: &M) -> Vec<f64> {
    let mut out = Vec::new();
    model.visit_params("", &mut |_, p| out.extend_from_slice(p.grad.data()));
    out
}

/// Compares `analytic` against central differences of `loss` with step `h`.
///
/// `analytic` must accumulate parameter gradients into the (pre-zeroed)
/// model and return one gradient per input tensor.
pub fn check_gradients<M, L, A>(model: &mut M, inputs: &[Tensor2], loss: L, analytic: A, h: f64) -> GradCheck
where
    M: Parameterized<f64>,
    L: Fn(&M, &[Tensor2]) -> f64,
    A: Fn(&mut M, &[Tensor2]) -> Vec<Tensor2>,
{
    model.zero_grad();
    let input_grads = analytic(model, inputs);
    let param_grads = collect_grads(model);

    let mut work: Vec<Tensor2> = inputs.to_vec();
    let mut input_errs = Vec::with_capacity(inputs.len());
    for (i, g) in input_grads.iter().enumerate() {
        let mut numeric = vec![0.0; g.data().len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = loss(model, &work);
            work[i].data_mut()[j] = orig - h;
            let down = loss(model, &work);
            work[i].data_mut()[j] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        input_errs.push(relative_error(g.data(), &numeric));
    }

    let mut numeric = vec![0.0; param_grads.len()];
    for (j, slot) in numeric.iter_mut().enumerate() {
        nudge(model, j, h);
        let up = loss(model, inputs);
        nudge(model, j, -2.0 * h);
        let down = loss(model, inputs);
        nudge(model, j, h);
        *slot = (up - down) / (2.0 * h);
    }
    GradCheck {
        inputs: input_errs,
        params: relative_error(&param_grads, &numeric),
    }
}

/// A parameter-free stand-in for checking pure functions.
pub struct NoParams;

impl Parameterized<f64> for NoParams {
    fn visit_params<'a>(&'a self, _: &str, _: &mut dyn FnMut(&str, &'a super::ParamTensor<f64>)) {}
    fn visit_params_mut(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut super::ParamTensor<f64>)) {}
}
