//! Scaled dot-product and multi-head attention with explicit backward passes.

use rand_chacha::ChaCha8Rng;

use super::linear::Linear;
use super::param::{apply_mask, join, Mode, ParamTensor, Parameterized};
use super::tensor::{Real, Tensor2};
use crate::error::{Error, Result};

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Real>(x: &Tensor2<T>) -> Tensor2<T> {
    let mut y = x.clone();
    for r in 0..y.rows() {
        softmax_in_place(y.row_mut(r));
    }
    y
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    if row.is_empty() {
        return;
    }
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Given `y = softmax(x)` row-wise and `dy`, returns `dx`.
pub fn softmax_rows_backward<T: Real>(y: &Tensor2<T>, dy: &Tensor2<T>) -> Tensor2<T> {
    let mut dx = Tensor2::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let yr = y.row(r);
        let gr = dy.row(r);
        let s: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for (o, (&yv, &gv)) in dx.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
            *o = yv * (gv - s);
        }
    }
    dx
}

pub struct AttentionCache<T> {
    q: Tensor2<T>,
    k: Tensor2<T>,
    v: Tensor2<T>,
    /// Softmax weights before dropout.
    pub weights: Tensor2<T>,
    mask: Option<Vec<T>>,
    scale: T,
}

/// `softmax(q·kᵀ/√dk [+ causal mask]) · v`.
///
/// Under the causal mask query row `i` attends to key rows `0..=i` only.
pub fn scaled_dot_attention<T: Real>(
    q: &Tensor2<T>,
    k: &Tensor2<T>,
    v: &Tensor2<T>,
    causal: bool,
    mode: &mut Mode,
) -> Result<(Tensor2<T>, AttentionCache<T>)> {
    if q.cols() != k.cols() {
        return Err(Error::dim("attention q/k", q.shape_str(), k.shape_str()));
    }
    if k.rows() != v.rows() {
        return Err(Error::dim("attention k/v", k.shape_str(), v.shape_str()));
    }
    let scale = T::one() / T::of(q.cols() as f64).sqrt();
    let mut weights = q.matmul_bt(k)?;
    let tk = k.rows();
    for i in 0..weights.rows() {
        let row = weights.row_mut(i);
        row.iter_mut().for_each(|s| *s *= scale);
        if causal {
            let visible = (i + 1).min(tk);
            softmax_in_place(&mut row[..visible]);
            row[visible..].iter_mut().for_each(|s| *s = T::zero());
        } else {
            softmax_in_place(row);
        }
    }
    let mask = mode.dropout_mask::<T>(weights.data().len());
    let out = if mask.is_some() {
        let mut dropped = weights.clone();
        apply_mask(&mut dropped, &mask);
        dropped.matmul(v)?
    } else {
        weights.matmul(v)?
    };
    Ok((
        out,
        AttentionCache {
            q: q.clone(),
            k: k.clone(),
            v: v.clone(),
            weights,
            mask,
            scale,
        },
    ))
}

/// Returns `(dq, dk, dv)`.
pub fn scaled_dot_attention_backward<T: Real>(
    cache: &AttentionCache<T>,
    dout: &Tensor2<T>,
) -> (Tensor2<T>, Tensor2<T>, Tensor2<T>) {
    let mut dropped = cache.weights.clone();
    apply_mask(&mut dropped, &cache.mask);
    let dv = dropped.matmul_at(dout).expect("shapes fixed by forward");
    let mut dp = dout.matmul_bt(&cache.v).expect("shapes fixed by forward");
    apply_mask(&mut dp, &cache.mask);
    // Masked positions carry zero weight, so their score gradient vanishes.
    let mut ds = softmax_rows_backward(&cache.weights, &dp);
    ds.scale(cache.scale);
    let dq = ds.matmul(&cache.k).expect("shapes fixed by forward");
    let dk = ds.matmul_at(&cache.q).expect("shapes fixed by forward");
    (dq, dk, dv)
}

/// Multi-head attention with per-head slices of shared projection matrices.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention<T = f64> {
    pub wq: Linear<T>,
    pub wk: Linear<T>,
    pub wv: Linear<T>,
    pub wo: Linear<T>,
    pub heads: usize,
}

pub struct MhaCache<T> {
    xq: Tensor2<T>,
    xkv: Tensor2<T>,
    concat: Tensor2<T>,
    pub heads: Vec<AttentionCache<T>>,
}

impl<T: Real> MultiHeadAttention<T> {
    pub fn new(d_model: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        check_heads(d_model, heads)?;
        Ok(Self {
            wq: Linear::new(d_model, d_model, rng),
            wk: Linear::new(d_model, d_model, rng),
            wv: Linear::new(d_model, d_model, rng),
            wo: Linear::new(d_model, d_model, rng),
            heads,
        })
    }

    pub fn d_model(&self) -> usize {
        self.wq.dout()
    }

    pub fn head_dim(&self) -> usize {
        self.d_model() / self.heads
    }

    pub fn forward(
        &self,
        xq: &Tensor2<T>,
        xkv: &Tensor2<T>,
        causal: bool,
        mode: &mut Mode,
    ) -> Result<(Tensor2<T>, MhaCache<T>)> {
        check_heads(self.d_model(), self.heads)?;
        let q = self.wq.forward(xq)?;
        let k = self.wk.forward(xkv)?;
        let v = self.wv.forward(xkv)?;
        let dh = self.head_dim();
        let mut concat = Tensor2::zeros(q.rows(), self.d_model());
        let mut caches = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (o, c) = scaled_dot_attention(
                &q.col_slice(h * dh, dh),
                &k.col_slice(h * dh, dh),
                &v.col_slice(h * dh, dh),
                causal,
                mode,
            )?;
            concat.set_col_slice(h * dh, &o);
            caches.push(c);
        }
        let out = self.wo.forward(&concat)?;
        Ok((
            out,
            MhaCache {
                xq: xq.clone(),
                xkv: xkv.clone(),
                concat,
                heads: caches,
            },
        ))
    }

    /// Returns `(dxq, dxkv)`. For self-attention the caller sums both.
    pub fn backward(&mut self, cache: &MhaCache<T>, dout: &Tensor2<T>) -> (Tensor2<T>, Tensor2<T>) {
        let dconcat = self.wo.backward(&cache.concat, dout);
        let dh = self.head_dim();
        let tq = cache.xq.rows();
        let tk = cache.xkv.rows();
        let d = self.d_model();
        let mut dq = Tensor2::zeros(tq, d);
        let mut dk = Tensor2::zeros(tk, d);
        let mut dv = Tensor2::zeros(tk, d);
        for (h, hc) in cache.heads.iter().enumerate() {
            let (gq, gk, gv) = scaled_dot_attention_backward(hc, &dconcat.col_slice(h * dh, dh));
            dq.set_col_slice(h * dh, &gq);
            dk.set_col_slice(h * dh, &gk);
            dv.set_col_slice(h * dh, &gv);
        }
        let dxq = self.wq.backward(&cache.xq, &dq);
        let mut dxkv = self.wk.backward(&cache.xkv, &dk);
        dxkv.add_assign(&self.wv.backward(&cache.xkv, &dv));
        (dxq, dxkv)
    }

    pub fn cast<U: Real>(&self) -> MultiHeadAttention<U> {
        MultiHeadAttention {
            wq: self.wq.cast(),
            wk: self.wk.cast(),
            wv: self.wv.cast(),
            wo: self.wo.cast(),
            heads: self.heads,
        }
    }
}

fn check_heads(d_model: usize, heads: usize) -> Result<()> {
    if heads == 0 || !d_model.is_multiple_of(heads) {
        return Err(Error::Config(format!(
            "d_model {d_model} is not divisible by {heads} attention heads"
        )));
    }
    Ok(())
}

impl<T: Real> Parameterized<T> for MultiHeadAttention<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a ParamTensor<T>)) {
        self.wq.visit_params(&join(prefix, "wq"), f);
        self.wk.visit_params(&join(prefix, "wk"), f);
        self.wv.visit_params(&join(prefix, "wv"), f);
        self.wo.visit_params(&join(prefix, "wo"), f);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut ParamTensor<T>)) {
        self.wq.visit_params_mut(&join(prefix, "wq"), f);
        self.wk.visit_params_mut(&join(prefix, "wk"), f);
        self.wv.visit_params_mut(&join(prefix, "wv"), f);
        self.wo.visit_params_mut(&join(prefix, "wo"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn t(rows: &[&[f64]]) -> Tensor2 {
        Tensor2::from_rows(rows).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_rows(&t(&[&[0.0, 0.0]])).data(), &[0.5, 0.5]);
        assert_eq!(softmax_rows(&t(&[&[1000.0, 1000.0]])).data(), &[0.5, 0.5]);
        let y = softmax_rows(&t(&[&[0.0, 3f64.ln()]]));
        assert!((y[(0, 0)] - 0.25).abs() < 1e-12);
        assert!((y[(0, 1)] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn single_key_returns_its_value_row() {
        let q = Tensor2::from_vec(4, 3, (0..12).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let k = t(&[&[0.2, -0.1, 0.7]]);
        let v = t(&[&[5.0, -2.0]]);
        let (out, _) = scaled_dot_attention(&q, &k, &v, false, &mut Mode::Eval).unwrap();
        for r in 0..4 {
            assert_eq!(out.row(r), v.row(0));
        }
    }

    #[test]
    fn saturated_orthonormal_queries_pick_matching_value() {
        let big = 50.0;
        let q = t(&[&[big, 0.0, 0.0], &[0.0, big, 0.0], &[0.0, 0.0, big]]);
        let k = Tensor2::<f64>::identity(3).map(|v| v * big);
        let v = t(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, -1.0]]);
        let (out, _) = scaled_dot_attention(&q, &k, &v, false, &mut Mode::Eval).unwrap();
        for r in 0..3 {
            for c in 0..2 {
                assert!((out[(r, c)] - v[(r, c)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn causal_first_row_equals_first_value() {
        let q = t(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 0.0]]);
        let v = t(&[&[7.0, 8.0], &[1.0, 1.0], &[0.0, 2.0]]);
        let (out, cache) = scaled_dot_attention(&q, &q, &v, true, &mut Mode::Eval).unwrap();
        assert_eq!(out.row(0), v.row(0));
        assert_eq!(cache.weights[(0, 1)], 0.0);
        assert_eq!(cache.weights[(1, 2)], 0.0);
    }

    #[test]
    fn single_head_identity_projections_reduce_to_plain_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mha = MultiHeadAttention::<f64>::new(4, 1, &mut rng).unwrap();
        for l in [&mut mha.wq, &mut mha.wk, &mut mha.wv, &mut mha.wo] {
            l.w.value = Tensor2::identity(4);
        }
        let x = Tensor2::from_vec(3, 4, (0..12).map(|i| (i as f64).sin()).collect()).unwrap();
        let (a, _) = mha.forward(&x, &x, false, &mut Mode::Eval).unwrap();
        let (b, _) = scaled_dot_attention(&x, &x, &x, false, &mut Mode::Eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn head_divisibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mha = MultiHeadAttention::<f64>::new(60, 2, &mut rng).unwrap();
        assert_eq!(mha.head_dim(), 30);
        assert!(matches!(
            MultiHeadAttention::<f64>::new(60, 7, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn attention_rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mha = MultiHeadAttention::<f64>::new(8, 4, &mut rng).unwrap();
        let x = Tensor2::from_vec(5, 8, (0..40).map(|i| ((i * 7) % 11) as f64 - 5.0).collect()).unwrap();
        for causal in [false, true] {
            let (_, cache) = mha.forward(&x, &x, causal, &mut Mode::Eval).unwrap();
            for h in &cache.heads {
                for r in 0..h.weights.rows() {
                    let row = h.weights.row(r);
                    assert!(row.iter().all(|&w| w >= 0.0));
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
            }
        }
    }
}
