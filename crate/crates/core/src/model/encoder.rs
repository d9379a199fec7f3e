//! Pre-LN transformer encoder over windows of segment tokens.
//!
//! A batch holds `B` windows of `W` tokens stacked as `B * W` rows; attention
//! never crosses window boundaries.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::ops::{gelu, gelu_grad, layer_norm_rows, layer_norm_rows_backward, softmax_rows_inplace};
use super::params::EncoderLayerParams;

pub struct LayerCache {
    x_in: Array2<f64>,
    ln1_xhat: Array2<f64>,
    ln1_inv: Array1<f64>,
    a: Array2<f64>,
    qkv: Array2<f64>,
    /// Attention probabilities per (window, head), `W x W`.
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    ln2_xhat: Array2<f64>,
    ln2_inv: Array1<f64>,
    b: Array2<f64>,
    h1: Array2<f64>,
    g: Array2<f64>,
}

fn attention(qkv: &Array2<f64>, window: usize, heads: usize) -> (Array2<f64>, Vec<Array2<f64>>) {
    let n = qkv.ncols() / 3;
    let d = n / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let windows = qkv.nrows() / window;
    let mut out = Array2::zeros((qkv.nrows(), n));
    let mut probs = Vec::with_capacity(windows * heads);
    for w in 0..windows {
        let rows = w * window..(w + 1) * window;
        for h in 0..heads {
            let q = qkv.slice(s![rows.clone(), h * d..(h + 1) * d]);
            let k = qkv.slice(s![rows.clone(), n + h * d..n + (h + 1) * d]);
            let v = qkv.slice(s![rows.clone(), 2 * n + h * d..2 * n + (h + 1) * d]);
            let mut p = q.dot(&k.t()) * scale;
            softmax_rows_inplace(&mut p);
            out.slice_mut(s![rows.clone(), h * d..(h + 1) * d]).assign(&p.dot(&v));
            probs.push(p);
        }
    }
    (out, probs)
}

/// One encoder layer: `x + MSA(LN(x))`, then `x + MLP(LN(x))`.
pub fn layer_forward(p: &EncoderLayerParams, x: &Array2<f64>, window: usize, heads: usize) -> (Array2<f64>, LayerCache) {
    let (a, ln1_xhat, ln1_inv) = layer_norm_rows(&x.view(), &p.ln1_g, &p.ln1_b);
    let qkv = a.dot(&p.w_qkv) + &p.b_qkv;
    let (attn, probs) = attention(&qkv, window, heads);
    let x1 = x + &(attn.dot(&p.w_o) + &p.b_o);
    let (b, ln2_xhat, ln2_inv) = layer_norm_rows(&x1.view(), &p.ln2_g, &p.ln2_b);
    let h1 = b.dot(&p.w_1) + &p.b_1;
    let g = h1.mapv(gelu);
    let out = &x1 + &(g.dot(&p.w_2) + &p.b_2);
    let cache = LayerCache { x_in: x.clone(), ln1_xhat, ln1_inv, a, qkv, probs, attn, ln2_xhat, ln2_inv, b, h1, g };
    (out, cache)
}

/// Returns the gradient with respect to the layer input.
pub fn layer_backward(
    p: &EncoderLayerParams,
    cache: &LayerCache,
    d_out: &Array2<f64>,
    window: usize,
    heads: usize,
    grad: &mut EncoderLayerParams,
) -> Array2<f64> {
    // MLP block
    grad.w_2 += &cache.g.t().dot(d_out);
    grad.b_2 += &d_out.sum_axis(Axis(0));
    let dg = d_out.dot(&p.w_2.t());
    let mut dh1 = dg;
    dh1.zip_mut_with(&cache.h1, |d, &h| *d *= gelu_grad(h));
    grad.w_1 += &cache.b.t().dot(&dh1);
    grad.b_1 += &dh1.sum_axis(Axis(0));
    let db = dh1.dot(&p.w_1.t());
    let mut dx1 = d_out.clone();
    dx1 += &layer_norm_rows_backward(&db.view(), &cache.ln2_xhat, &cache.ln2_inv, &p.ln2_g, &mut grad.ln2_g, &mut grad.ln2_b);

    // attention block
    grad.w_o += &cache.attn.t().dot(&dx1);
    grad.b_o += &dx1.sum_axis(Axis(0));
    let d_attn = dx1.dot(&p.w_o.t());
    let n = p.w_o.nrows();
    let d = n / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let windows = cache.qkv.nrows() / window;
    let mut d_qkv = Array2::zeros(cache.qkv.raw_dim());
    for w in 0..windows {
        let rows = w * window..(w + 1) * window;
        for h in 0..heads {
            let prob = &cache.probs[w * heads + h];
            let q = cache.qkv.slice(s![rows.clone(), h * d..(h + 1) * d]);
            let k = cache.qkv.slice(s![rows.clone(), n + h * d..n + (h + 1) * d]);
            let v = cache.qkv.slice(s![rows.clone(), 2 * n + h * d..2 * n + (h + 1) * d]);
            let d_o = d_attn.slice(s![rows.clone(), h * d..(h + 1) * d]);
            let dv = prob.t().dot(&d_o);
            let dp = d_o.dot(&v.t());
            let mut ds = dp;
            for (mut ds_row, p_row) in ds.rows_mut().into_iter().zip(prob.rows()) {
                let inner: f64 = ds_row.iter().zip(p_row).map(|(a, b)| a * b).sum();
                ds_row.zip_mut_with(&p_row, |g, &pr| *g = pr * (*g - inner));
            }
            let dq = ds.dot(&k) * scale;
            let dk = ds.t().dot(&q) * scale;
            d_qkv.slice_mut(s![rows.clone(), h * d..(h + 1) * d]).assign(&dq);
            d_qkv.slice_mut(s![rows.clone(), n + h * d..n + (h + 1) * d]).assign(&dk);
            d_qkv.slice_mut(s![rows.clone(), 2 * n + h * d..2 * n + (h + 1) * d]).assign(&dv);
        }
    }
    grad.w_qkv += &cache.a.t().dot(&d_qkv);
    grad.b_qkv += &d_qkv.sum_axis(Axis(0));
    let da = d_qkv.dot(&p.w_qkv.t());
    let mut dx = dx1;
    dx += &layer_norm_rows_backward(&da.view(), &cache.ln1_xhat, &cache.ln1_inv, &p.ln1_g, &mut grad.ln1_g, &mut grad.ln1_b);
    debug_assert_eq!(dx.raw_dim(), cache.x_in.raw_dim());
    dx
}

/// Runs every layer on a single window of tokens.
pub fn encoder_forward(layers: &[EncoderLayerParams], tokens: &ArrayView2<f64>, heads: usize) -> Array2<f64> {
    let window = tokens.nrows();
    let mut x = tokens.to_owned();
    for p in layers {
        x = layer_forward(p, &x, window, heads).0;
    }
    x
}

/// Attention probabilities of one layer for a single window, one matrix per head.
pub fn attention_weights(p: &EncoderLayerParams, tokens: &ArrayView2<f64>, heads: usize) -> Vec<Array2<f64>> {
    let (_, cache) = layer_forward(p, &tokens.to_owned(), tokens.nrows(), heads);
    cache.probs
}
