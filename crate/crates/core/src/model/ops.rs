//! Elementwise and row-wise primitives shared by the network layers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

pub const LN_EPS: f64 = 1e-5;
pub const LOG_CLAMP: f64 = 1e-12;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// `x * Phi(x)` with the exact Gaussian CDF.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    normal_cdf(x) + x * pdf
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise layer normalization; returns the output and the normalized
/// inputs and inverse standard deviations needed for the backward pass.
pub fn layer_norm_rows(x: &ArrayView2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let n = x.ncols() as f64;
    let mut xhat = x.to_owned();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
        *s = inv;
    }
    let y = &xhat * gain + bias;
    (y, xhat, inv_std)
}

/// Layer normalization of a single vector.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let (y, _, _) = layer_norm_rows(&view, &Array1::from(gain.to_vec()), &Array1::from(bias.to_vec()));
    y.into_raw_vec_and_offset().0
}

/// Backward of [`layer_norm_rows`]: returns `dx` and accumulates into
/// `dgain`/`dbias`.
pub fn layer_norm_rows_backward(
    dy: &ArrayView2<f64>,
    xhat: &Array2<f64>,
    inv_std: &Array1<f64>,
    gain: &Array1<f64>,
    dgain: &mut Array1<f64>,
    dbias: &mut Array1<f64>,
) -> Array2<f64> {
    *dgain += &(dy * xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let n = dy.ncols() as f64;
    let dxhat = dy * gain;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((mut out, g), h), &inv) in dx.rows_mut().into_iter().zip(dxhat.rows()).zip(xhat.rows()).zip(inv_std) {
        let mean_g = g.sum() / n;
        let mean_gh = g.dot(&h) / n;
        for ((o, &gi), &hi) in out.iter_mut().zip(g).zip(h) {
            *o = inv * (gi - mean_g - hi * mean_gh);
        }
    }
    dx
}

/// In-place stabilized softmax of each row.
pub fn softmax_rows_inplace(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// `softmax(beta * logits)`.
pub fn softmax_beta(logits: &[f64], beta: f64) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|&z| (beta * (z - max)).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Soft training target: `softmax(beta * d)` where `d` is the fraction of
/// frames carrying each label.
pub fn density_target(frame_labels: &[usize], beta: f64, n_classes: usize) -> Vec<f64> {
    let mut density = vec![0.0; n_classes];
    for &l in frame_labels {
        density[l] += 1.0;
    }
    let n = frame_labels.len().max(1) as f64;
    density.iter_mut().for_each(|d| *d /= n);
    softmax_beta(&density, beta)
}

/// Cross-entropy `-sum q log p`, with `log p` clamped at `log(1e-12)`.
pub fn cross_entropy(probs: &[f64], target: &[f64]) -> f64 {
    -probs
        .iter()
        .zip(target)
        .map(|(&p, &q)| if q == 0.0 { 0.0 } else { q * (if p < LOG_CLAMP { LOG_CLAMP } else { p }).ln() })
        .sum::<f64>()
}

/// Gradient of `cross_entropy(softmax_beta(z, beta), q)` with respect to `z`.
pub fn cross_entropy_logit_grad(probs: &ArrayView1<f64>, target: &[f64], beta: f64) -> Vec<f64> {
    let dp: Vec<f64> = probs
        .iter()
        .zip(target)
        .map(|(&p, &q)| if p > LOG_CLAMP { -q / p } else { 0.0 })
        .collect();
    let inner: f64 = probs.iter().zip(&dp).map(|(p, d)| p * d).sum();
    probs.iter().zip(&dp).map(|(&p, &d)| beta * p * (d - inner)).collect()
}
