//! The fusion network: pose LSTM, token fusion, encoder and MLP head, with a
//! hand-written backward pass.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::config::ModelConfig;
use super::encoder::{self, LayerCache};
use super::lstm::{self, LstmCache};
use super::ops::{cross_entropy, cross_entropy_logit_grad, gelu, gelu_grad, layer_norm_rows, layer_norm_rows_backward, softmax_beta};
use super::params::{FusionParams, HeadParams};
use crate::data_io::{Checkpoint, Tensor};
use crate::error::{Error, Result};

/// Per-dimension standardization applied to raw pose features and
/// embeddings before they enter the network.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNorm {
    pub pose_mean: Vec<f64>,
    pub pose_scale: Vec<f64>,
    pub embed_mean: Vec<f64>,
    pub embed_scale: Vec<f64>,
}

impl FeatureNorm {
    pub fn identity(pose_dim: usize, n_f: usize) -> Self {
        Self {
            pose_mean: vec![0.0; pose_dim],
            pose_scale: vec![1.0; pose_dim],
            embed_mean: vec![0.0; n_f],
            embed_scale: vec![1.0; n_f],
        }
    }

    /// Column statistics of the given matrices; zero-variance columns keep a
    /// unit scale.
    pub fn fit<'a>(pose: impl IntoIterator<Item = ArrayView2<'a, f64>>, embed: impl IntoIterator<Item = ArrayView2<'a, f64>>, pose_dim: usize, n_f: usize) -> Self {
        fn stats<'a>(mats: impl IntoIterator<Item = ArrayView2<'a, f64>>, dim: usize) -> (Vec<f64>, Vec<f64>) {
            let mut sum = vec![0.0; dim];
            let mut sq = vec![0.0; dim];
            let mut count = 0usize;
            for m in mats {
                for row in m.rows() {
                    for (j, &v) in row.iter().enumerate() {
                        sum[j] += v;
                        sq[j] += v * v;
                    }
                    count += 1;
                }
            }
            if count == 0 {
                return (vec![0.0; dim], vec![1.0; dim]);
            }
            let c = count as f64;
            let mean: Vec<f64> = sum.iter().map(|s| s / c).collect();
            let scale = sq
                .iter()
                .zip(&mean)
                .map(|(s, m)| {
                    let sd = (s / c - m * m).max(0.0).sqrt();
                    if sd > 1e-9 {
                        sd
                    } else {
                        1.0
                    }
                })
                .collect();
            (mean, scale)
        }
        let (pose_mean, pose_scale) = stats(pose, pose_dim);
        let (embed_mean, embed_scale) = stats(embed, n_f);
        Self { pose_mean, pose_scale, embed_mean, embed_scale }
    }

    fn apply(m: &ArrayView2<f64>, mean: &[f64], scale: &[f64]) -> Array2<f64> {
        let mut out = m.to_owned();
        for mut row in out.rows_mut() {
            for ((v, mu), s) in row.iter_mut().zip(mean).zip(scale) {
                *v = (*v - mu) / s;
            }
        }
        out
    }

    pub fn normalize_pose(&self, m: &ArrayView2<f64>) -> Array2<f64> {
        Self::apply(m, &self.pose_mean, &self.pose_scale)
    }

    pub fn normalize_embed(&self, m: &ArrayView2<f64>) -> Array2<f64> {
        Self::apply(m, &self.embed_mean, &self.embed_scale)
    }
}

/// Network inputs for `windows` encoder windows.
///
/// `embed` holds `windows * W` token embeddings (window-major). `pose`, when
/// the pose branch is enabled, holds the segment pose sequences time-major:
/// row `t * (windows * W) + token`.
#[derive(Debug, Clone)]
pub struct BatchInput {
    pub pose: Option<Array2<f64>>,
    pub embed: Array2<f64>,
    pub windows: usize,
}

pub struct ForwardCache {
    lstm: Option<LstmCache>,
    layers: Vec<LayerCache>,
    head: HeadCache,
    tokens: usize,
}

pub struct HeadCache {
    xhat: Array2<f64>,
    inv: Array1<f64>,
    z: Array2<f64>,
    u: Array2<f64>,
    v: Array2<f64>,
}

fn head_forward_batch(p: &HeadParams, x: &Array2<f64>) -> (Array2<f64>, HeadCache) {
    let (z, xhat, inv) = layer_norm_rows(&x.view(), &p.ln_g, &p.ln_b);
    let u = z.dot(&p.w_1) + &p.b_1;
    let v = u.mapv(gelu);
    let logits = v.dot(&p.w_2) + &p.b_2;
    (logits, HeadCache { xhat, inv, z, u, v })
}

fn head_backward(p: &HeadParams, cache: &HeadCache, d_logits: &Array2<f64>, grad: &mut HeadParams) -> Array2<f64> {
    grad.w_2 += &cache.v.t().dot(d_logits);
    grad.b_2 += &d_logits.sum_axis(Axis(0));
    let mut du = d_logits.dot(&p.w_2.t());
    du.zip_mut_with(&cache.u, |d, &u| *d *= gelu_grad(u));
    grad.w_1 += &cache.z.t().dot(&du);
    grad.b_1 += &du.sum_axis(Axis(0));
    let dz = du.dot(&p.w_1.t());
    layer_norm_rows_backward(&dz.view(), &cache.xhat, &cache.inv, &p.ln_g, &mut grad.ln_g, &mut grad.ln_b)
}

/// Class logits for one encoder output token.
pub fn head_forward(p: &HeadParams, token: &[f64]) -> Vec<f64> {
    let x = Array2::from_shape_vec((1, token.len()), token.to_vec()).expect("row");
    head_forward_batch(p, &x).0.into_raw_vec_and_offset().0
}

/// Adds the pose embeddings to the spatio-temporal tokens.
pub fn fuse_tokens(embed_window: &ArrayView2<f64>, pose: &ArrayView2<f64>) -> Result<Array2<f64>> {
    if embed_window.raw_dim() != pose.raw_dim() {
        return Err(Error::Shape(format!(
            "embedding window {:?} and pose embedding {:?} differ",
            embed_window.shape(),
            pose.shape()
        )));
    }
    Ok(embed_window + pose)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub config: ModelConfig,
    pub params: FusionParams,
    pub norm: FeatureNorm,
}

impl FusionModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = FusionParams::init(&config);
        let norm = FeatureNorm::identity(config.pose_dim, config.n_f);
        Ok(Self { config, params, norm })
    }

    pub fn forward(&self, input: &BatchInput) -> (Array2<f64>, ForwardCache) {
        let cfg = &self.config;
        let w = cfg.window_tokens;
        let tokens = input.windows * w;
        debug_assert_eq!(input.embed.nrows(), tokens);
        let mut x = input.embed.clone();
        let lstm_cache = match (&self.params.lstm, &input.pose) {
            (Some(p), Some(pose)) => {
                let (h, c) = lstm::forward_batch(p, pose.clone(), tokens);
                x += &h;
                Some(c)
            }
            _ => None,
        };
        let (logits, layers, head) = self.encode(x, input.windows);
        (logits, ForwardCache { lstm: lstm_cache, layers, head, tokens })
    }

    fn encode(&self, mut x: Array2<f64>, windows: usize) -> (Array2<f64>, Vec<LayerCache>, HeadCache) {
        let cfg = &self.config;
        let w = cfg.window_tokens;
        let mut layer_caches = Vec::with_capacity(self.params.layers.len());
        for p in &self.params.layers {
            let (y, c) = encoder::layer_forward(p, &x, w, cfg.n_heads);
            layer_caches.push(c);
            x = y;
        }
        let centers: Vec<usize> = (0..windows).map(|b| b * w + cfg.center_token()).collect();
        let xc = x.select(Axis(0), &centers);
        let (logits, head) = head_forward_batch(&self.params.head, &xc);
        (logits, layer_caches, head)
    }

    /// Logits for windows of already fused tokens (`windows * W` rows).
    pub fn logits_from_tokens(&self, tokens: Array2<f64>) -> Array2<f64> {
        let windows = tokens.nrows() / self.config.window_tokens;
        self.encode(tokens, windows).0
    }

    pub fn backward(&self, cache: &ForwardCache, d_logits: &Array2<f64>) -> FusionParams {
        let cfg = &self.config;
        let w = cfg.window_tokens;
        let mut grad = self.params.zeros_like();
        let dxc = head_backward(&self.params.head, &cache.head, d_logits, &mut grad.head);
        let mut dx = Array2::zeros((cache.tokens, cfg.n_f));
        for (b, row) in dxc.rows().into_iter().enumerate() {
            dx.row_mut(b * w + cfg.center_token()).assign(&row);
        }
        for (i, (p, c)) in self.params.layers.iter().zip(&cache.layers).enumerate().rev() {
            dx = encoder::layer_backward(p, c, &dx, w, cfg.n_heads, &mut grad.layers[i]);
        }
        if let (Some(p), Some(c), Some(g)) = (&self.params.lstm, &cache.lstm, grad.lstm.as_mut()) {
            lstm::backward_batch(p, c, &dx, g);
        }
        grad
    }

    /// Mean cross-entropy of `softmax(beta * logits)` against `targets`, and
    /// its gradient for every parameter.
    pub fn loss_and_grad(&self, input: &BatchInput, targets: &[Vec<f64>], beta: f64) -> (f64, FusionParams) {
        let (losses, grad) = self.losses_and_grad(input, targets, beta);
        (losses.iter().sum::<f64>() / input.windows as f64, grad)
    }

    /// Per-window losses and the gradient of their mean.
    pub fn losses_and_grad(&self, input: &BatchInput, targets: &[Vec<f64>], beta: f64) -> (Vec<f64>, FusionParams) {
        let (logits, cache) = self.forward(input);
        let b = input.windows as f64;
        let mut d_logits = Array2::zeros(logits.raw_dim());
        let mut losses = Vec::with_capacity(input.windows);
        for (i, (row, q)) in logits.rows().into_iter().zip(targets).enumerate() {
            let p = Array1::from(softmax_beta(row.as_slice().expect("row"), beta));
            losses.push(cross_entropy(p.as_slice().unwrap(), q));
            let g = cross_entropy_logit_grad(&p.view(), q, beta);
            for (d, gv) in d_logits.row_mut(i).iter_mut().zip(g) {
                *d = gv / b;
            }
        }
        let grad = self.backward(&cache, &d_logits);
        (losses, grad)
    }

    /// Mean loss only.
    pub fn loss(&self, input: &BatchInput, targets: &[Vec<f64>], beta: f64) -> f64 {
        let (logits, _) = self.forward(input);
        let total: f64 = logits
            .rows()
            .into_iter()
            .zip(targets)
            .map(|(row, q)| cross_entropy(&softmax_beta(row.as_slice().unwrap(), beta), q))
            .sum();
        total / input.windows as f64
    }

    pub fn to_checkpoint(&self, step: u64) -> Checkpoint {
        let mut tensors: Vec<Tensor> = self
            .params
            .tensors()
            .into_iter()
            .map(|t| Tensor { name: t.name, shape: t.shape, values: t.values.to_vec() })
            .collect();
        for (name, v) in [
            ("norm.pose_mean", &self.norm.pose_mean),
            ("norm.pose_scale", &self.norm.pose_scale),
            ("norm.embed_mean", &self.norm.embed_mean),
            ("norm.embed_scale", &self.norm.embed_scale),
        ] {
            tensors.push(Tensor { name: name.into(), shape: vec![v.len()], values: v.clone() });
        }
        Checkpoint {
            config: serde_json::to_string(&self.config).expect("config serializes"),
            step,
            tensors,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config = ModelConfig::from_json(&ckpt.config)?;
        let mut model = Self::new(config)?;
        let mut used = 0usize;
        let mut take = |name: &str, shape: &[usize], dst: &mut [f64]| -> Result<()> {
            let t = ckpt.tensor(name).ok_or_else(|| Error::Schema(format!("checkpoint is missing tensor {name}")))?;
            if t.shape != shape {
                return Err(Error::Shape(format!("tensor {name} has shape {:?}, config expects {shape:?}", t.shape)));
            }
            dst.copy_from_slice(&t.values);
            used += 1;
            Ok(())
        };
        let shapes: Vec<Vec<usize>> = model.params.tensors().iter().map(|t| t.shape.clone()).collect();
        for (t, shape) in model.params.tensors_mut().into_iter().zip(shapes) {
            take(&t.name, &shape, t.values)?;
        }
        let (p, n) = (model.config.pose_dim, model.config.n_f);
        take("norm.pose_mean", &[p], &mut model.norm.pose_mean)?;
        take("norm.pose_scale", &[p], &mut model.norm.pose_scale)?;
        take("norm.embed_mean", &[n], &mut model.norm.embed_mean)?;
        take("norm.embed_scale", &[n], &mut model.norm.embed_scale)?;
        if used != ckpt.tensors.len() {
            let known: Vec<String> = model.to_checkpoint(0).tensors.into_iter().map(|t| t.name).collect();
            let extra: Vec<&str> = ckpt.tensors.iter().map(|t| t.name.as_str()).filter(|n| !known.iter().any(|k| k == n)).collect();
            return Err(Error::Schema(format!("checkpoint has unexpected tensors {extra:?}")));
        }
        Ok(model)
    }
}
