//! Trainable parameters, their initialization and their flat named view.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Input weights, `pose_dim x 4 n_f`, gate order input/forget/cell/output.
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub w_qkv: Array2<f64>,
    pub b_qkv: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w_1: Array2<f64>,
    pub b_1: Array1<f64>,
    pub w_2: Array2<f64>,
    pub b_2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub ln_g: Array1<f64>,
    pub ln_b: Array1<f64>,
    pub w_1: Array2<f64>,
    pub b_1: Array1<f64>,
    pub w_2: Array2<f64>,
    pub b_2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub lstm: Option<LstmParams>,
    pub layers: Vec<EncoderLayerParams>,
    pub head: HeadParams,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = 1.0 / (rows as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..bound))
}

/// A flat mutable view of one tensor.
pub struct TensorMut<'a> {
    pub name: String,
    pub is_matrix: bool,
    pub values: &'a mut [f64],
}

/// A flat read-only view of one tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: &'a [f64],
}

macro_rules! push_refs {
    ($out:ident, $owner:expr, $prefix:expr, [$($field:ident),*]) => {
        $( $out.push(TensorRef {
            name: format!("{}.{}", $prefix, stringify!($field)),
            shape: $owner.$field.shape().to_vec(),
            values: $owner.$field.as_slice().expect("contiguous"),
        }); )*
    };
}

macro_rules! push_muts {
    ($out:ident, $owner:expr, $prefix:expr, [$($field:ident),*]) => {
        $( $out.push(TensorMut {
            name: format!("{}.{}", $prefix, stringify!($field)),
            is_matrix: $owner.$field.ndim() == 2,
            values: $owner.$field.as_slice_mut().expect("contiguous"),
        }); )*
    };
}

impl FusionParams {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit
    /// layer-norm gains and a +1 forget-gate bias.
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = cfg.n_f;
        let lstm = cfg.uses_pose().then(|| {
            let mut b = Array1::zeros(4 * n);
            b.slice_mut(ndarray::s![n..2 * n]).fill(1.0);
            LstmParams { w_x: uniform(&mut rng, cfg.pose_dim, 4 * n), w_h: uniform(&mut rng, n, 4 * n), b }
        });
        let layers = (0..cfg.n_layers)
            .map(|_| EncoderLayerParams {
                ln1_g: Array1::ones(n),
                ln1_b: Array1::zeros(n),
                w_qkv: uniform(&mut rng, n, 3 * n),
                b_qkv: Array1::zeros(3 * n),
                w_o: uniform(&mut rng, n, n),
                b_o: Array1::zeros(n),
                ln2_g: Array1::ones(n),
                ln2_b: Array1::zeros(n),
                w_1: uniform(&mut rng, n, cfg.mlp_hidden),
                b_1: Array1::zeros(cfg.mlp_hidden),
                w_2: uniform(&mut rng, cfg.mlp_hidden, n),
                b_2: Array1::zeros(n),
            })
            .collect();
        let head = HeadParams {
            ln_g: Array1::ones(n),
            ln_b: Array1::zeros(n),
            w_1: uniform(&mut rng, n, cfg.head_hidden),
            b_1: Array1::zeros(cfg.head_hidden),
            w_2: uniform(&mut rng, cfg.head_hidden, cfg.n_classes),
            b_2: Array1::zeros(cfg.n_classes),
        };
        Self { lstm, layers, head }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.values.fill(0.0);
        }
        z
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        if let Some(l) = &self.lstm {
            push_refs!(out, l, "lstm", [w_x, w_h, b]);
        }
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("encoder.{i}");
            push_refs!(out, l, p, [ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_1, b_1, w_2, b_2]);
        }
        push_refs!(out, self.head, "head", [ln_g, ln_b, w_1, b_1, w_2, b_2]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        if let Some(l) = &mut self.lstm {
            push_muts!(out, l, "lstm", [w_x, w_h, b]);
        }
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = format!("encoder.{i}");
            push_muts!(out, l, p, [ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_1, b_1, w_2, b_2]);
        }
        push_muts!(out, self.head, "head", [ln_g, ln_b, w_1, b_1, w_2, b_2]);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.values.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.values.iter_mut().zip(b.values) {
                *x += scale * y;
            }
        }
    }
}
