use serde::{Deserialize, Serialize};

use crate::data_io::NUM_CLASSES;
use crate::error::{Error, Result};

/// Network shape. `pose_dim == 0` disables the pose branch, leaving only the
/// spatio-temporal tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub pose_dim: usize,
    pub n_f: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub mlp_hidden: usize,
    pub head_hidden: usize,
    pub n_classes: usize,
    /// Segment tokens per encoder window.
    pub window_tokens: usize,
    /// Frames between consecutive tokens of a window.
    pub token_gap: usize,
    /// Frames per segment.
    pub segment_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let n_f = 64;
        Self {
            pose_dim: 67,
            n_f,
            n_heads: 4,
            n_layers: 2,
            mlp_hidden: 4 * n_f,
            head_hidden: 2 * n_f,
            n_classes: NUM_CLASSES,
            window_tokens: 8,
            token_gap: 8,
            segment_len: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Config with the hidden sizes derived from `n_f`.
    pub fn with_dims(pose_dim: usize, n_f: usize, n_heads: usize, n_layers: usize) -> Self {
        Self { pose_dim, n_f, n_heads, n_layers, mlp_hidden: 4 * n_f, head_hidden: 2 * n_f, ..Self::default() }
    }

    pub fn uses_pose(&self) -> bool {
        self.pose_dim > 0
    }

    /// Index of the token whose encoder output feeds the head.
    pub fn center_token(&self) -> usize {
        self.window_tokens / 2
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_f", self.n_f),
            ("n_heads", self.n_heads),
            ("mlp_hidden", self.mlp_hidden),
            ("head_hidden", self.head_hidden),
            ("n_classes", self.n_classes),
            ("window_tokens", self.window_tokens),
            ("token_gap", self.token_gap),
            ("segment_len", self.segment_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.n_f % self.n_heads != 0 {
            return Err(Error::Config(format!("n_f {} is not divisible by n_heads {}", self.n_f, self.n_heads)));
        }
        if self.n_f < 2 {
            return Err(Error::Config("n_f must be at least 2 for layer normalization".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Training objective and optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Temperature of the target smoothing and the training softmax.
    pub beta: f64,
    pub weight_decay: f64,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { beta: 5.0, weight_decay: 5e-4, lr: 1e-3, batch_size: 16 }
    }
}

impl LossConfig {
    /// Settings used for full-size training runs.
    pub fn full_scale() -> Self {
        Self { lr: 5e-6, batch_size: 80, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelConfig::default().validate().unwrap();
        LossConfig::default().validate().unwrap();
        LossConfig::full_scale().validate().unwrap();
        assert_eq!(LossConfig::full_scale().lr, 5e-6);
        assert_eq!(LossConfig::default().beta, 5.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        let cfg = ModelConfig { n_f: 10, n_heads: 4, ..ModelConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(ModelConfig { window_tokens: 0, ..ModelConfig::default() }.validate().is_err());
        assert!(LossConfig { beta: -1.0, ..LossConfig::default() }.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = ModelConfig::from_json(r#"{"n_f": 8, "n_heads": 2, "pose_dim": 12}"#).unwrap();
        assert_eq!(cfg.n_f, 8);
        assert_eq!(cfg.window_tokens, 8);
        let loss = LossConfig::from_json(r#"{"lr": 0.0}"#).unwrap();
        assert_eq!(loss.lr, 0.0);
        assert_eq!(loss.beta, 5.0);
    }
}
