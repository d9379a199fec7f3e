//! Synthetic driving scenarios and brute-force reference implementations.

mod embeddings;
mod keypoints;
pub mod oracles;

pub use embeddings::{centroids, gen_embeddings, segment_labels, BACKGROUND};
pub use keypoints::{face_model_68, gen_keypoints, neutral_pose};

use serde::{Deserialize, Serialize};

use crate::data_io::{AnnotationRecord, NUM_CLASSES};
use crate::error::{Error, Result};

/// One scripted activity, `[start_frame, end_frame)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub class_id: usize,
    pub start_frame: u64,
    pub end_frame: u64,
}

fn default_video_id() -> String {
    "synth".into()
}
fn default_fps() -> f64 {
    30.0
}
fn default_noise() -> f64 {
    1.0
}
fn default_embed_noise() -> f64 {
    0.1
}
fn default_one() -> f64 {
    1.0
}
fn default_embed_dim() -> usize {
    64
}
fn default_segment_len() -> usize {
    64
}
fn default_cameras() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_video_id")]
    pub video_id: String,
    pub num_frames: usize,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub activities: Vec<Activity>,
    /// Keypoint jitter, pixels.
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    /// Embedding noise the class centroids are separated against.
    #[serde(default = "default_embed_noise")]
    pub embed_noise: f64,
    /// Multiplier on the embedding noise actually added; values above 1 make
    /// classes overlap.
    #[serde(default = "default_one")]
    pub embed_noise_scale: f64,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_segment_len")]
    pub segment_len: usize,
    #[serde(default = "default_cameras")]
    pub num_cameras: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn new(num_frames: usize, activities: Vec<Activity>, seed: u64) -> Self {
        Self {
            video_id: default_video_id(),
            num_frames,
            fps: default_fps(),
            activities,
            noise_sigma: default_noise(),
            embed_noise: default_embed_noise(),
            embed_noise_scale: 1.0,
            embed_dim: default_embed_dim(),
            segment_len: default_segment_len(),
            num_cameras: default_cameras(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for a in &self.activities {
            if a.class_id >= NUM_CLASSES {
                return Err(Error::Input(format!("activity class {} outside [0, {NUM_CLASSES})", a.class_id)));
            }
            if a.start_frame >= a.end_frame || a.end_frame > self.num_frames as u64 {
                return Err(Error::Input(format!(
                    "activity [{}, {}) is empty or outside [0, {})",
                    a.start_frame, a.end_frame, self.num_frames
                )));
            }
        }
        for w in self.activities.windows(2) {
            if w[1].start_frame < w[0].end_frame {
                return Err(Error::Input(format!(
                    "activities [{}, {}) and [{}, {}) overlap or are out of order",
                    w[0].start_frame, w[0].end_frame, w[1].start_frame, w[1].end_frame
                )));
            }
        }
        let checks = [
            ("noise_sigma", self.noise_sigma),
            ("embed_noise", self.embed_noise),
            ("embed_noise_scale", self.embed_noise_scale),
        ];
        if let Some((name, v)) = checks.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Input(format!("{name} must be finite and >= 0, got {v}")));
        }
        if !(self.fps > 0.0) {
            return Err(Error::Input(format!("fps must be positive, got {}", self.fps)));
        }
        if self.embed_dim == 0 || self.segment_len == 0 || self.num_cameras == 0 {
            return Err(Error::Input("embed_dim, segment_len and num_cameras must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn annotations(&self) -> Vec<AnnotationRecord> {
        self.activities
            .iter()
            .map(|a| AnnotationRecord {
                video_id: self.video_id.clone(),
                class_id: a.class_id,
                start_frame: a.start_frame,
                end_frame: a.end_frame,
            })
            .collect()
    }

    /// Activity covering `frame`, if any.
    pub fn activity_at(&self, frame: u64) -> Option<&Activity> {
        let i = self.activities.partition_point(|a| a.end_frame <= frame);
        self.activities.get(i).filter(|a| a.start_frame <= frame)
    }
}

/// Derives an independent generator seed for one purpose and camera.
pub(crate) fn sub_seed(seed: u64, purpose: u64, camera: u64) -> u64 {
    let mut x = seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ camera.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 33;
    x = x.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    x ^= x >> 33;
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(c: usize, s: u64, e: u64) -> Activity {
        Activity { class_id: c, start_frame: s, end_frame: e }
    }

    #[test]
    fn validation() {
        Scenario::new(1000, vec![act(1, 0, 100), act(2, 100, 300)], 0).validate().unwrap();
        assert!(Scenario::new(1000, vec![act(1, 0, 150), act(2, 100, 300)], 0).validate().is_err());
        assert!(Scenario::new(200, vec![act(1, 100, 300)], 0).validate().is_err());
        assert!(Scenario::new(1000, vec![act(16, 0, 10)], 0).validate().is_err());
        assert!(Scenario::new(1000, vec![act(3, 10, 10)], 0).validate().is_err());
    }

    #[test]
    fn json_defaults() {
        let s = Scenario::from_json(r#"{"num_frames": 500, "activities": [{"class_id": 1, "start_frame": 10, "end_frame": 90}]}"#).unwrap();
        assert_eq!(s.fps, 30.0);
        assert_eq!(s.num_cameras, 3);
        assert_eq!(s.annotations()[0].video_id, "synth");
        assert!(Scenario::from_json(r#"{"num_frames": 500, "activities": [{"class_id": 1, "start_frame": 10, "end_frame": 90}, {"class_id": 2, "start_frame": 80, "end_frame": 120}]}"#).is_err());
    }

    #[test]
    fn activity_lookup() {
        let s = Scenario::new(1000, vec![act(1, 10, 20), act(2, 50, 60)], 0);
        assert_eq!(s.activity_at(5), None);
        assert_eq!(s.activity_at(10).unwrap().class_id, 1);
        assert_eq!(s.activity_at(20), None);
        assert_eq!(s.activity_at(59).unwrap().class_id, 2);
    }
}
