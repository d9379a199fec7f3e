//! Whole-body keypoints and the pose features derived from them.
//!
//! Keypoints follow the COCO-WholeBody ordering: 17 body joints, 6 feet
//! joints, 68 face landmarks and 21 joints per hand.

mod features;
mod pnp;

pub use features::{
    build_motion_vector, build_pose_feature, FeatureExtractor, FeatureLayout, MotionVector,
    PoseFeatureVector, HEAD_POSE_DIM,
};
pub use pnp::{
    estimate_head_pose, project_points, rotation_error, solve_pnp, CameraIntrinsics, FaceModel,
    HeadPose, PnpOptions, DEFAULT_MIN_CONFIDENCE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 133;

/// Start offsets of the joint groups inside a [`KeypointFrame`].
pub mod joints {
    pub const BODY: usize = 0;
    pub const FEET: usize = 17;
    pub const FACE: usize = 23;
    pub const LEFT_HAND: usize = 91;
    pub const RIGHT_HAND: usize = 112;

    pub const NOSE: usize = 0;
    pub const LEFT_SHOULDER: usize = 5;
    pub const RIGHT_SHOULDER: usize = 6;
    pub const LEFT_ELBOW: usize = 7;
    pub const RIGHT_ELBOW: usize = 8;
    pub const LEFT_WRIST: usize = 9;
    pub const RIGHT_WRIST: usize = 10;

    /// Face landmark `i` of the 68-point annotation.
    pub const fn face(i: usize) -> usize {
        FACE + i
    }

    pub const FACE_NOSE_TIP: usize = face(30);
    pub const FACE_CHIN: usize = face(8);
    pub const FACE_LEFT_EYE_OUTER: usize = face(36);
    pub const FACE_RIGHT_EYE_OUTER: usize = face(45);
    pub const FACE_LEFT_MOUTH: usize = face(48);
    pub const FACE_RIGHT_MOUTH: usize = face(54);
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub c: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, c: f64) -> Self {
        Self { x, y, c }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && (0.0..=1.0).contains(&self.c)
    }
}

/// One frame of whole-body keypoints for a single camera.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFrame {
    pub video_id: String,
    pub camera: u32,
    pub frame_index: u64,
    pub joints: Vec<Keypoint>,
}

impl KeypointFrame {
    pub fn new(video_id: impl Into<String>, camera: u32, frame_index: u64, joints: Vec<Keypoint>) -> Result<Self> {
        let frame = Self { video_id: video_id.into(), camera, frame_index, joints };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.len() != NUM_JOINTS {
            return Err(Error::Schema(format!(
                "frame {} has {} joints, expected {NUM_JOINTS}",
                self.frame_index,
                self.joints.len()
            )));
        }
        if let Some(i) = self.joints.iter().position(|j| !j.is_valid()) {
            return Err(Error::Schema(format!(
                "frame {} joint {i} is not finite or has confidence outside [0, 1]",
                self.frame_index
            )));
        }
        Ok(())
    }
}

/// Euclidean distance between two joints in the image plane.
pub fn joint_distance(a: &Keypoint, b: &Keypoint) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Returns the joints listed in `ids`, in that order.
pub fn select_keypoints(frame: &KeypointFrame, ids: &[usize]) -> Result<Vec<Keypoint>> {
    ids.iter()
        .map(|&id| {
            frame
                .joints
                .get(id)
                .copied()
                .ok_or_else(|| Error::Config(format!("joint id {id} out of range (frame has {} joints)", frame.joints.len())))
        })
        .collect()
}
