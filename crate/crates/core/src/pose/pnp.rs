//! Pinhole projection and Levenberg-Marquardt PnP for driver head pose.

use nalgebra::{Matrix6, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::{joints, KeypointFrame};
use crate::error::{Error, Result};

/// Landmarks below this confidence are not trusted for head pose.
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    /// Focal length equal to the image width, principal point at the centre.
    pub fn from_image_size(width: f64, height: f64) -> Self {
        Self { fx: width, fy: width, cx: width / 2.0, cy: height / 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Config(format!("invalid intrinsics {self:?}")));
        }
        Ok(())
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self::from_image_size(1920.0, 1080.0)
    }
}

/// Rigid head pose in the camera frame plus the fit quality.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeadPose {
    /// Axis-angle rotation, radians.
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
    /// RMS reprojection error in pixels.
    pub reproj_error: f64,
}

impl HeadPose {
    pub fn new(rotation: [f64; 3], translation: [f64; 3]) -> Self {
        Self { rotation, translation, reproj_error: 0.0 }
    }

    pub fn rotation_matrix(&self) -> Rotation3<f64> {
        Rotation3::from_scaled_axis(Vector3::from(self.rotation))
    }

    /// Rotation followed by translation, six scalars.
    pub fn as_features(&self) -> [f64; 6] {
        let [a, b, c] = self.rotation;
        let [x, y, z] = self.translation;
        [a, b, c, x, y, z]
    }
}

/// Angle in radians of the relative rotation between two poses.
pub fn rotation_error(a: &HeadPose, b: &HeadPose) -> f64 {
    let m = a.rotation_matrix().rotation_to(&b.rotation_matrix()).into_inner();
    let sin = 0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm();
    let cos = 0.5 * (m.trace() - 1.0);
    sin.atan2(cos)
}

/// Generic 3D face model used as the PnP target.
///
/// Coordinates are in the camera axis convention (x right, y down, z away
/// from the viewer) so that a face looking straight into the camera has the
/// identity rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceModel {
    /// Joint index in the keypoint frame paired with each model point.
    pub joint_ids: Vec<usize>,
    pub points: Vec<[f64; 3]>,
}

impl FaceModel {
    /// Nose tip, chin, outer eye corners and mouth corners (model units ~mm).
    pub fn canonical() -> Self {
        Self {
            joint_ids: vec![
                joints::FACE_NOSE_TIP,
                joints::FACE_CHIN,
                joints::FACE_LEFT_EYE_OUTER,
                joints::FACE_RIGHT_EYE_OUTER,
                joints::FACE_LEFT_MOUTH,
                joints::FACE_RIGHT_MOUTH,
            ],
            points: vec![
                [0.0, 0.0, 0.0],
                [0.0, 330.0, 65.0],
                [-225.0, -170.0, 135.0],
                [225.0, -170.0, 135.0],
                [-150.0, 150.0, 125.0],
                [150.0, 150.0, 125.0],
            ],
        }
    }
}

impl Default for FaceModel {
    fn default() -> Self {
        Self::canonical()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpOptions {
    pub max_iters: usize,
    pub initial_lambda: f64,
    pub step_tol: f64,
    pub cost_tol: f64,
}

impl Default for PnpOptions {
    fn default() -> Self {
        Self { max_iters: 100, initial_lambda: 1e-3, step_tol: 1e-10, cost_tol: 1e-12 }
    }
}

fn to_camera(rotation: &Rotation3<f64>, translation: &Vector3<f64>, p: &[f64; 3]) -> Vector3<f64> {
    rotation * Vector3::from(*p) + translation
}

/// Projects model points through a pinhole camera after the rigid transform.
pub fn project_points(model_points: &[[f64; 3]], pose: &HeadPose, intr: &CameraIntrinsics) -> Result<Vec<[f64; 2]>> {
    let rot = pose.rotation_matrix();
    let t = Vector3::from(pose.translation);
    model_points
        .iter()
        .map(|p| {
            let c = to_camera(&rot, &t, p);
            if c.z <= 0.0 {
                return Err(Error::DegenerateGeometry(format!("point {p:?} has non-positive depth {}", c.z)));
            }
            Ok([intr.fx * c.x / c.z + intr.cx, intr.fy * c.y / c.z + intr.cy])
        })
        .collect()
}

struct Problem<'a> {
    model: &'a [[f64; 3]],
    image: &'a [[f64; 2]],
    intr: &'a CameraIntrinsics,
}

impl Problem<'_> {
    /// Sum of squared residuals, or `None` if a point falls behind the camera.
    fn cost(&self, rot: &Rotation3<f64>, t: &Vector3<f64>) -> Option<f64> {
        let mut sum = 0.0;
        for (p, uv) in self.model.iter().zip(self.image) {
            let c = to_camera(rot, t, p);
            if c.z <= 0.0 {
                return None;
            }
            let du = self.intr.fx * c.x / c.z + self.intr.cx - uv[0];
            let dv = self.intr.fy * c.y / c.z + self.intr.cy - uv[1];
            sum += du * du + dv * dv;
        }
        Some(sum)
    }

    /// Gauss-Newton normal equations for a left-multiplied rotation increment
    /// and an additive translation increment.
    fn normal_equations(&self, rot: &Rotation3<f64>, t: &Vector3<f64>) -> (Matrix6<f64>, Vector6<f64>) {
        let mut jtj = Matrix6::zeros();
        let mut jtr = Vector6::zeros();
        for (p, uv) in self.model.iter().zip(self.image) {
            let rp = rot * Vector3::from(*p);
            let c = rp + t;
            let iz = 1.0 / c.z;
            let (fx, fy) = (self.intr.fx, self.intr.fy);
            let du_dc = Vector3::new(fx * iz, 0.0, -fx * c.x * iz * iz);
            let dv_dc = Vector3::new(0.0, fy * iz, -fy * c.y * iz * iz);
            // d(c)/d(omega) = -[rp]x, so row^T * (-[rp]x) = (rp x row)^T.
            let w = rp.cross(&du_dc);
            let ru = Vector6::new(w.x, w.y, w.z, du_dc.x, du_dc.y, du_dc.z);
            let w = rp.cross(&dv_dc);
            let rv = Vector6::new(w.x, w.y, w.z, dv_dc.x, dv_dc.y, dv_dc.z);
            let eu = fx * c.x * iz + self.intr.cx - uv[0];
            let ev = fy * c.y * iz + self.intr.cy - uv[1];
            jtj += ru * ru.transpose() + rv * rv.transpose();
            jtr += ru * eu + rv * ev;
        }
        (jtj, jtr)
    }
}

/// Least-squares pose of `model_points` given their projections.
///
/// Levenberg-Marquardt over rotation (axis-angle) and translation, started at
/// the identity rotation with the model placed `fx` units in front of the
/// camera.
pub fn solve_pnp(
    model_points: &[[f64; 3]],
    image_points: &[[f64; 2]],
    intr: &CameraIntrinsics,
    opts: &PnpOptions,
) -> Result<HeadPose> {
    if model_points.len() < 4 {
        return Err(Error::Input(format!("PnP needs at least 4 correspondences, got {}", model_points.len())));
    }
    if model_points.len() != image_points.len() {
        return Err(Error::Input(format!(
            "{} model points but {} image points",
            model_points.len(),
            image_points.len()
        )));
    }
    intr.validate()?;
    let problem = Problem { model: model_points, image: image_points, intr };
    let n = model_points.len() as f64;

    let mut rot = Rotation3::identity();
    let mut t = Vector3::new(0.0, 0.0, intr.fx);
    let mut cost = problem
        .cost(&rot, &t)
        .ok_or_else(|| Error::DegenerateGeometry("initial pose puts model behind the camera".into()))?;
    let mut lambda = opts.initial_lambda;

    for _ in 0..opts.max_iters {
        let (jtj, jtr) = problem.normal_equations(&rot, &t);
        let converged = loop {
            let mut a = jtj;
            for i in 0..6 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| -c.solve(&jtr)) else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    break true;
                }
                continue;
            };
            let omega = Vector3::new(step[0], step[1], step[2]);
            let cand_rot = Rotation3::from_scaled_axis(omega) * rot;
            let cand_t = t + Vector3::new(step[3], step[4], step[5]);
            let small_step = step.norm() < opts.step_tol;
            match problem.cost(&cand_rot, &cand_t) {
                Some(c) if c < cost => {
                    let change = cost - c;
                    rot = cand_rot;
                    t = cand_t;
                    cost = c;
                    lambda = (lambda / 10.0).max(1e-12);
                    break small_step || change < opts.cost_tol;
                }
                _ => {
                    lambda *= 10.0;
                    if small_step || lambda > 1e20 {
                        break true;
                    }
                }
            }
        };
        if converged {
            let rotation = rot.scaled_axis();
            return Ok(HeadPose {
                rotation: [rotation.x, rotation.y, rotation.z],
                translation: [t.x, t.y, t.z],
                reproj_error: (cost / n).sqrt(),
            });
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iters, last_rms: (cost / n).sqrt() })
}

/// Head pose from the face landmarks of one frame.
pub fn estimate_head_pose(
    frame: &KeypointFrame,
    intr: &CameraIntrinsics,
    face_model: &FaceModel,
    min_confidence: f64,
) -> Result<HeadPose> {
    let mut image = Vec::with_capacity(face_model.joint_ids.len());
    for &id in &face_model.joint_ids {
        let kp = frame
            .joints
            .get(id)
            .ok_or_else(|| Error::Config(format!("face model joint {id} out of range")))?;
        if kp.c < min_confidence {
            return Err(Error::LowConfidence { joint: id, confidence: kp.c, min: min_confidence });
        }
        image.push([kp.x, kp.y]);
    }
    solve_pnp(&face_model.points, &image, intr, &PnpOptions::default())
}
