use serde::{Deserialize, Serialize};

use super::pnp::{estimate_head_pose, CameraIntrinsics, FaceModel, HeadPose, DEFAULT_MIN_CONFIDENCE};
use super::{joint_distance, joints, select_keypoints, KeypointFrame, NUM_JOINTS};
use crate::error::{Error, Result};

pub const HEAD_POSE_DIM: usize = 6;

/// Which joints and joint pairs make up a pose feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub selected_joint_ids: Vec<usize>,
    pub hand_face_pairs: Vec<(usize, usize)>,
    pub lip_pairs: Vec<(usize, usize)>,
    pub include_confidence: bool,
    /// Either 6 (axis-angle rotation and translation) or 0 to drop head pose.
    pub head_pose_dim: usize,
}

const HAND_TIPS: [usize; 5] = [0, 4, 8, 12, 20];

impl FeatureLayout {
    /// Face, both hands and the shoulders; every hand joint paired with the
    /// nose tip; ten upper/lower lip pairs.
    pub fn full() -> Self {
        let mut selected: Vec<usize> = (joints::FACE..joints::FACE + 68).collect();
        selected.extend(joints::LEFT_HAND..joints::LEFT_HAND + 21);
        selected.extend(joints::RIGHT_HAND..joints::RIGHT_HAND + 21);
        selected.extend([joints::LEFT_SHOULDER, joints::RIGHT_SHOULDER]);
        let hand_face_pairs = (joints::LEFT_HAND..joints::RIGHT_HAND + 21)
            .map(|h| (h, joints::FACE_NOSE_TIP))
            .collect();
        let lip_pairs = [(49, 59), (50, 58), (51, 57), (52, 56), (53, 55), (61, 67), (62, 66), (63, 65), (51, 66), (62, 57)]
            .iter()
            .map(|&(u, l)| (joints::face(u), joints::face(l)))
            .collect();
        Self {
            selected_joint_ids: selected,
            hand_face_pairs,
            lip_pairs,
            include_confidence: false,
            head_pose_dim: HEAD_POSE_DIM,
        }
    }

    /// A small layout for desk-scale training: key face landmarks, wrist and
    /// finger tips, and the arms.
    pub fn compact() -> Self {
        let mut selected = vec![
            joints::FACE_NOSE_TIP,
            joints::FACE_CHIN,
            joints::FACE_LEFT_EYE_OUTER,
            joints::FACE_RIGHT_EYE_OUTER,
            joints::FACE_LEFT_MOUTH,
            joints::FACE_RIGHT_MOUTH,
            joints::face(51),
            joints::face(57),
        ];
        let hands: Vec<usize> = [joints::LEFT_HAND, joints::RIGHT_HAND]
            .iter()
            .flat_map(|&base| HAND_TIPS.iter().map(move |&o| base + o))
            .collect();
        selected.extend(&hands);
        selected.extend([
            joints::LEFT_SHOULDER,
            joints::RIGHT_SHOULDER,
            joints::LEFT_ELBOW,
            joints::RIGHT_ELBOW,
            joints::LEFT_WRIST,
            joints::RIGHT_WRIST,
        ]);
        Self {
            selected_joint_ids: selected,
            hand_face_pairs: hands.iter().map(|&h| (h, joints::FACE_NOSE_TIP)).collect(),
            lip_pairs: [(51, 57), (62, 66), (50, 58)]
                .iter()
                .map(|&(u, l)| (joints::face(u), joints::face(l)))
                .collect(),
            include_confidence: false,
            head_pose_dim: HEAD_POSE_DIM,
        }
    }

    /// The same joints without head pose or distance features.
    pub fn skeleton_only(&self) -> Self {
        Self { hand_face_pairs: Vec::new(), lip_pairs: Vec::new(), head_pose_dim: 0, ..self.clone() }
    }

    fn coords_per_joint(&self) -> usize {
        if self.include_confidence {
            3
        } else {
            2
        }
    }

    pub fn pose_dim(&self) -> usize {
        self.selected_joint_ids.len() * self.coords_per_joint()
            + self.head_pose_dim
            + self.hand_face_pairs.len()
            + self.lip_pairs.len()
    }

    pub fn uses_head_pose(&self) -> bool {
        self.head_pose_dim > 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_pose_dim != 0 && self.head_pose_dim != HEAD_POSE_DIM {
            return Err(Error::Config(format!("head_pose_dim must be 0 or {HEAD_POSE_DIM}, got {}", self.head_pose_dim)));
        }
        let pair_ids = self
            .hand_face_pairs
            .iter()
            .chain(&self.lip_pairs)
            .flat_map(|&(a, b)| [a, b]);
        if let Some(id) = self.selected_joint_ids.iter().copied().chain(pair_ids).find(|&id| id >= NUM_JOINTS) {
            return Err(Error::Config(format!("layout references joint {id}, valid ids are < {NUM_JOINTS}")));
        }
        if self.pose_dim() == 0 {
            return Err(Error::Config("layout produces an empty feature vector".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let layout: Self = serde_json::from_str(text)?;
        layout.validate()?;
        Ok(layout)
    }
}

impl Default for FeatureLayout {
    fn default() -> Self {
        Self::full()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionVector {
    pub head_pose: [f64; 6],
    pub hand_face_distances: Vec<f64>,
    pub lip_distances: Vec<f64>,
}

impl MotionVector {
    pub fn dim(&self) -> usize {
        6 + self.hand_face_distances.len() + self.lip_distances.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFeatureVector {
    pub frame_index: u64,
    pub values: Vec<f64>,
}

fn pair_distances(frame: &KeypointFrame, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(a, b)| joint_distance(&frame.joints[a], &frame.joints[b]))
        .collect()
}

pub fn build_motion_vector(frame: &KeypointFrame, layout: &FeatureLayout, head: &HeadPose) -> Result<MotionVector> {
    layout.validate()?;
    frame.validate()?;
    Ok(MotionVector {
        head_pose: head.as_features(),
        hand_face_distances: pair_distances(frame, &layout.hand_face_pairs),
        lip_distances: pair_distances(frame, &layout.lip_pairs),
    })
}

/// Selected joint coordinates followed by head pose and pair distances.
pub fn build_pose_feature(frame: &KeypointFrame, layout: &FeatureLayout, head: &HeadPose) -> Result<PoseFeatureVector> {
    layout.validate()?;
    let motion = build_motion_vector(frame, layout, head)?;
    let mut values = Vec::with_capacity(layout.pose_dim());
    for kp in select_keypoints(frame, &layout.selected_joint_ids)? {
        values.push(kp.x);
        values.push(kp.y);
        if layout.include_confidence {
            values.push(kp.c);
        }
    }
    if layout.uses_head_pose() {
        values.extend_from_slice(&motion.head_pose);
    }
    values.extend(motion.hand_face_distances);
    values.extend(motion.lip_distances);
    debug_assert_eq!(values.len(), layout.pose_dim());
    Ok(PoseFeatureVector { frame_index: frame.frame_index, values })
}

/// Turns a single camera's frame stream into pose features.
///
/// Frames whose face landmarks cannot produce a head pose reuse the last
/// good pose; zeros are used until the first one is found.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    layout: FeatureLayout,
    intrinsics: CameraIntrinsics,
    face_model: FaceModel,
    min_confidence: f64,
    last_pose: HeadPose,
    substituted: usize,
}

impl FeatureExtractor {
    pub fn new(layout: FeatureLayout, intrinsics: CameraIntrinsics) -> Result<Self> {
        layout.validate()?;
        intrinsics.validate()?;
        Ok(Self {
            layout,
            intrinsics,
            face_model: FaceModel::canonical(),
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            last_pose: HeadPose::default(),
            substituted: 0,
        })
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    /// Number of frames that fell back to a substituted head pose.
    pub fn substituted(&self) -> usize {
        self.substituted
    }

    pub fn process(&mut self, frame: &KeypointFrame) -> Result<PoseFeatureVector> {
        let head = if self.layout.uses_head_pose() {
            match estimate_head_pose(frame, &self.intrinsics, &self.face_model, self.min_confidence) {
                Ok(pose) => {
                    self.last_pose = pose;
                    pose
                }
                Err(Error::LowConfidence { .. } | Error::NoConvergence { .. } | Error::DegenerateGeometry(_)) => {
                    self.substituted += 1;
                    self.last_pose
                }
                Err(e) => return Err(e),
            }
        } else {
            HeadPose::default()
        };
        build_pose_feature(frame, &self.layout, &head)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{project_points, Keypoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng) -> KeypointFrame {
        let joints = (0..NUM_JOINTS)
            .map(|_| Keypoint::new(rng.gen_range(0.0..1920.0), rng.gen_range(0.0..1080.0), rng.gen_range(0.0..1.0)))
            .collect();
        KeypointFrame::new("v", 0, 7, joints).unwrap()
    }

    #[test]
    fn layout_dimensions() {
        let full = FeatureLayout::full();
        assert_eq!(full.selected_joint_ids.len(), 112);
        assert_eq!(full.hand_face_pairs.len(), 42);
        assert_eq!(full.lip_pairs.len(), 10);
        assert_eq!(full.pose_dim(), 112 * 2 + 6 + 42 + 10);
        let skel = full.skeleton_only();
        assert_eq!(skel.pose_dim(), 112 * 2);
        let with_conf = FeatureLayout { include_confidence: true, ..skel };
        assert_eq!(with_conf.pose_dim(), 112 * 3);
        assert_eq!(FeatureLayout::compact().pose_dim(), 24 * 2 + 6 + 10 + 3);
    }

    #[test]
    fn coincident_joints_have_zero_distances() {
        let frame = KeypointFrame::new("v", 0, 0, vec![Keypoint::new(5.0, 5.0, 1.0); NUM_JOINTS]).unwrap();
        let m = build_motion_vector(&frame, &FeatureLayout::full(), &HeadPose::default()).unwrap();
        assert!(m.hand_face_distances.iter().chain(&m.lip_distances).all(|&d| d == 0.0));
        assert_eq!(m.dim(), 6 + 42 + 10);
    }

    #[test]
    fn single_pair_distance() {
        let mut joints = vec![Keypoint::default(); NUM_JOINTS];
        joints[joints::RIGHT_WRIST] = Keypoint::new(3.0, 4.0, 1.0);
        let frame = KeypointFrame::new("v", 0, 0, joints).unwrap();
        let layout = FeatureLayout {
            selected_joint_ids: vec![],
            hand_face_pairs: vec![(joints::RIGHT_WRIST, joints::NOSE)],
            lip_pairs: vec![],
            include_confidence: false,
            head_pose_dim: 6,
        };
        let m = build_motion_vector(&frame, &layout, &HeadPose::default()).unwrap();
        assert_eq!(m.hand_face_distances, vec![5.0]);
    }

    #[test]
    fn motion_vector_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = FeatureLayout::full();
        let head = HeadPose::new([0.1, 0.2, 0.3], [4.0, 5.0, 6.0]);
        for _ in 0..20 {
            let frame = random_frame(&mut rng);
            let m = build_motion_vector(&frame, &layout, &head).unwrap();
            let mut naive = vec![0.1, 0.2, 0.3, 4.0, 5.0, 6.0];
            for &(a, b) in layout.hand_face_pairs.iter().chain(&layout.lip_pairs) {
                let (p, q) = (frame.joints[a], frame.joints[b]);
                naive.push(((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt());
            }
            let got: Vec<f64> = m.head_pose.iter().chain(&m.hand_face_distances).chain(&m.lip_distances).copied().collect();
            assert_eq!(got.len(), naive.len());
            for (g, n) in got.iter().zip(&naive) {
                assert!((g - n).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn feature_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frame = random_frame(&mut rng);
        let head = HeadPose::default();
        let full = FeatureLayout::full();
        let f = build_pose_feature(&frame, &full, &head).unwrap();
        assert_eq!(f.values.len(), 112 * 2 + 6 + 42 + 10);
        assert_eq!(f.frame_index, 7);
        let skel = build_pose_feature(&frame, &full.skeleton_only(), &head).unwrap();
        assert_eq!(skel.values.len(), 224);
        assert_eq!(&skel.values[..], &f.values[..224]);
    }

    #[test]
    fn empty_layout_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frame = random_frame(&mut rng);
        let empty = FeatureLayout {
            selected_joint_ids: vec![],
            hand_face_pairs: vec![],
            lip_pairs: vec![],
            include_confidence: false,
            head_pose_dim: 0,
        };
        assert!(matches!(build_pose_feature(&frame, &empty, &HeadPose::default()), Err(Error::Config(_))));
        let bad = FeatureLayout { selected_joint_ids: vec![200], ..empty };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn layout_json_uses_field_names() {
        let text = serde_json::to_string(&FeatureLayout::compact()).unwrap();
        for key in ["selected_joint_ids", "hand_face_pairs", "lip_pairs", "include_confidence", "head_pose_dim"] {
            assert!(text.contains(key));
        }
        assert_eq!(FeatureLayout::from_json(&text).unwrap(), FeatureLayout::compact());
        assert!(FeatureLayout::from_json(r#"{"selected_joint_ids":[999],"hand_face_pairs":[],"lip_pairs":[],"include_confidence":false,"head_pose_dim":6}"#).is_err());
    }

    fn face_frame(rng: &mut ChaCha8Rng, intr: &CameraIntrinsics, shift: (f64, f64)) -> KeypointFrame {
        let model = FaceModel::canonical();
        let pose = HeadPose::new([0.1, -0.3, 0.05], [-80.0, 60.0, 2600.0]);
        let uv = project_points(&model.points, &pose, intr).unwrap();
        let mut f = random_frame(rng);
        for j in f.joints.iter_mut() {
            j.c = 1.0;
        }
        for (&id, p) in model.joint_ids.iter().zip(&uv) {
            f.joints[id] = Keypoint::new(p[0], p[1], 1.0);
        }
        for j in f.joints.iter_mut() {
            j.x += shift.0;
            j.y += shift.1;
        }
        f
    }

    #[test]
    fn translation_leaves_distances_unchanged() {
        let intr = CameraIntrinsics::default();
        let layout = FeatureLayout::full();
        for seed in 0..10 {
            let base = face_frame(&mut ChaCha8Rng::seed_from_u64(seed), &intr, (0.0, 0.0));
            let moved = face_frame(&mut ChaCha8Rng::seed_from_u64(seed), &intr, (37.0, -21.0));
            let mut ea = FeatureExtractor::new(layout.clone(), intr).unwrap();
            let mut eb = FeatureExtractor::new(layout.clone(), intr).unwrap();
            let a = ea.process(&base).unwrap().values;
            let b = eb.process(&moved).unwrap().values;
            let coords = layout.selected_joint_ids.len() * 2;
            let dists = coords + 6;
            for i in dists..a.len() {
                assert!((a[i] - b[i]).abs() <= 1e-9, "distance {i} changed");
            }
            for i in (0..coords).step_by(2) {
                assert!((b[i] - a[i] - 37.0).abs() <= 1e-9);
            }
            let dt: f64 = (coords + 3..coords + 6).map(|i| (a[i] - b[i]).abs()).sum();
            assert!(dt > 0.0, "head translation should move with the image shift");
        }
    }

    #[test]
    fn extractor_substitutes_previous_pose() {
        let intr = CameraIntrinsics::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ex = FeatureExtractor::new(FeatureLayout::full(), intr).unwrap();
        let coords = 224;

        let mut dark = face_frame(&mut rng, &intr, (0.0, 0.0));
        dark.joints.iter_mut().for_each(|j| j.c = 0.0);
        let first = ex.process(&dark).unwrap();
        assert!(first.values[coords..coords + 6].iter().all(|&v| v == 0.0));

        let good = face_frame(&mut rng, &intr, (0.0, 0.0));
        let second = ex.process(&good).unwrap();
        let third = ex.process(&dark).unwrap();
        assert_eq!(&second.values[coords..coords + 6], &third.values[coords..coords + 6]);
        assert_eq!(ex.substituted(), 2);
    }

    #[test]
    fn feature_length_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ex = FeatureExtractor::new(FeatureLayout::compact(), CameraIntrinsics::default()).unwrap();
        let lens: Vec<usize> = (0..30).map(|_| ex.process(&random_frame(&mut rng)).unwrap().values.len()).collect();
        assert!(lens.iter().all(|&l| l == FeatureLayout::compact().pose_dim()));
    }
}
