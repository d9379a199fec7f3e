use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{sub_seed, Scenario};
use crate::pose::{joints, project_points, CameraIntrinsics, HeadPose, Keypoint, KeypointFrame, NUM_JOINTS};

const HEAD_ANCHOR: (f64, f64) = (960.0, 400.0);
const HEAD_DEPTH: f64 = 6000.0;

/// 68 facial landmarks in model units, camera axis convention, nose tip at
/// the origin. `mouth_open` lowers the lower lip.
pub fn face_model_68(mouth_open: f64) -> Vec<[f64; 3]> {
    let mut p = Vec::with_capacity(68);
    // jaw line 0..17
    for i in 0..17 {
        let t = (i as f64 - 8.0) / 8.0;
        let a = t * PI / 2.0;
        p.push([300.0 * a.sin(), -100.0 + 430.0 * a.cos(), 65.0 + 200.0 * t.abs().powf(1.5)]);
    }
    // brows 17..27
    for i in 0..5 {
        p.push([-300.0 + 60.0 * i as f64, -250.0 - 15.0 * (2.0 - (i as f64 - 2.0).abs()), 120.0]);
    }
    for i in 0..5 {
        p.push([60.0 + 60.0 * i as f64, -250.0 - 15.0 * (2.0 - (i as f64 - 2.0).abs()), 120.0]);
    }
    // nose bridge 27..31, tip last
    for i in 0..4 {
        let t = i as f64 / 3.0;
        p.push([0.0, -170.0 * (1.0 - t), 110.0 * (1.0 - t)]);
    }
    // nostrils 31..36
    for i in 0..5 {
        p.push([-70.0 + 35.0 * i as f64, 45.0, 70.0]);
    }
    // eyes 36..48
    for cx in [-165.0, 165.0] {
        for (dx, dy) in [(-60.0, 0.0), (-25.0, -20.0), (25.0, -20.0), (60.0, 0.0), (25.0, 18.0), (-25.0, 18.0)] {
            p.push([cx + dx, -170.0 + dy, 135.0]);
        }
    }
    // outer lips 48..60
    let upper = [(-150.0, 150.0), (-95.0, 120.0), (-40.0, 110.0), (0.0, 115.0), (40.0, 110.0), (95.0, 120.0), (150.0, 150.0)];
    for &(x, y) in &upper {
        p.push([x, y, 125.0 - 30.0 * (1.0 - x.abs() / 150.0)]);
    }
    let lower = [(95.0, 185.0), (40.0, 200.0), (0.0, 205.0), (-40.0, 200.0), (-95.0, 185.0)];
    for &(x, y) in &lower {
        p.push([x, y + mouth_open * (1.0 - x.abs() / 200.0), 125.0 - 30.0 * (1.0 - x.abs() / 150.0)]);
    }
    // inner lips 60..68
    p.push([-120.0, 150.0, 120.0]);
    for &x in &[-45.0, 0.0, 45.0] {
        p.push([x, 140.0, 100.0]);
    }
    p.push([120.0, 150.0, 120.0]);
    for &x in &[45.0, 0.0, -45.0] {
        p.push([x, 165.0 + mouth_open * (1.0 - x.abs() / 200.0), 100.0]);
    }
    p
}

/// Controllable degrees of freedom of the synthetic driver.
#[derive(Debug, Clone, Copy, Default)]
struct Drive {
    /// Pitch (nod) and yaw (turn), radians.
    pitch: f64,
    yaw: f64,
    mouth_open: f64,
    left_wrist: (f64, f64),
    right_wrist: (f64, f64),
    right_shoulder: (f64, f64),
}

fn add(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 + b.0, a.1 + b.1)
}

fn lerp(a: (f64, f64), b: (f64, f64), t: f64) -> (f64, f64) {
    (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
}

const L_WRIST: (f64, f64) = (150.0, 520.0);
const R_WRIST: (f64, f64) = (-150.0, 520.0);
const MOUTH: (f64, f64) = (0.0, 55.0);

/// Poses for one activity class at envelope `e` in [0, 1] and frame `f`.
fn class_drive(class_id: usize, e: f64, f: f64) -> Drive {
    let osc = |period: f64| 0.5 + 0.5 * (2.0 * PI * f / period).sin();
    let mut d = Drive { left_wrist: L_WRIST, right_wrist: R_WRIST, ..Drive::default() };
    match class_id {
        // drinking
        1 => {
            d.right_wrist = lerp(R_WRIST, add(MOUTH, (10.0, 60.0)), e);
            d.pitch = -0.25 * e;
            d.mouth_open = 25.0 * e;
        }
        // phone call, right / left hand
        2 => {
            d.right_wrist = lerp(R_WRIST, (-110.0, 20.0), e);
            d.mouth_open = 35.0 * e * osc(18.0);
        }
        3 => {
            d.left_wrist = lerp(L_WRIST, (110.0, 20.0), e);
            d.mouth_open = 35.0 * e * osc(18.0);
        }
        // eating
        4 => {
            d.right_wrist = lerp(R_WRIST, add(MOUTH, (20.0, 70.0)), e * osc(45.0));
            d.mouth_open = 20.0 * e * osc(22.0);
        }
        // texting, right / left hand
        5 => {
            d.right_wrist = lerp(R_WRIST, (-40.0, 400.0), e);
            d.pitch = 0.35 * e;
        }
        6 => {
            d.left_wrist = lerp(L_WRIST, (40.0, 400.0), e);
            d.pitch = 0.35 * e;
        }
        // reaching behind
        7 => {
            d.right_wrist = lerp(R_WRIST, (-420.0, 180.0), e);
            d.right_shoulder = (-110.0 * e, -40.0 * e);
            d.yaw = -0.6 * e;
        }
        // adjusting control panel
        8 => {
            d.right_wrist = lerp(R_WRIST, (-20.0, 600.0), e);
            d.yaw = 0.2 * e;
            d.pitch = 0.15 * e;
        }
        // picking up, driver / passenger side
        9 => {
            d.left_wrist = lerp(L_WRIST, (330.0, 700.0), e);
            d.yaw = 0.4 * e;
            d.pitch = 0.3 * e;
        }
        10 => {
            d.right_wrist = lerp(R_WRIST, (-380.0, 650.0), e);
            d.yaw = -0.5 * e;
            d.pitch = 0.3 * e;
        }
        // talking to passenger, right / back
        11 => {
            d.yaw = -0.7 * e;
            d.mouth_open = 30.0 * e * osc(14.0);
        }
        12 => {
            d.yaw = -0.95 * e;
            d.pitch = -0.15 * e;
            d.mouth_open = 30.0 * e * osc(14.0);
        }
        // yawning
        13 => {
            d.mouth_open = 110.0 * e;
            d.left_wrist = lerp(L_WRIST, add(MOUTH, (30.0, 80.0)), e);
            d.pitch = -0.2 * e;
        }
        // hand on head
        14 => {
            d.right_wrist = lerp(R_WRIST, (-60.0, -170.0), e);
            d.pitch = 0.1 * e;
        }
        // singing
        15 => {
            d.mouth_open = 45.0 * e * osc(25.0);
            d.yaw = 0.25 * e * (2.0 * osc(60.0) - 1.0);
            d.left_wrist = add(L_WRIST, (30.0 * e * (2.0 * osc(30.0) - 1.0), 0.0));
            d.right_wrist = add(R_WRIST, (30.0 * e * (2.0 * osc(30.0) - 1.0), 0.0));
        }
        _ => {}
    }
    d
}

/// Keypoints of the driver for `d`, before camera transform and jitter.
fn render(d: &Drive, intr: &CameraIntrinsics) -> Vec<(f64, f64, f64)> {
    let (ax, ay) = HEAD_ANCHOR;
    let t = [(ax - intr.cx) * HEAD_DEPTH / intr.fx, (ay - intr.cy) * HEAD_DEPTH / intr.fy, HEAD_DEPTH];
    let pose = HeadPose::new([d.pitch, d.yaw, 0.0], t);
    let face = project_points(&face_model_68(d.mouth_open), &pose, intr).expect("face in front of camera");
    let mut out = vec![(0.0, 0.0, 0.9); NUM_JOINTS];
    let rel = |p: (f64, f64)| (ax + p.0, ay + p.1);
    for (i, f) in face.iter().enumerate() {
        out[joints::face(i)] = (f[0], f[1], 0.9);
    }
    let mean = |ids: std::ops::Range<usize>| {
        let n = ids.len() as f64;
        let (sx, sy) = ids.fold((0.0, 0.0), |acc, i| (acc.0 + face[i][0], acc.1 + face[i][1]));
        (sx / n, sy / n)
    };
    let set = |out: &mut Vec<(f64, f64, f64)>, j: usize, p: (f64, f64), c: f64| out[j] = (p.0, p.1, c);
    set(&mut out, joints::NOSE, (face[30][0], face[30][1]), 0.95);
    set(&mut out, 1, mean(42..48), 0.95);
    set(&mut out, 2, mean(36..42), 0.95);
    set(&mut out, 3, (face[16][0], face[16][1]), 0.8);
    set(&mut out, 4, (face[0][0], face[0][1]), 0.8);
    let l_sh = rel((170.0, 230.0));
    let r_sh = rel(add((-170.0, 230.0), d.right_shoulder));
    let l_wr = rel(d.left_wrist);
    let r_wr = rel(d.right_wrist);
    set(&mut out, joints::LEFT_SHOULDER, l_sh, 0.95);
    set(&mut out, joints::RIGHT_SHOULDER, r_sh, 0.95);
    set(&mut out, joints::LEFT_ELBOW, add(lerp(l_sh, l_wr, 0.5), (70.0, 40.0)), 0.9);
    set(&mut out, joints::RIGHT_ELBOW, add(lerp(r_sh, r_wr, 0.5), (-70.0, 40.0)), 0.9);
    set(&mut out, joints::LEFT_WRIST, l_wr, 0.9);
    set(&mut out, joints::RIGHT_WRIST, r_wr, 0.9);
    for (j, p) in [(11, (120.0, 650.0)), (12, (-120.0, 650.0)), (13, (140.0, 850.0)), (14, (-140.0, 850.0)), (15, (130.0, 1000.0)), (16, (-130.0, 1000.0))] {
        set(&mut out, j, rel(p), 0.5);
    }
    for (k, p) in [(0, (170.0, 1040.0)), (1, (190.0, 1035.0)), (2, (125.0, 1020.0)), (3, (-170.0, 1040.0)), (4, (-190.0, 1035.0)), (5, (-125.0, 1020.0))] {
        set(&mut out, joints::FEET + k, rel(p), 0.4);
    }
    for (base, wrist, mirror) in [(joints::LEFT_HAND, l_wr, 1.0), (joints::RIGHT_HAND, r_wr, -1.0)] {
        out[base] = (wrist.0, wrist.1, 0.85);
        for finger in 0..5 {
            let angle = (-60.0 + 25.0 * finger as f64).to_radians();
            let dir = (mirror * angle.sin(), -angle.cos());
            for j in 1..5 {
                let r = 10.0 + 16.0 * j as f64;
                out[base + 4 * finger + j] = (wrist.0 + dir.0 * r, wrist.1 + dir.1 * r, 0.85);
            }
        }
    }
    out
}

/// Joint positions of the neutral driving pose for camera 0, no noise.
pub fn neutral_pose() -> Vec<Keypoint> {
    render(&class_drive(0, 0.0, 0.0), &CameraIntrinsics::default()).into_iter().map(|(x, y, c)| Keypoint::new(x, y, c)).collect()
}

fn camera_affine(scn: &Scenario, camera: u32) -> (f64, (f64, f64)) {
    match camera {
        0 => (1.0, (0.0, 0.0)),
        1 => (0.85, (150.0, 80.0)),
        2 => (1.15, (-140.0, -60.0)),
        c => {
            let h = sub_seed(scn.seed, 3, c as u64);
            let u = |k: u32| ((h >> (k * 16)) & 0xffff) as f64 / 65535.0;
            (0.8 + 0.4 * u(0), (-200.0 + 400.0 * u(1), -100.0 + 200.0 * u(2)))
        }
    }
}

fn envelope(frame: u64, start: u64, end: u64) -> f64 {
    let ramp = ((end - start) as f64 / 4.0).min(30.0).max(1.0);
    let f = frame as f64;
    ((f - start as f64 + 1.0) / ramp).min((end as f64 - f) / ramp).clamp(0.0, 1.0)
}

/// One camera's keypoint stream for the scenario.
pub fn gen_keypoints(scn: &Scenario, camera: u32) -> Vec<KeypointFrame> {
    let intr = CameraIntrinsics::default();
    let (scale, (ox, oy)) = camera_affine(scn, camera);
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(scn.seed, 4, camera as u64));
    let jitter = Normal::new(0.0, scn.noise_sigma).expect("finite sigma");
    let round = |v: f64| (v * 100.0).round() / 100.0;
    (0..scn.num_frames as u64)
        .map(|f| {
            let drive = match scn.activity_at(f) {
                Some(a) => class_drive(a.class_id, envelope(f, a.start_frame, a.end_frame), f as f64),
                None => class_drive(0, 0.0, f as f64),
            };
            let joints = render(&drive, &intr)
                .into_iter()
                .map(|(x, y, c)| {
                    let (jx, jy) = if scn.noise_sigma > 0.0 { (jitter.sample(&mut rng), jitter.sample(&mut rng)) } else { (0.0, 0.0) };
                    Keypoint::new(round(scale * x + ox + jx), round(scale * y + oy + jy), c)
                })
                .collect();
            KeypointFrame { video_id: scn.video_id.clone(), camera, frame_index: f, joints }
        })
        .collect()
}
