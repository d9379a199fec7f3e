#![allow(dead_code)]

use dact_core::data_io::FeatureStream;
use dact_core::localization::{localize_scene, LocalizeConfig};
use dact_core::metrics::{evaluate, Report};
use dact_core::model::{frame_labels, infer, train, Dataset, LabeledStream, LossConfig, ModelConfig, VideoStream};
use dact_core::pipeline::{extract_features, predictions, video_stream};
use dact_core::pose::{CameraIntrinsics, FeatureLayout};
use dact_core::synth::{gen_embeddings, gen_keypoints, Activity, Scenario};

pub const FRAMES: usize = 20_000;
pub const SEGMENT: usize = 32;
pub const EMBED_DIM: usize = 32;

/// Eight activities of distinct classes spread over the video.
pub fn scenario(seed: u64) -> Scenario {
    let classes = [3usize, 7, 1, 12, 5, 9, 14, 2];
    let mut acts = Vec::new();
    let mut f = 800u64;
    for (i, &c) in classes.iter().enumerate() {
        let len = 700 + 150 * (i as u64 % 4);
        acts.push(Activity { class_id: c, start_frame: f, end_frame: f + len });
        f += len + 1500;
    }
    let mut scn = Scenario::new(FRAMES, acts, seed);
    scn.embed_dim = EMBED_DIM;
    scn.segment_len = SEGMENT;
    scn
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    EmbeddingsOnly,
    Skeleton,
    SkeletonMotion,
}

pub struct Camera {
    pub pose: Option<FeatureStream>,
    pub embed: FeatureStream,
}

pub fn cameras(scn: &Scenario, layout: Option<&FeatureLayout>) -> Vec<Camera> {
    let intr = CameraIntrinsics::from_image_size(1280.0, 720.0);
    (0..scn.num_cameras as u32)
        .map(|cam| {
            let pose = layout.map(|l| extract_features(gen_keypoints(scn, cam).into_iter().map(Ok), l, intr).unwrap().stream);
            let emb = gen_embeddings(scn, cam);
            let embed = FeatureStream::from_rows(scn.embed_dim, scn.segment_len, 1, emb.iter().map(|e| e.values.clone())).unwrap();
            Camera { pose, embed }
        })
        .collect()
}

pub fn layout(branch: Branch) -> Option<FeatureLayout> {
    match branch {
        Branch::EmbeddingsOnly => None,
        Branch::Skeleton => Some(FeatureLayout::compact().skeleton_only()),
        Branch::SkeletonMotion => Some(FeatureLayout::compact()),
    }
}

pub fn desk_model(pose_dim: usize, seed: u64) -> ModelConfig {
    ModelConfig { window_tokens: 4, token_gap: 16, segment_len: SEGMENT, seed, ..ModelConfig::with_dims(pose_dim, EMBED_DIM, 2, 1) }
}

pub struct RunConfig {
    pub samples: usize,
    pub epochs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { samples: 3000, epochs: 8 }
    }
}

/// Features, training, inference, localization and evaluation on one scene.
pub fn run_scene(scn: &Scenario, branch: Branch, seed: u64, run: &RunConfig) -> Report {
    let layout = layout(branch);
    let cams = cameras(scn, layout.as_ref());
    let cfg = desk_model(layout.as_ref().map_or(0, |l| l.pose_dim()), seed);
    let streams: Vec<VideoStream> = cams.iter().map(|c| video_stream(c.pose.as_ref(), &c.embed, &cfg).unwrap()).collect();
    let labels = frame_labels(&scn.annotations(), scn.num_frames);
    let labeled = streams.iter().map(|s| LabeledStream { stream: s.clone(), frame_labels: labels.clone() }).collect();
    let mut data = Dataset::new(labeled, &cfg).unwrap();
    data.subsample_random(run.samples, seed);
    let loss = LossConfig { lr: 1e-3, batch_size: 32, ..LossConfig::default() };
    let out = train(&data, cfg, &loss, run.epochs, |_, _| {}).unwrap();
    let probs: Vec<_> = streams.iter().map(|s| infer(&out.model, s).unwrap()).collect();
    let views: Vec<_> = probs.iter().map(|p| p.view()).collect();
    let found = localize_scene(&views, &LocalizeConfig::default()).unwrap();
    evaluate(&predictions(&scn.video_id, &found), &scn.annotations(), 300)
}
