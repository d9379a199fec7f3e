use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{sub_seed, Scenario};
use crate::data_io::{segment_majority_label, EmbeddingSegment, NUM_CLASSES};

/// Centroid index used for frames outside every activity; it is labeled as
/// class 0.
pub const BACKGROUND: usize = NUM_CLASSES;

/// Frame labels with unannotated frames set to [`BACKGROUND`].
fn extended_labels(scn: &Scenario) -> Vec<usize> {
    let mut labels = vec![BACKGROUND; scn.num_frames];
    for a in &scn.activities {
        for l in &mut labels[a.start_frame as usize..a.end_frame as usize] {
            *l = a.class_id;
        }
    }
    labels
}

/// Majority centroid index of every stride-1 segment.
pub fn segment_labels(scn: &Scenario) -> Vec<usize> {
    let labels = extended_labels(scn);
    if scn.num_frames < scn.segment_len {
        return Vec::new();
    }
    labels.windows(scn.segment_len).map(segment_majority_label).collect()
}

/// `NUM_CLASSES + 1` centroids, pairwise at least `10 * embed_noise` apart.
pub fn centroids(scn: &Scenario) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(scn.seed, 1, 0));
    let sigma = scn.embed_noise;
    let min_dist = 10.0 * sigma;
    let mut half_width = 10.0 * if sigma > 0.0 { sigma } else { 0.1 };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(NUM_CLASSES + 1);
    let mut failures = 0;
    while out.len() < NUM_CLASSES + 1 {
        let c: Vec<f64> = (0..scn.embed_dim).map(|_| rng.gen_range(-half_width..=half_width)).collect();
        let far = out.iter().all(|o| o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= min_dist);
        if far {
            out.push(c);
        } else {
            failures += 1;
            if failures % 1000 == 0 {
                half_width *= 2.0;
            }
        }
    }
    out
}

/// One embedding per stride-1 segment: the centroid of the segment's
/// majority label plus Gaussian noise.
pub fn gen_embeddings(scn: &Scenario, camera: u32) -> Vec<EmbeddingSegment> {
    let cents = centroids(scn);
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(scn.seed, 2, camera as u64));
    let noise = Normal::new(0.0, scn.embed_noise * scn.embed_noise_scale).expect("finite sigma");
    segment_labels(scn)
        .into_iter()
        .enumerate()
        .map(|(i, label)| EmbeddingSegment {
            start_frame: i as u64,
            values: cents[label].iter().map(|&c| (c + noise.sample(&mut rng)) as f32).collect(),
        })
        .collect()
}
