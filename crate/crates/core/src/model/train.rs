//! Minibatch training with AdamW on density-smoothed targets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::config::{LossConfig, ModelConfig};
use super::dataset::{build_batch, Dataset, VideoStream};
use super::network::{FeatureNorm, FusionModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FusionModel,
    /// Mean training loss of each epoch.
    pub loss_history: Vec<f64>,
    pub steps: u64,
}

/// Fits the feature normalization on the training streams.
pub fn fit_norm(data: &Dataset, cfg: &ModelConfig) -> FeatureNorm {
    FeatureNorm::fit(
        data.streams.iter().filter_map(|s| s.stream.pose.as_ref().map(|p| p.view())),
        data.streams.iter().map(|s| s.stream.embed.view()),
        cfg.pose_dim,
        cfg.n_f,
    )
}

/// Trains a fresh model for `epochs` passes over `data.samples`.
///
/// `on_epoch` receives the epoch index and its mean loss.
pub fn train(data: &Dataset, cfg: ModelConfig, loss_cfg: &LossConfig, epochs: usize, mut on_epoch: impl FnMut(usize, f64)) -> Result<TrainOutcome> {
    loss_cfg.validate()?;
    if data.samples.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let mut model = FusionModel::new(cfg)?;
    model.norm = fit_norm(data, &model.config);
    let cfg = model.config.clone();
    let normalized: Vec<VideoStream> = data.streams.iter().map(|s| s.stream.normalized(&model.norm)).collect();
    let streams: Vec<&VideoStream> = normalized.iter().collect();
    let targets: Vec<Vec<f64>> = data.samples.iter().map(|&r| data.target(r, &cfg, loss_cfg.beta)).collect();

    let mut order: Vec<usize> = (0..data.samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_5a3b1e5);
    let mut adam = AdamState::new(&model.params);
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut sample_loss = vec![0.0; order.len()];
        for chunk in order.chunks(loss_cfg.batch_size) {
            let refs: Vec<_> = chunk.iter().map(|&i| data.samples[i]).collect();
            let batch_targets: Vec<Vec<f64>> = chunk.iter().map(|&i| targets[i].clone()).collect();
            let input = build_batch(&streams, &refs, &cfg);
            let (losses, grad) = model.losses_and_grad(&input, &batch_targets, loss_cfg.beta);
            if let Some(loss) = losses.iter().copied().find(|l| !l.is_finite()) {
                return Err(Error::Diverged(format!(
                    "loss {loss} at epoch {epoch}, step {}; lr {}, batch of {}",
                    adam.step + 1,
                    loss_cfg.lr,
                    chunk.len()
                )));
            }
            for (&i, l) in chunk.iter().zip(losses) {
                sample_loss[i] = l;
            }
            adam.step(&mut model.params, &grad, loss_cfg.lr, loss_cfg.weight_decay);
        }
        let mean = sample_loss.iter().sum::<f64>() / order.len() as f64;
        on_epoch(epoch, mean);
        history.push(mean);
    }
    Ok(TrainOutcome { model, loss_history: history, steps: adam.step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dataset::LabeledStream;
    use ndarray::Array2;
    use rand::Rng;

    pub(crate) fn toy_dataset(cfg: &ModelConfig, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = 40;
        let labels: Vec<usize> = (0..frames).map(|f| if (10..25).contains(&f) { 3 } else { 0 }).collect();
        let segs = frames - cfg.segment_len + 1;
        let embed = Array2::from_shape_fn((segs, cfg.n_f), |(i, j)| labels[i + cfg.segment_len / 2] as f64 * (j as f64 - 1.0) + rng.gen_range(-0.1..0.1));
        let pose = Array2::from_shape_fn((frames, cfg.pose_dim), |(f, j)| labels[f] as f64 * 0.2 * j as f64 + rng.gen_range(-0.1..0.1));
        Dataset::new(vec![LabeledStream { stream: VideoStream { pose: Some(pose), embed, stride: 1 }, frame_labels: labels }], cfg).unwrap()
    }

    fn tiny() -> ModelConfig {
        ModelConfig { window_tokens: 2, token_gap: 2, segment_len: 4, seed: 11, ..ModelConfig::with_dims(6, 8, 2, 1) }
    }

    #[test]
    fn zero_lr_keeps_loss_flat() {
        let cfg = tiny();
        let data = toy_dataset(&cfg, 1);
        let loss = LossConfig { lr: 0.0, batch_size: 5, ..LossConfig::default() };
        let out = train(&data, cfg, &loss, 4, |_, _| {}).unwrap();
        assert!(out.loss_history.windows(2).all(|w| w[0] == w[1]), "{:?}", out.loss_history);
    }

    #[test]
    fn same_seed_same_result() {
        let cfg = tiny();
        let data = toy_dataset(&cfg, 2);
        let loss = LossConfig { batch_size: 4, ..LossConfig::default() };
        let a = train(&data, cfg.clone(), &loss, 3, |_, _| {}).unwrap();
        let b = train(&data, cfg, &loss, 3, |_, _| {}).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.model.to_checkpoint(a.steps).to_bytes(), b.model.to_checkpoint(b.steps).to_bytes());
    }

    #[test]
    fn loss_decreases() {
        let cfg = tiny();
        let data = toy_dataset(&cfg, 3);
        let loss = LossConfig { lr: 3e-3, batch_size: 8, ..LossConfig::default() };
        let out = train(&data, cfg, &loss, 30, |_, _| {}).unwrap();
        assert!(out.loss_history.last().unwrap() < &(out.loss_history[0] * 0.8), "{:?}", out.loss_history);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = tiny();
        let mut data = toy_dataset(&cfg, 4);
        data.streams[0].stream.embed[[0, 0]] = f64::NAN;
        let err = train(&data, cfg, &LossConfig::default(), 1, |_, _| {}).unwrap_err();
        assert!(matches!(err, Error::Diverged(_)));
    }
}
