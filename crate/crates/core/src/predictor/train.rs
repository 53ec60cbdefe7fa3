//! Mini-batch Adam training with early stopping on validation loss.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::features::{Batch, Sample};
use super::models::Trainable;
use super::{PredictError, Result};
use crate::nn::Adam;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct TrainConfig {
    pub batch: usize,
    pub epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch: 32, epochs: 50, patience: 5, lr: 1e-3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Mean loss over `samples` without touching gradients.
pub fn evaluate_loss<M: Trainable>(model: &mut M, samples: &[Sample], batch: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(PredictError::EmptySplit("evaluation"));
    }
    let idx: Vec<usize> = (0..samples.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch.max(1)) {
        let b = Batch::gather(samples, chunk);
        total += model.loss(&b, false)? * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Trains in place and leaves the parameters of the best validation epoch
/// in `model`. Shuffling draws from `seed` only, so runs are reproducible.
pub fn train<M: Trainable>(model: &mut M, train: &[Sample], val: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(model, train, val, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with<M: Trainable, F: FnMut(&EpochLog)>(
    model: &mut M,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(PredictError::EmptySplit("training"));
    }
    if val.is_empty() {
        return Err(PredictError::EmptySplit("validation"));
    }
    let mut adam = Adam::new(cfg.lr);
    let mut rng = crate::rng::stream(cfg.seed, 0x74_72_61_69_6e);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = model.clone();
    let mut best_val = evaluate_loss(model, val, cfg.batch)?;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch.max(1)) {
            let b = Batch::gather(train, chunk);
            model.zero_grad();
            total += model.loss(&b, true)? * chunk.len() as f64;
            adam.step(model)?;
        }
        let val_loss = evaluate_loss(model, val, cfg.batch)?;
        let log = EpochLog { epoch, train_loss: total / train.len() as f64, val_loss };
        on_epoch(&log);
        history.push(log);
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = model.clone();
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    *model = best;
    model.zero_grad();
    Ok(TrainReport { history, best_epoch, best_val_loss: best_val })
}

/// Plain Adam steps on one fixed batch; returns the final loss.
pub fn overfit<M: Trainable>(model: &mut M, batch: &Batch, steps: usize, lr: f64) -> Result<f64> {
    let mut adam = Adam::new(lr);
    for _ in 0..steps {
        model.zero_grad();
        model.loss(batch, true)?;
        adam.step(model)?;
    }
    model.loss(batch, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::features::TARGET_SCALE;
    use crate::predictor::features::{encode_records, FeatureSet, Normalizer};
    use crate::predictor::models::tests::random_batch;
    use crate::predictor::models::{DiModel, MtModel};
    use crate::scenegen::raster::RASTER_LEN;
    use crate::{OBS_LEN, PRED_LEN};

    fn samples_from(b: &Batch) -> Vec<Sample> {
        let i = b.input_dim;
        (0..b.size)
            .map(|r| Sample {
                seq: (0..OBS_LEN)
                    .flat_map(|t| b.seq[(t * b.size + r) * i..(t * b.size + r + 1) * i].to_vec())
                    .collect(),
                raster: b.raster[r * RASTER_LEN..(r + 1) * RASTER_LEN].iter().map(|&v| v as f32).collect(),
                label: b.labels[r],
                target: b.target[r * 2 * PRED_LEN..(r + 1) * 2 * PRED_LEN].to_vec(),
            })
            .collect()
    }

    #[test]
    fn gather_inverts_sample_split() {
        let b = random_batch(FeatureSet::SEC, 4, 1);
        let s = samples_from(&b);
        assert_eq!(Batch::gather(&s, &[0, 1, 2, 3]), b);
    }

    #[test]
    fn di_overfits_one_batch() {
        let mut rng = crate::rng::stream(1, 0);
        let batch = random_batch(FeatureSet::SEC, 32, 2);
        let mut m = DiModel::new(FeatureSet::SEC, 128, &mut rng);
        let loss = overfit(&mut m, &batch, 300, 1e-3).unwrap();
        assert!(loss < 0.01, "{loss}");
    }

    /// 32 records spread over a straight, a right and a left episode.
    fn real_batch(features: FeatureSet) -> (Batch, Normalizer) {
        use crate::scenegen::{generate_episode, window_dataset, Maneuver, ScenarioConfig};
        let eps: Vec<_> = Maneuver::ALL
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let cfg = ScenarioConfig { maneuver: m, slow_down: true, seed: i as u64, ..ScenarioConfig::default() };
                generate_episode(&cfg).unwrap()
            })
            .collect();
        let recs = window_dataset(&eps, 0.1);
        let step = recs.len() / 32;
        let picked: Vec<_> = recs.into_iter().step_by(step).take(32).collect();
        let norm = Normalizer::fit(&picked).unwrap();
        let samples = encode_records(&picked, &norm, features).unwrap();
        let idx: Vec<usize> = (0..32).collect();
        (Batch::gather(&samples, &idx), norm)
    }

    #[test]
    fn mt_overfits_one_batch() {
        let mut rng = crate::rng::stream(2, 0);
        let (batch, _) = real_batch(FeatureSet::SEC);
        let mut m = MtModel::new(FeatureSet::SEC, 128, &mut rng);
        // regression to a few centimetres needs far more steps than the
        // classifier
        overfit(&mut m, &batch, 2000, 1e-3).unwrap();
        let preds = m.predict(&batch).unwrap();
        let mut ade = 0.0;
        for (r, modes) in preds.iter().enumerate() {
            let t = &modes[batch.labels[r]];
            for (k, w) in t.waypoints.iter().enumerate() {
                let gx = batch.target[r * 2 * PRED_LEN + 2 * k] * TARGET_SCALE;
                let gy = batch.target[r * 2 * PRED_LEN + 2 * k + 1] * TARGET_SCALE;
                ade += libm::hypot(w.x - gx, w.y - gy);
            }
        }
        ade /= (32 * PRED_LEN) as f64;
        assert!(ade < 0.05, "{ade}");
    }

    #[test]
    fn training_is_reproducible_and_keeps_best() {
        let train_b = random_batch(FeatureSet::S, 40, 4);
        let val_b = random_batch(FeatureSet::S, 12, 5);
        let (tr, va) = (samples_from(&train_b), samples_from(&val_b));
        let cfg = TrainConfig { epochs: 4, batch: 8, seed: 9, ..TrainConfig::default() };
        let run = || {
            let mut m = DiModel::new(FeatureSet::S, 8, &mut crate::rng::stream(3, 0));
            let rep = train(&mut m, &tr, &va, &cfg).unwrap();
            (m, rep)
        };
        let (m1, r1) = run();
        let (m2, r2) = run();
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
        let mut m1 = m1;
        let v = evaluate_loss(&mut m1, &va, 8).unwrap();
        assert_eq!(v, r1.best_val_loss);
        assert!(matches!(train(&mut m1, &[], &va, &cfg), Err(PredictError::EmptySplit(_))));
    }
}
