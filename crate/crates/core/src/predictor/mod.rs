//! Intention (DI) and multimodal trajectory (MT) models, the trajectory
//! filter, the scene context encoder, and the CTRA, FF-LSTM and MTP-LSTM
//! baselines.

use alloc::string::String;
use alloc::vec::Vec;

use crate::geometry::Trajectory;
use crate::nn::{join, NnError, Param, Parameters};
use crate::scenegen::{EpisodeRecord, Window};
use crate::NUM_MODES;

mod baselines;
mod context;
mod ctra;
mod features;
mod models;
mod train;

pub use baselines::{split_mtp, FfLstm, MtpLstm, MTP_MODE_WIDTH, MTP_OUTPUTS};
pub use context::{ContextCache, ContextEncoder, CONTEXT_DIM};
pub use ctra::{ctra_displacement, ctra_fit, ctra_forecast, ctra_predict, FIT_SPAN, SMALL_YAW_RATE};
pub use features::{
    encode_record, encode_records, encode_window, raw_row, Batch, FeatureSet, Normalizer, Sample, RAW_COLUMNS,
    TARGET_SCALE,
};
pub use models::{DiModel, EncPass, MtModel, SeqEncoder, Trainable, HIDDEN};
pub use train::{evaluate_loss, overfit, train, train_with, EpochLog, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PredictError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("{what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
}

pub type Result<T> = core::result::Result<T, PredictError>;

/// Three maneuver probabilities and one candidate trajectory per maneuver,
/// in the order straight, right, left.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub probs: [f64; NUM_MODES],
    pub trajectories: [Trajectory; NUM_MODES],
}

/// Index of the most probable mode, lowest index on ties.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Selects the trajectory of the most probable maneuver.
pub fn filter_trajectory(modes: &ModeSet) -> (usize, &Trajectory) {
    let i = argmax(&modes.probs);
    (i, &modes.trajectories[i])
}

/// Records per inference batch.
const INFER_BATCH: usize = 64;

/// Trained DI and MT networks with the normalization they were trained
/// under.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub norm: Normalizer,
    pub di: DiModel,
    pub mt: MtModel,
}

fn infer_batches<T, F>(windows: &[&Window], norm: &Normalizer, features: FeatureSet, mut f: F) -> Result<Vec<T>>
where
    F: FnMut(&Batch) -> Result<Vec<T>>,
{
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(INFER_BATCH) {
        let samples = chunk
            .iter()
            .map(|w| {
                let (seq, raster) = encode_window(w, norm, features)?;
                Ok(Sample { seq, raster, label: 0, target: Vec::new() })
            })
            .collect::<Result<Vec<_>>>()?;
        let idx: Vec<usize> = (0..samples.len()).collect();
        out.extend(f(&Batch::gather(&samples, &idx))?);
    }
    Ok(out)
}

/// Intention probabilities for each window.
pub fn predict_intentions(di: &DiModel, norm: &Normalizer, windows: &[&Window]) -> Result<Vec<[f64; NUM_MODES]>> {
    infer_batches(windows, norm, di.features, |b| {
        Ok(di.predict(b)?.chunks_exact(NUM_MODES).map(|p| [p[0], p[1], p[2]]).collect())
    })
}

pub fn predict_ff(model: &FfLstm, norm: &Normalizer, windows: &[&Window]) -> Result<Vec<Trajectory>> {
    infer_batches(windows, norm, model.features, |b| model.predict(b))
}

pub fn predict_mtp(model: &MtpLstm, norm: &Normalizer, windows: &[&Window]) -> Result<Vec<ModeSet>> {
    infer_batches(windows, norm, model.features, |b| model.predict(b))
}

impl ModelBundle {
    pub fn predict_intention(&self, w: &Window) -> Result<[f64; NUM_MODES]> {
        Ok(predict_intentions(&self.di, &self.norm, &[w])?[0])
    }

    pub fn predict_multimodal(&self, w: &Window) -> Result<ModeSet> {
        Ok(self.predict_windows(&[w])?.remove(0))
    }

    pub fn predict_windows(&self, windows: &[&Window]) -> Result<Vec<ModeSet>> {
        let probs = predict_intentions(&self.di, &self.norm, windows)?;
        let trajs = infer_batches(windows, &self.norm, self.mt.features, |b| self.mt.predict(b))?;
        Ok(probs.into_iter().zip(trajs).map(|(probs, trajectories)| ModeSet { probs, trajectories }).collect())
    }

    pub fn predict_records(&self, records: &[EpisodeRecord]) -> Result<Vec<ModeSet>> {
        let ws: Vec<&Window> = records.iter().map(|r| &r.window).collect();
        self.predict_windows(&ws)
    }
}

impl Parameters for ModelBundle {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        self.di.visit(&join(prefix, "di"), f);
        self.mt.visit(&join(prefix, "mt"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.di.visit_mut(&join(prefix, "di"), f);
        self.mt.visit_mut(&join(prefix, "mt"), f);
    }
}
