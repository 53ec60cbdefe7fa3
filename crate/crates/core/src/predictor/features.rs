//! Feature selection, normalization and batch assembly.

use alloc::vec;
use alloc::vec::Vec;

use super::{PredictError, Result};
use crate::scenegen::raster::RASTER_LEN;
use crate::scenegen::{EpisodeRecord, Window};
use crate::{IMAGE_HEIGHT, IMAGE_WIDTH, NUM_MODES, OBS_LEN, PRED_LEN};

/// Raw per-row columns: the nine window columns plus the steering angle.
pub const RAW_COLUMNS: usize = 10;

/// Futures are regressed in units of this many metres.
pub const TARGET_SCALE: f64 = 10.0;

const STATE_COLS: [usize; 5] = [0, 1, 2, 3, 4];
const AOI_COLS: [usize; 4] = [5, 6, 7, 8];
const STEER_COL: usize = 9;

/// Which inputs a model sees. Vehicle states are always used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureSet {
    pub aoi: bool,
    pub context: bool,
    pub steer: bool,
}

impl FeatureSet {
    pub const S: FeatureSet = FeatureSet { aoi: false, context: false, steer: false };
    pub const SE: FeatureSet = FeatureSet { aoi: true, context: false, steer: false };
    pub const SEC: FeatureSet = FeatureSet { aoi: true, context: true, steer: false };
    pub const SECO: FeatureSet = FeatureSet { aoi: true, context: true, steer: true };
    /// States and context, no gaze.
    pub const SC: FeatureSet = FeatureSet { aoi: false, context: true, steer: false };

    /// Ablation rows in table order.
    pub const ABLATION: [FeatureSet; 4] = [Self::S, Self::SE, Self::SECO, Self::SEC];

    pub fn name(&self) -> &'static str {
        match (self.aoi, self.context, self.steer) {
            (false, false, false) => "S-LSTM",
            (true, false, false) => "S+E-LSTM",
            (true, true, false) => "S+E+C-LSTM",
            (true, true, true) => "S+E+C+O-LSTM",
            (false, true, false) => "S+C-LSTM",
            (false, false, true) => "S+O-LSTM",
            (true, false, true) => "S+E+O-LSTM",
            (false, true, true) => "S+C+O-LSTM",
        }
    }

    pub fn from_name(name: &str) -> Option<FeatureSet> {
        let all = [false, true];
        for aoi in all {
            for context in all {
                for steer in all {
                    let f = FeatureSet { aoi, context, steer };
                    if f.name() == name {
                        return Some(f);
                    }
                }
            }
        }
        None
    }

    /// Raw column indices fed to the sequence encoder.
    pub fn columns(&self) -> Vec<usize> {
        let mut c = STATE_COLS.to_vec();
        if self.aoi {
            c.extend(AOI_COLS);
        }
        if self.steer {
            c.push(STEER_COL);
        }
        c
    }

    pub fn input_dim(&self) -> usize {
        self.columns().len()
    }

    pub fn bits(&self) -> u8 {
        u8::from(self.aoi) | (u8::from(self.context) << 1) | (u8::from(self.steer) << 2)
    }

    pub fn from_bits(b: u8) -> Option<FeatureSet> {
        (b < 8).then_some(FeatureSet { aoi: b & 1 != 0, context: b & 2 != 0, steer: b & 4 != 0 })
    }
}

/// Row `k` of a window as raw columns, AOI pixels scaled by the image size.
pub fn raw_row(w: &Window, k: usize) -> [f64; RAW_COLUMNS] {
    let o = &w.obs[k];
    [
        o[0],
        o[1],
        o[2],
        o[3],
        o[4],
        o[5] / IMAGE_WIDTH,
        o[6] / IMAGE_HEIGHT,
        o[7] / IMAGE_WIDTH,
        o[8] / IMAGE_HEIGHT,
        w.steer[k],
    ]
}

/// Per-column z-score statistics from the training split.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Normalizer {
    pub mean: [f64; RAW_COLUMNS],
    pub std: [f64; RAW_COLUMNS],
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer { mean: [0.0; RAW_COLUMNS], std: [1.0; RAW_COLUMNS] }
    }

    /// Mean and population standard deviation over every row of every
    /// window; columns with no spread keep unit scale.
    pub fn fit(records: &[EpisodeRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(PredictError::EmptySplit("training"));
        }
        let mut sum = [0.0; RAW_COLUMNS];
        let mut n = 0usize;
        for r in records {
            check_window(&r.window)?;
            for k in 0..OBS_LEN {
                for (s, v) in sum.iter_mut().zip(raw_row(&r.window, k)) {
                    *s += v;
                }
                n += 1;
            }
        }
        let mean = sum.map(|s| s / n as f64);
        let mut var = [0.0; RAW_COLUMNS];
        for r in records {
            for k in 0..OBS_LEN {
                for (j, v) in raw_row(&r.window, k).iter().enumerate() {
                    var[j] += (v - mean[j]) * (v - mean[j]);
                }
            }
        }
        let std = var.map(|v| {
            let s = libm::sqrt(v / n as f64);
            if s > 1e-9 {
                s
            } else {
                1.0
            }
        });
        Ok(Normalizer { mean, std })
    }

    pub fn apply(&self, row: &[f64; RAW_COLUMNS]) -> [f64; RAW_COLUMNS] {
        let mut out = [0.0; RAW_COLUMNS];
        for j in 0..RAW_COLUMNS {
            out[j] = (row[j] - self.mean[j]) / self.std[j];
        }
        out
    }
}

fn check_window(w: &Window) -> Result<()> {
    if w.obs.len() != OBS_LEN || w.steer.len() != OBS_LEN {
        return Err(PredictError::Shape {
            what: "observation window",
            expected: OBS_LEN,
            got: w.obs.len().min(w.steer.len()),
        });
    }
    if w.raster.len() != RASTER_LEN {
        return Err(PredictError::Shape { what: "scene raster", expected: RASTER_LEN, got: w.raster.len() });
    }
    Ok(())
}

/// A record reduced to the model inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `T × I`, normalized, selected columns.
    pub seq: Vec<f64>,
    pub raster: Vec<f32>,
    pub label: usize,
    /// `2·T_p` future coordinates divided by [`TARGET_SCALE`].
    pub target: Vec<f64>,
}

pub fn encode_window(w: &Window, norm: &Normalizer, features: FeatureSet) -> Result<(Vec<f64>, Vec<f32>)> {
    check_window(w)?;
    let cols = features.columns();
    let mut seq = Vec::with_capacity(OBS_LEN * cols.len());
    for k in 0..OBS_LEN {
        let z = norm.apply(&raw_row(w, k));
        seq.extend(cols.iter().map(|&c| z[c]));
    }
    Ok((seq, w.raster.clone()))
}

pub fn encode_record(r: &EpisodeRecord, norm: &Normalizer, features: FeatureSet) -> Result<Sample> {
    let (seq, raster) = encode_window(&r.window, norm, features)?;
    if r.future.len() != PRED_LEN {
        return Err(PredictError::Shape { what: "future", expected: PRED_LEN, got: r.future.len() });
    }
    let label = r.label as usize;
    if label >= NUM_MODES {
        return Err(PredictError::Shape { what: "label", expected: NUM_MODES, got: label });
    }
    let target = r.future.iter().flat_map(|p| [p[0] / TARGET_SCALE, p[1] / TARGET_SCALE]).collect();
    Ok(Sample { seq, raster, label, target })
}

pub fn encode_records(records: &[EpisodeRecord], norm: &Normalizer, features: FeatureSet) -> Result<Vec<Sample>> {
    records.iter().map(|r| encode_record(r, norm, features)).collect()
}

/// A mini-batch in the layouts the layers expect.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub input_dim: usize,
    /// Time-major `T × B × I`.
    pub seq: Vec<f64>,
    /// `B × 3 × 32 × 32`.
    pub raster: Vec<f64>,
    pub labels: Vec<usize>,
    /// `B × 2T_p`.
    pub target: Vec<f64>,
}

impl Batch {
    pub fn gather(samples: &[Sample], idx: &[usize]) -> Batch {
        let b = idx.len();
        let input_dim = samples.first().map_or(0, |s| s.seq.len() / OBS_LEN);
        let mut seq = vec![0.0; OBS_LEN * b * input_dim];
        let mut raster = Vec::with_capacity(b * RASTER_LEN);
        let mut labels = Vec::with_capacity(b);
        let mut target = Vec::with_capacity(b * 2 * PRED_LEN);
        for (j, &i) in idx.iter().enumerate() {
            let s = &samples[i];
            for t in 0..OBS_LEN {
                let dst = (t * b + j) * input_dim;
                seq[dst..dst + input_dim].copy_from_slice(&s.seq[t * input_dim..(t + 1) * input_dim]);
            }
            raster.extend(s.raster.iter().map(|&v| f64::from(v)));
            labels.push(s.label);
            target.extend_from_slice(&s.target);
        }
        Batch { size: b, input_dim, seq, raster, labels, target }
    }

    /// A batch of one window without targets.
    pub fn single(seq: Vec<f64>, raster: &[f32]) -> Batch {
        let input_dim = seq.len() / OBS_LEN;
        Batch {
            size: 1,
            input_dim,
            seq,
            raster: raster.iter().map(|&v| f64::from(v)).collect(),
            labels: vec![0],
            target: vec![0.0; 2 * PRED_LEN],
        }
    }
}
