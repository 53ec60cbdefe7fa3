//! Gaze area-of-interest (AOI) based intention and multimodal trajectory
//! prediction with particle-based collision risk assessment.
//!
//! The crate is `no_std` + `alloc`. Everything here is pure computation:
//! the synthetic scenario generator, a small gradient engine with the layers
//! the predictors need, the predictors themselves, error statistics, risk
//! evaluation and metrics. File formats, configuration and the command line
//! live in the companion `aoitraj` crate.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style checks are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod aoi;
pub mod evaluation;
pub mod geometry;
pub mod nn;
pub mod predictor;
pub mod risk;
pub mod riskstats;
pub mod rng;
pub mod scenegen;

/// Observation step (s) of the 10 Hz vehicle, video and steering streams.
pub const OBS_DT: f64 = 0.1;
/// Prediction step (s).
pub const PRED_DT: f64 = 0.3;
/// Observation window length in samples (2 s at 0.1 s).
pub const OBS_LEN: usize = 20;
/// Prediction horizon in steps (3 s at 0.3 s).
pub const PRED_LEN: usize = 10;
/// Number of maneuver modes (straight, right, left).
pub const NUM_MODES: usize = 3;
/// Gaze samples per 10 Hz frame (90 Hz tracker).
pub const GAZE_PER_FRAME: usize = 9;
/// Image size of the gaze coordinate system.
pub const IMAGE_WIDTH: f64 = 1920.0;
pub const IMAGE_HEIGHT: f64 = 1080.0;

/// Time of the `k`-th sample on a uniform grid.
#[inline]
pub fn grid_time(k: usize, dt: f64) -> f64 {
    k as f64 * dt
}
