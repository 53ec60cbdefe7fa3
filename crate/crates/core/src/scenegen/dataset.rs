//! Sliding-window records and the episode-level train/val/test split.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{Episode, Result, ScenarioError};
use crate::aoi::AoiGaussian;
use crate::{OBS_DT, OBS_LEN, PRED_LEN};

/// Observation frames per prediction step (0.3 s / 0.1 s).
pub const FUTURE_STRIDE: usize = 3;

/// Model input for one reference time: 20 rows of ego-frame state and AOI
/// `[px, py, vx, vy, θ, μx, μy, σx, σy]`, the steering angle at the same
/// frames, and the scene raster at the reference time.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Window {
    pub obs: Vec<[f64; 9]>,
    pub steer: Vec<f64>,
    /// Rendered from the episode, so not serialized.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub raster: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub t0: f64,
    pub window: Window,
    pub label: u8,
    /// Ego-frame positions at `t0 + 0.3·j`, `j = 1..=10`.
    pub future: Vec<[f64; 2]>,
}

impl EpisodeRecord {
    pub fn future_points(&self) -> Vec<crate::geometry::Vec2> {
        self.future.iter().map(|p| crate::geometry::Vec2::new(p[0], p[1])).collect()
    }
}

/// Window ending at frame `end` (the reference frame), or `None` if fewer
/// than 20 frames precede it. Everything is expressed in the frame of the
/// observed pose at `end`, the only pose the ego knows.
pub fn window_at(ep: &Episode, aoi: &[AoiGaussian], end: usize) -> Option<Window> {
    if end + 1 < OBS_LEN || end >= ep.frames() {
        return None;
    }
    let anchor = ep.observed[end].pose;
    let start = end + 1 - OBS_LEN;
    let obs = (start..=end)
        .map(|k| {
            let s = ep.observed[k].relative_to(&anchor);
            let a = &aoi[k];
            [s.pose.x, s.pose.y, s.vx, s.vy, s.pose.heading(), a.mu_x, a.mu_y, a.sigma_x, a.sigma_y]
        })
        .collect();
    Some(Window { obs, steer: ep.steer[start..=end].to_vec(), raster: ep.raster(end) })
}

/// Full record at reference frame `end`, if both the observation window and
/// the 3 s future fit in the episode. The future is the true path seen from
/// the observed pose.
pub fn record_at(ep: &Episode, aoi: &[AoiGaussian], end: usize) -> Option<EpisodeRecord> {
    if end + PRED_LEN * FUTURE_STRIDE >= ep.frames() {
        return None;
    }
    let window = window_at(ep, aoi, end)?;
    let anchor = ep.observed[end].pose;
    let future = (1..=PRED_LEN)
        .map(|j| {
            let p = anchor.to_local(ep.states[end + j * FUTURE_STRIDE].pose.position());
            [p.x, p.y]
        })
        .collect();
    Some(EpisodeRecord { episode_id: ep.id.clone(), t0: ep.time(end), window, label: ep.labels[end], future })
}

/// One record per 5 s window, windows starting every `stride` seconds.
pub fn window_dataset(episodes: &[Episode], stride: f64) -> Vec<EpisodeRecord> {
    let step = (libm::round(stride / OBS_DT) as usize).max(1);
    let span = OBS_LEN + PRED_LEN * FUTURE_STRIDE;
    let mut out = Vec::new();
    for ep in episodes {
        if ep.frames() < span {
            continue;
        }
        let aoi = ep.aoi();
        let mut s = 0;
        while s + span <= ep.frames() {
            out.extend(record_at(ep, &aoi, s + OBS_LEN - 1));
            s += step;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<EpisodeRecord>,
    pub val: Vec<EpisodeRecord>,
    pub test: Vec<EpisodeRecord>,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// 3:1:1 split by episode. Episodes are grouped by their turn class (the
/// largest label among their records) and shuffled within each group; the
/// resulting sequence is dealt so that every prefix stays as close to 3:1:1
/// as possible, with `round(n/5)` episodes each for validation and test.
pub fn split_dataset(records: Vec<EpisodeRecord>, seed: u64) -> Result<Split> {
    let mut order: Vec<String> = Vec::new();
    let mut class: BTreeMap<String, u8> = BTreeMap::new();
    for r in &records {
        let c = class.entry(r.episode_id.clone()).or_insert_with(|| {
            order.push(r.episode_id.clone());
            0
        });
        *c = (*c).max(r.label);
    }
    let n = order.len();
    if n < 5 {
        return Err(ScenarioError::TooFewEpisodes(n));
    }
    let mut rng = crate::rng::stream(seed, 0x53_50_4C_49_54);
    let mut dealt: Vec<String> = Vec::with_capacity(n);
    for c in 0..crate::NUM_MODES as u8 {
        let mut group: Vec<String> = order.iter().filter(|id| class[*id] == c).cloned().collect();
        group.shuffle(&mut rng);
        dealt.extend(group);
    }
    let m = libm::round(n as f64 / 5.0) as usize;
    let target = [n - 2 * m, m, m];
    let mut which: BTreeMap<String, usize> = BTreeMap::new();
    let mut ids: [Vec<String>; 3] = Default::default();
    for (p, id) in dealt.into_iter().enumerate() {
        let deficit = |s: usize| target[s] as f64 * (p + 1) as f64 / n as f64 - ids[s].len() as f64;
        let s = (0..3).fold(0, |best, s| if deficit(s) > deficit(best) + 1e-12 { s } else { best });
        which.insert(id.clone(), s);
        ids[s].push(id);
    }
    let mut parts: [Vec<EpisodeRecord>; 3] = Default::default();
    for r in records {
        let s = which[&r.episode_id];
        parts[s].push(r);
    }
    let [train, val, test] = parts;
    let [train_ids, val_ids, test_ids] = ids;
    Ok(Split { train, val, test, train_ids, val_ids, test_ids })
}
