//! Deterministic synthetic intersection episodes: ego kinematics, steering,
//! 90 Hz gaze, pedestrians and labels, plus the sliding-window dataset built
//! from them.
//!
//! The gaze model shifts the AOI centre horizontally by `gaze_shift` pixels
//! towards the turn side `tau` seconds before the steering angle first
//! crosses the steer-onset threshold, and back when the turn completes.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::aoi::{aoi_per_frame, AoiGaussian, GazeSample};
use crate::geometry::{Vec2, VehicleState};
use crate::{GAZE_PER_FRAME, IMAGE_HEIGHT, IMAGE_WIDTH, OBS_DT};

mod corpus;
mod dataset;
pub mod kinematics;
pub mod raster;

pub use corpus::{
    episode_config, generate_corpus, intersection_x, risk_suite, sidewalk_pedestrian, Conflict, CorpusSpec,
    SuiteEpisode, SuiteKind, SuiteSpec, TauDist,
};
pub use dataset::{record_at, split_dataset, window_at, window_dataset, EpisodeRecord, Split, Window, FUTURE_STRIDE};
use kinematics::{simulate, MotionProfile};
use raster::{rasterize, RoadLayout};

/// Shortest and longest accepted gaze lead, seconds.
pub const TAU_MIN: f64 = 0.3;
pub const TAU_MAX: f64 = 2.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Maneuver {
    Straight = 0,
    Right = 1,
    Left = 2,
}

impl Maneuver {
    pub const ALL: [Maneuver; 3] = [Maneuver::Straight, Maneuver::Right, Maneuver::Left];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(l: u8) -> Option<Maneuver> {
        Maneuver::ALL.get(l as usize).copied()
    }

    /// Yaw direction: +1 left, −1 right.
    pub fn yaw_sign(self) -> f64 {
        match self {
            Maneuver::Straight => 0.0,
            Maneuver::Right => -1.0,
            Maneuver::Left => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Maneuver::Straight => "straight",
            Maneuver::Right => "right",
            Maneuver::Left => "left",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("gaze lead {0} s outside [0.3, 2.4]")]
    TauOutOfRange(f64),
    #[error("invalid scenario: {0}")]
    Invalid(&'static str),
    #[error("need at least 5 episodes to split, got {0}")]
    TooFewEpisodes(usize),
}

pub type Result<T> = core::result::Result<T, ScenarioError>;

/// A pedestrian walking at constant velocity from `start` at t = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PedestrianScript {
    pub start: Vec2,
    pub velocity: Vec2,
    pub on_path: bool,
}

impl PedestrianScript {
    pub fn position(&self, t: f64) -> Vec2 {
        self.start + self.velocity * t
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct ScenarioConfig {
    pub maneuver: Maneuver,
    pub approach_speed: f64,
    pub turn_speed: f64,
    /// Straight episodes only: brake through the intersection like a turn.
    pub slow_down: bool,
    pub turn_start: f64,
    pub duration: f64,
    /// Gaze lead over the steering threshold crossing, seconds.
    pub tau: f64,
    /// AOI shift towards the turn side, pixels.
    pub gaze_shift: f64,
    /// Per-sample gaze noise, pixels.
    pub gaze_noise: f64,
    pub radius: f64,
    pub ramp: f64,
    pub wheelbase: f64,
    pub road_half_width: f64,
    pub steer_threshold: f64,
    /// Standard deviations of the measurement noise on the observed ego
    /// position (m), heading (rad) and speed (m/s).
    pub position_noise: f64,
    pub heading_noise: f64,
    pub speed_noise: f64,
    pub pedestrians: Vec<PedestrianScript>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            maneuver: Maneuver::Straight,
            approach_speed: 10.0,
            turn_speed: 5.0,
            slow_down: false,
            turn_start: 6.0,
            duration: 14.0,
            tau: 1.35,
            gaze_shift: 400.0,
            gaze_noise: 30.0,
            radius: 8.0,
            ramp: 1.5,
            wheelbase: 2.7,
            road_half_width: 4.0,
            steer_threshold: 5.0_f64.to_radians(),
            position_noise: 0.05,
            heading_noise: 0.02,
            speed_noise: 0.1,
            pedestrians: Vec::new(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(TAU_MIN..=TAU_MAX).contains(&self.tau) {
            return Err(ScenarioError::TauOutOfRange(self.tau));
        }
        if !(self.approach_speed > 0.0 && self.turn_speed > 0.0) {
            return Err(ScenarioError::Invalid("speeds must be positive"));
        }
        if !(self.radius > 0.0 && self.ramp > 0.0 && self.wheelbase > 0.0 && self.road_half_width > 0.0) {
            return Err(ScenarioError::Invalid("geometry parameters must be positive"));
        }
        if !(self.duration >= 5.0 && self.turn_start >= 0.0) {
            return Err(ScenarioError::Invalid("episode shorter than one 5 s window"));
        }
        if !(self.gaze_noise >= 0.0) {
            return Err(ScenarioError::Invalid("gaze noise must be non-negative"));
        }
        if !(self.position_noise >= 0.0 && self.heading_noise >= 0.0 && self.speed_noise >= 0.0) {
            return Err(ScenarioError::Invalid("measurement noise must be non-negative"));
        }
        Ok(())
    }

    /// The 90° profile this configuration would drive when turning.
    fn turn_profile(&self, sign: f64) -> MotionProfile {
        MotionProfile::turn(
            self.turn_start,
            self.approach_speed,
            self.turn_speed,
            self.radius,
            self.ramp,
            self.wheelbase,
            sign,
        )
    }

    pub fn profile(&self) -> MotionProfile {
        match self.maneuver {
            Maneuver::Straight => {
                let t = self.turn_profile(-1.0);
                MotionProfile { kappa_peak: 0.0, slow_down: self.slow_down, ..t }
            }
            m => self.turn_profile(m.yaw_sign()),
        }
    }

    pub fn frames(&self) -> usize {
        libm::round(self.duration / OBS_DT) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeMeta {
    pub turn_start: f64,
    /// End of the scripted turn (of the slowdown for straight episodes).
    pub turn_end: f64,
    /// When the scripted steering first exceeds the onset threshold.
    pub steer_crossing: Option<f64>,
    pub gaze_shift: Option<f64>,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PedestrianTrack {
    pub on_path: bool,
    pub positions: Vec<Vec2>,
}

/// One generated episode; every stream is sampled on the 10 Hz frame grid
/// `t_k = k·0.1` except `gaze`, which carries nine samples in each trailing
/// interval `(t_{k−1}, t_k]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Episode {
    pub id: String,
    pub maneuver: Maneuver,
    pub states: Vec<VehicleState>,
    /// `states` as the ego's sensors report them; model inputs read these.
    pub observed: Vec<VehicleState>,
    pub steer: Vec<f64>,
    pub gaze: Vec<GazeSample>,
    pub pedestrians: Vec<PedestrianTrack>,
    pub labels: Vec<u8>,
    pub layout: RoadLayout,
    pub meta: EpisodeMeta,
}

impl Episode {
    pub fn frames(&self) -> usize {
        self.states.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        crate::grid_time(k, OBS_DT)
    }

    /// Per-frame AOI fitted from the gaze stream.
    pub fn aoi(&self) -> Vec<AoiGaussian> {
        aoi_per_frame(&self.gaze, self.frames(), OBS_DT, AoiGaussian::centered(IMAGE_WIDTH, IMAGE_HEIGHT))
    }

    pub fn pedestrian_positions(&self, k: usize) -> Vec<Vec2> {
        self.pedestrians.iter().map(|p| p.positions[k]).collect()
    }

    /// Scene raster at frame `k`, rendered from the layout on demand.
    pub fn raster(&self, k: usize) -> Vec<f32> {
        rasterize(&self.layout, &self.states[k].pose, &self.pedestrian_positions(k))
    }
}

/// Gaze lead-side sign in image coordinates: right turns look right (+u).
fn gaze_side(m: Maneuver) -> f64 {
    -m.yaw_sign()
}

/// Independent Gaussian noise on position, heading and speed; the velocity
/// stays aligned with the noisy heading.
fn observe(states: &[VehicleState], cfg: &ScenarioConfig) -> Vec<VehicleState> {
    let mut rng = crate::rng::stream(cfg.seed, 2);
    states
        .iter()
        .map(|s| {
            let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
            let (dx, dy, dh, dv) = (z(), z(), z(), z());
            let h = s.pose.heading() + cfg.heading_noise * dh;
            let v = s.velocity().norm() + cfg.speed_noise * dv;
            VehicleState::new(
                s.pose.x + cfg.position_noise * dx,
                s.pose.y + cfg.position_noise * dy,
                h,
                v * libm::cos(h),
                v * libm::sin(h),
            )
        })
        .collect()
}

pub fn generate_episode(cfg: &ScenarioConfig) -> Result<Episode> {
    cfg.validate()?;
    let frames = cfg.frames();
    let profile = cfg.profile();
    let states = simulate(&profile, frames);
    let steer: Vec<f64> = (0..frames).map(|k| profile.steer(crate::grid_time(k, OBS_DT))).collect();

    let steer_crossing = profile.steer_crossing(cfg.steer_threshold);
    let gaze_shift = steer_crossing.map(|t| t - cfg.tau);
    let turn_end = profile.turn_end();
    let shifted = |t: f64| gaze_shift.is_some_and(|g| t >= g && t < turn_end);

    let x_int = corpus::intersection_x(cfg);
    let layout = RoadLayout::new(x_int, cfg.road_half_width);

    let mut rng = crate::rng::stream(cfg.seed, 1);
    let mut gaze = Vec::with_capacity(frames * GAZE_PER_FRAME);
    for k in 0..frames {
        for m in 0..GAZE_PER_FRAME {
            let t = crate::grid_time(k, OBS_DT) - (GAZE_PER_FRAME - 1 - m) as f64 * OBS_DT / GAZE_PER_FRAME as f64;
            let cx = IMAGE_WIDTH * 0.5 + if shifted(t) { gaze_side(cfg.maneuver) * cfg.gaze_shift } else { 0.0 };
            let zu: f64 = StandardNormal.sample(&mut rng);
            let zv: f64 = StandardNormal.sample(&mut rng);
            gaze.push(GazeSample {
                u: (cx + cfg.gaze_noise * zu).clamp(0.0, IMAGE_WIDTH),
                v: (IMAGE_HEIGHT * 0.5 + cfg.gaze_noise * zv).clamp(0.0, IMAGE_HEIGHT),
                t,
            });
        }
    }

    let labels =
        (0..frames).map(|k| if shifted(crate::grid_time(k, OBS_DT)) { cfg.maneuver.label() } else { 0 }).collect();
    let pedestrians = cfg
        .pedestrians
        .iter()
        .map(|p| PedestrianTrack {
            on_path: p.on_path,
            positions: (0..frames).map(|k| p.position(crate::grid_time(k, OBS_DT))).collect(),
        })
        .collect();

    let observed = observe(&states, cfg);

    Ok(Episode {
        id: format!("ep{:016x}", cfg.seed),
        maneuver: cfg.maneuver,
        states,
        observed,
        steer,
        gaze,
        pedestrians,
        labels,
        layout,
        meta: EpisodeMeta { turn_start: cfg.turn_start, turn_end, steer_crossing, gaze_shift, tau: cfg.tau },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aoi::{detect_aoi_onset, detect_steer_onset, AoiOnsetParams, SteerOnsetParams};

    fn cfg(m: Maneuver, tau: f64, seed: u64) -> ScenarioConfig {
        ScenarioConfig { maneuver: m, tau, seed, ..ScenarioConfig::default() }
    }

    #[test]
    fn straight_episode_is_quiet() {
        let e = generate_episode(&cfg(Maneuver::Straight, 1.0, 3)).unwrap();
        assert!(e.steer.iter().all(|&s| s == 0.0));
        assert!(e.labels.iter().all(|&l| l == 0));
        let mean = e.gaze.iter().map(|g| g.u).sum::<f64>() / e.gaze.len() as f64;
        assert!((mean - 960.0).abs() < 5.0);
        assert_eq!(e.meta.gaze_shift, None);
    }

    #[test]
    fn same_seed_same_episode() {
        let a = generate_episode(&cfg(Maneuver::Left, 1.2, 9)).unwrap();
        let b = generate_episode(&cfg(Maneuver::Left, 1.2, 9)).unwrap();
        assert_eq!(a, b);
        let c = generate_episode(&cfg(Maneuver::Left, 1.2, 10)).unwrap();
        assert_ne!(a.gaze, c.gaze);
    }

    #[test]
    fn rejects_tau_outside_support() {
        assert_eq!(generate_episode(&cfg(Maneuver::Right, 2.5, 1)).unwrap_err(), ScenarioError::TauOutOfRange(2.5));
        assert!(generate_episode(&cfg(Maneuver::Right, 0.2, 1)).is_err());
    }

    #[test]
    fn aoi_onset_leads_steer_onset_by_tau() {
        for seed in 0..20 {
            let e = generate_episode(&cfg(Maneuver::Right, 1.0, seed)).unwrap();
            let mu: Vec<f64> = e.aoi().iter().map(|a| a.mu_x).collect();
            let a = detect_aoi_onset(&mu, &AoiOnsetParams::default()).unwrap().unwrap();
            let s = detect_steer_onset(&e.steer, &SteerOnsetParams::default()).unwrap();
            assert!((s - a - 1.0).abs() <= 0.2 + 1e-9, "seed {seed}: {a} {s}");
        }
    }

    #[test]
    fn steer_onset_within_a_frame_of_script() {
        let e = generate_episode(&cfg(Maneuver::Left, 1.5, 2)).unwrap();
        let s = detect_steer_onset(&e.steer, &SteerOnsetParams::default()).unwrap();
        let scripted = e.meta.steer_crossing.unwrap();
        assert!(s >= scripted - 1e-9 && s - scripted <= 0.1 + 1e-9);
    }

    #[test]
    fn streams_aligned_and_nine_gaze_per_frame() {
        let e = generate_episode(&cfg(Maneuver::Right, 0.8, 4)).unwrap();
        let n = e.frames();
        assert_eq!(e.gaze.len(), 9 * n);
        assert_eq!(e.steer.len(), n);
        assert_eq!(e.labels.len(), n);
        let mut counts = alloc::vec![0usize; n];
        for g in &e.gaze {
            counts[libm::ceil(g.t / OBS_DT - 1e-6) as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c == 9));
    }

    #[test]
    fn labels_switch_at_gaze_shift_before_steering() {
        for m in [Maneuver::Right, Maneuver::Left] {
            let e = generate_episode(&cfg(m, 0.9, 5)).unwrap();
            let g = e.meta.gaze_shift.unwrap();
            let first = e.labels.iter().position(|&l| l != 0).unwrap();
            assert_eq!(e.labels[first], m.label());
            assert!(e.time(first) >= g - 1e-9 && e.time(first) - g < OBS_DT);
            let steer = detect_steer_onset(&e.steer, &SteerOnsetParams::default()).unwrap();
            assert!(e.time(first) < steer);
            // back to straight after the turn
            assert_eq!(*e.labels.last().unwrap(), 0);
        }
    }

    #[test]
    fn right_turn_exits_on_cross_road() {
        let e = generate_episode(&cfg(Maneuver::Right, 1.0, 6)).unwrap();
        let last = e.states.last().unwrap();
        assert!(
            (last.pose.x - e.layout.x_int).abs() < 1e-9,
            "{} {} {}",
            last.pose.x,
            e.layout.x_int,
            last.pose.heading()
        );
        assert!(last.pose.y < -10.0);
        assert!(e.layout.on_road(last.pose.position()));
    }
}
