//! Corpus sampling and the scripted risk-assessment suite.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::kinematics::simulate;
use super::{generate_episode, Episode, Maneuver, PedestrianScript, Result, ScenarioConfig, ScenarioError};
use crate::geometry::Vec2;
use crate::rng::{stream2, Rng};
use crate::OBS_DT;

/// Clipped normal distribution of the gaze lead.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct TauDist {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for TauDist {
    fn default() -> Self {
        TauDist { mean: 1.35, std: 0.45, min: 0.3, max: 2.4 }
    }
}

impl TauDist {
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let n = Normal::new(self.mean, self.std.max(0.0)).expect("finite tau distribution");
        n.sample(rng).clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct CorpusSpec {
    pub straight: usize,
    pub right: usize,
    pub left: usize,
    pub tau: TauDist,
    pub turn_start_min: f64,
    pub turn_start_max: f64,
    /// Driving time kept after the turn (or slowdown) ends.
    pub tail: f64,
    /// Chance that a straight episode brakes through the intersection.
    pub slowdown_prob: f64,
    pub max_pedestrians: usize,
    /// Lateral distance of sidewalk pedestrians from a road centre line.
    pub sidewalk_offset: f64,
    /// Speeds, gaze and geometry shared by every episode.
    pub base: ScenarioConfig,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            straight: 77,
            right: 61,
            left: 82,
            tau: TauDist::default(),
            turn_start_min: 5.0,
            turn_start_max: 7.0,
            tail: 4.0,
            slowdown_prob: 0.5,
            max_pedestrians: 2,
            sidewalk_offset: 7.0,
            base: ScenarioConfig::default(),
        }
    }
}

impl CorpusSpec {
    pub fn episodes(&self) -> usize {
        self.straight + self.right + self.left
    }

    pub fn maneuver(&self, index: usize) -> Maneuver {
        if index < self.straight {
            Maneuver::Straight
        } else if index < self.straight + self.right {
            Maneuver::Right
        } else {
            Maneuver::Left
        }
    }
}

/// x coordinate of the cross road for this configuration: where a 90° turn
/// from the approach ends up.
pub fn intersection_x(cfg: &ScenarioConfig) -> f64 {
    let turn = ScenarioConfig { maneuver: Maneuver::Right, ..cfg.clone() }.profile();
    let n = libm::ceil(turn.turn_end() / OBS_DT) as usize + 2;
    simulate(&turn, n)[n - 1].pose.x
}

/// A pedestrian on a sidewalk at least 12 m from the intersection centre,
/// standing or walking away from it.
pub fn sidewalk_pedestrian(rng: &mut Rng, x_int: f64, offset: f64) -> PedestrianScript {
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let along = rng.random_range(12.0..25.0);
    let speed = if rng.random_bool(0.5) { rng.random_range(0.5..1.4) } else { 0.0 };
    let (start, dir) = match rng.random_range(0..4u8) {
        // beyond the intersection, along the approach road
        0 => (Vec2::new(x_int + along, side * offset), Vec2::new(1.0, 0.0)),
        // before it
        1 => (Vec2::new(x_int - along - 5.0, side * offset), Vec2::new(-1.0, 0.0)),
        // the two cross-road arms
        2 => (Vec2::new(x_int + side * offset, along), Vec2::new(0.0, 1.0)),
        _ => (Vec2::new(x_int + side * offset, -along), Vec2::new(0.0, -1.0)),
    };
    PedestrianScript { start, velocity: dir * speed, on_path: false }
}

/// Scenario for corpus episode `index`; class blocks are straight, right,
/// left in that order.
pub fn episode_config(spec: &CorpusSpec, seed: u64, index: usize) -> ScenarioConfig {
    let mut rng = stream2(seed, index as u64, 0xC0);
    let maneuver = spec.maneuver(index);
    let turn_start = rng.random_range(spec.turn_start_min..=spec.turn_start_max);
    let tau = spec.tau.sample(&mut rng);
    let slow_down = maneuver != Maneuver::Straight || rng.random_bool(spec.slowdown_prob.clamp(0.0, 1.0));
    let mut cfg = ScenarioConfig {
        maneuver,
        turn_start: libm::round(turn_start * 100.0) / 100.0,
        tau,
        slow_down,
        seed: crate::rng::derive_seed(seed, index as u64),
        pedestrians: Vec::new(),
        ..spec.base.clone()
    };
    cfg.duration = libm::ceil((cfg.profile().turn_end() + spec.tail) / OBS_DT) * OBS_DT;
    let x_int = intersection_x(&cfg);
    let n = rng.random_range(0..=spec.max_pedestrians);
    cfg.pedestrians = (0..n).map(|_| sidewalk_pedestrian(&mut rng, x_int, spec.sidewalk_offset)).collect();
    cfg
}

pub fn generate_corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<Episode>> {
    (0..spec.episodes())
        .map(|i| {
            let mut e = generate_episode(&episode_config(spec, seed, i))?;
            e.id = format!("ep{i:05}");
            Ok(e)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct SuiteSpec {
    pub turns: usize,
    pub conflicts: usize,
    pub early_turns: usize,
    /// Scripted conflict time before the end of the turn, seconds.
    pub conflict_before_turn_end: f64,
    pub pedestrian_speed: f64,
    /// Lead used for the early-turn scenarios.
    pub early_tau: f64,
    pub corpus: CorpusSpec,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            turns: 20,
            conflicts: 8,
            early_turns: 2,
            conflict_before_turn_end: 0.3,
            pedestrian_speed: 1.2,
            early_tau: 2.0,
            corpus: CorpusSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SuiteKind {
    /// A turn with pedestrians only on other arms.
    Clear,
    /// A pedestrian scripted to meet the ego on its exit road.
    Conflict,
    /// A turn with a pedestrian straight ahead, off the turning path.
    EarlyTurn,
}

/// Scripted moment when the ego reference point reaches pedestrian
/// `obstacle`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Conflict {
    pub obstacle: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEpisode {
    pub kind: SuiteKind,
    pub episode: Episode,
    pub conflicts: Vec<Conflict>,
}

/// `turns` turn episodes alternating right and left, the first `conflicts`
/// of them with a conflict pedestrian (standing or crossing) plus
/// `early_turns` early-turn scenarios. Every episode also has one sidewalk
/// pedestrian on another arm.
pub fn risk_suite(spec: &SuiteSpec, seed: u64) -> Result<Vec<SuiteEpisode>> {
    if spec.conflicts > spec.turns {
        return Err(ScenarioError::Invalid("more conflicts than turns"));
    }
    let mut out = Vec::new();
    for i in 0..spec.turns + spec.early_turns {
        let early = i >= spec.turns;
        let mut rng = stream2(seed, i as u64, 0x5E);
        let maneuver = if i % 2 == 0 { Maneuver::Right } else { Maneuver::Left };
        let turn_start = if early { 6.0 } else { libm::round(rng.random_range(5.0..7.0) * 100.0) / 100.0 };
        let tau = if early { spec.early_tau } else { spec.corpus.tau.sample(&mut rng) };
        let mut cfg = ScenarioConfig {
            maneuver,
            turn_start,
            tau,
            slow_down: true,
            seed: crate::rng::derive_seed(seed ^ 0x5E5E, i as u64),
            pedestrians: Vec::new(),
            ..spec.corpus.base.clone()
        };
        let profile = cfg.profile();
        cfg.duration = libm::ceil((profile.turn_end() + spec.corpus.tail) / OBS_DT) * OBS_DT;
        let x_int = intersection_x(&cfg);

        // a sidewalk pedestrian on an arm the ego does not use
        let side = -maneuver.yaw_sign();
        let along = rng.random_range(12.0..20.0);
        cfg.pedestrians.push(PedestrianScript {
            start: Vec2::new(x_int + spec.corpus.sidewalk_offset, side * along),
            velocity: Vec2::ZERO,
            on_path: false,
        });

        let mut conflicts = Vec::new();
        let kind = if early {
            let half = cfg.road_half_width;
            cfg.pedestrians.push(PedestrianScript {
                start: Vec2::new(x_int + half + 2.0, 0.0),
                velocity: Vec2::ZERO,
                on_path: false,
            });
            SuiteKind::EarlyTurn
        } else if i < spec.conflicts {
            let plain = generate_episode(&cfg)?;
            let kc = libm::round((profile.turn_end() - spec.conflict_before_turn_end) / OBS_DT) as usize;
            let tc = crate::grid_time(kc, OBS_DT);
            let s = plain.states[kc];
            // standing, or crossing the exit road at walking pace
            let velocity = if (i / 2) % 2 == 0 {
                Vec2::ZERO
            } else {
                Vec2::from_angle(s.pose.heading() + core::f64::consts::FRAC_PI_2) * spec.pedestrian_speed
            };
            let start = s.pose.position() - velocity * tc;
            conflicts.push(Conflict { obstacle: cfg.pedestrians.len(), time: tc });
            cfg.pedestrians.push(PedestrianScript { start, velocity, on_path: true });
            SuiteKind::Conflict
        } else {
            SuiteKind::Clear
        };
        let mut episode = generate_episode(&cfg)?;
        episode.id = format!("suite{i:03}");
        out.push(SuiteEpisode { kind, episode, conflicts });
    }
    Ok(out)
}
