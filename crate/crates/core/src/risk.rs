//! Particle-based collision probability over the prediction horizon, the
//! CTRA and multimodal risk variants, and the alarm rule.

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::geometry::{obb_intersect, OrientedRect, Trajectory, Vec2};
use crate::predictor::ModeSet;
use crate::riskstats::{confidence_boundary, StatsError, StepErrorModel};
use crate::PRED_DT;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct RiskConfig {
    pub particles: usize,
    /// Alarm threshold on P_c.
    pub threshold: f64,
    pub consecutive_hits: usize,
    /// Assessment ticks per second.
    pub rate_hz: f64,
    /// Look-ahead counted for risk, seconds.
    pub horizon: f64,
    pub level: f64,
    pub ego_length: f64,
    pub ego_width: f64,
    pub ped_length: f64,
    pub ped_width: f64,
    /// Rejection sampling gives up after this many draws per particle.
    pub max_draw_factor: usize,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig {
            particles: 2000,
            threshold: 0.4,
            consecutive_hits: 3,
            rate_hz: 10.0,
            horizon: 2.1,
            level: 0.95,
            ego_length: 4.5,
            ego_width: 1.8,
            ped_length: 0.5,
            ped_width: 0.5,
            max_draw_factor: 100,
        }
    }
}

impl RiskConfig {
    /// Prediction steps inside the risk horizon.
    pub fn horizon_steps(&self) -> usize {
        libm::floor(self.horizon / PRED_DT + 1e-9) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 100 {
            return Err(RiskError::InvalidConfig("particles must be at least 100"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(RiskError::InvalidConfig("threshold must lie in (0, 1)"));
        }
        if self.consecutive_hits == 0 {
            return Err(RiskError::InvalidConfig("consecutive_hits must be positive"));
        }
        if self.horizon_steps() == 0 {
            return Err(RiskError::EmptyHorizon);
        }
        if !(self.ego_length > 0.0 && self.ego_width > 0.0 && self.ped_length > 0.0 && self.ped_width > 0.0) {
            return Err(RiskError::InvalidConfig("rectangle extents must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum RiskError {
    #[error("no error model for prediction step {0}")]
    MissingStepModel(usize),
    #[error("rejection sampling accepted {accepted} of {drawn} draws before the cap")]
    RejectionExhausted { accepted: usize, drawn: usize },
    #[error("risk horizon covers no prediction step")]
    EmptyHorizon,
    #[error("invalid risk config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub type Result<T> = core::result::Result<T, RiskError>;

/// A constant-velocity obstacle, positions in the assessment frame at the
/// reference time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub length: f64,
    pub width: f64,
}

impl Obstacle {
    /// Velocity from the last two observed positions `dt` apart.
    pub fn from_track(id: usize, prev: Vec2, last: Vec2, dt: f64, length: f64, width: f64) -> Self {
        Obstacle { id, position: last, velocity: (last - prev) * (1.0 / dt), length, width }
    }

    pub fn rect_at(&self, t: f64) -> OrientedRect {
        let heading = if self.velocity.norm() > 1e-6 { self.velocity.angle() } else { 0.0 };
        OrientedRect::new(self.position + self.velocity * t, heading, self.length, self.width)
    }
}

/// `n` draws of the step error Gaussian restricted to its confidence ellipse.
pub fn sample_particles(
    model: &StepErrorModel,
    n: usize,
    level: f64,
    seed: u64,
    max_draw_factor: usize,
) -> Result<Vec<Vec2>> {
    let [l11, l21, l22] = model.cholesky()?;
    let thr = confidence_boundary(level)?;
    let mut rng = crate::rng::stream(seed, 0);
    let cap = n.saturating_mul(max_draw_factor.max(1));
    let mut out = Vec::with_capacity(n);
    let mut drawn = 0;
    while out.len() < n {
        if drawn >= cap {
            return Err(RiskError::RejectionExhausted { accepted: out.len(), drawn });
        }
        drawn += 1;
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        // the Mahalanobis distance of mean + L·z is |z|
        if z1 * z1 + z2 * z2 <= thr {
            out.push(model.mean + Vec2::new(l11 * z1, l21 * z1 + l22 * z2));
        }
    }
    Ok(out)
}

/// Collision probability at one step, overall and per obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRisk {
    pub probability: f64,
    pub per_obstacle: Vec<f64>,
}

fn half_diagonal(length: f64, width: f64) -> f64 {
    0.5 * libm::hypot(length, width)
}

/// Probability that the ego outline at `waypoint` overlaps any obstacle,
/// under the step's error model. Errors are prediction minus truth in the
/// frame of the motion direction `heading`, so each particle places the ego
/// at `waypoint − R(heading)·e`.
pub fn collision_probability(
    waypoint: Vec2,
    heading: f64,
    model: &StepErrorModel,
    obstacles: &[OrientedRect],
    cfg: &RiskConfig,
    seed: u64,
) -> Result<StepRisk> {
    let mut per = vec![0.0; obstacles.len()];
    if obstacles.is_empty() {
        return Ok(StepRisk { probability: 0.0, per_obstacle: per });
    }
    let thr = confidence_boundary(cfg.level)?;
    let (_, lmax) = model.eigenvalues();
    let reach = model.mean.norm() + libm::sqrt(thr * lmax.max(0.0)) + half_diagonal(cfg.ego_length, cfg.ego_width);
    let near: Vec<usize> = (0..obstacles.len())
        .filter(|&k| {
            let o = &obstacles[k];
            (o.center - waypoint).norm() <= reach + half_diagonal(o.length, o.width) + 1e-9
        })
        .collect();
    if near.is_empty() {
        return Ok(StepRisk { probability: 0.0, per_obstacle: per });
    }
    let particles = sample_particles(model, cfg.particles, cfg.level, seed, cfg.max_draw_factor)?;
    let mut counts = vec![0usize; obstacles.len()];
    let mut any = 0usize;
    for e in &particles {
        let center = waypoint - e.rotate(heading);
        let ego = OrientedRect::new(center, heading, cfg.ego_length, cfg.ego_width);
        let mut hit = false;
        for &k in &near {
            if obb_intersect(&ego, &obstacles[k]) {
                counts[k] += 1;
                hit = true;
            }
        }
        any += usize::from(hit);
    }
    let n = particles.len() as f64;
    for (p, c) in per.iter_mut().zip(&counts) {
        *p = *c as f64 / n;
    }
    Ok(StepRisk { probability: any as f64 / n, per_obstacle: per })
}

/// Horizon maximum of the per-step collision probability.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonRisk {
    pub p_c: f64,
    /// 1-based step of the maximum.
    pub step: usize,
    /// Obstacle id contributing most at that step, if any risk was found.
    pub obstacle: Option<usize>,
    pub per_step: Vec<f64>,
}

impl HorizonRisk {
    fn none(steps: usize) -> Self {
        HorizonRisk { p_c: 0.0, step: 1, obstacle: None, per_step: vec![0.0; steps] }
    }
}

/// Maximum over steps `1..=horizon_steps` of the collision probability along
/// `traj` against constant-velocity obstacles. Step seeds are derived from
/// `(seed, step)`.
pub fn horizon_risk(
    traj: &Trajectory,
    models: &[StepErrorModel],
    obstacles: &[Obstacle],
    cfg: &RiskConfig,
    seed: u64,
) -> Result<HorizonRisk> {
    let steps = cfg.horizon_steps().min(traj.len());
    if steps == 0 {
        return Err(RiskError::EmptyHorizon);
    }
    let mut out = HorizonRisk::none(steps);
    let mut best: f64 = -1.0;
    for i in 0..steps {
        let step = i + 1;
        let model = models.iter().find(|m| m.step == step).ok_or(RiskError::MissingStepModel(step))?;
        let t = step as f64 * traj.step;
        let rects: Vec<OrientedRect> = obstacles.iter().map(|o| o.rect_at(t)).collect();
        let heading = traj.chord_heading(i, 0.0, 1e-3);
        let s = collision_probability(traj.waypoints[i], heading, model, &rects, cfg, step_seed(seed, step))?;
        out.per_step[i] = s.probability;
        if s.probability > best {
            best = s.probability;
            out.p_c = s.probability;
            out.step = step;
            out.obstacle = argmax_positive(&s.per_obstacle).map(|k| obstacles[k].id);
        }
    }
    Ok(out)
}

fn step_seed(seed: u64, step: usize) -> u64 {
    crate::rng::derive_seed(seed, 0x5249_534B_0000 + step as u64)
}

fn argmax_positive(xs: &[f64]) -> Option<usize> {
    let mut best = None;
    let mut v = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        if x > v {
            v = x;
            best = Some(k);
        }
    }
    best
}

/// Deterministic overlap test along the in-horizon waypoints, no error model.
/// `p_c` is 1 on the first overlapping step and 0 otherwise.
pub fn ctra_ra(traj: &Trajectory, obstacles: &[Obstacle], cfg: &RiskConfig) -> HorizonRisk {
    let steps = cfg.horizon_steps().min(traj.len());
    let mut out = HorizonRisk::none(steps);
    for i in 0..steps {
        let t = (i + 1) as f64 * traj.step;
        let heading = traj.chord_heading(i, 0.0, 1e-3);
        let ego = OrientedRect::new(traj.waypoints[i], heading, cfg.ego_length, cfg.ego_width);
        if let Some(o) = obstacles.iter().find(|o| obb_intersect(&ego, &o.rect_at(t))) {
            out.per_step[i] = 1.0;
            if out.obstacle.is_none() {
                out.p_c = 1.0;
                out.step = i + 1;
                out.obstacle = Some(o.id);
            }
        }
    }
    out
}

/// Probability-weighted sum of the per-mode horizon risks. The reported
/// step and obstacle come from the mode with the largest weighted term.
pub fn mtp_ra(
    modes: &ModeSet,
    models: &[StepErrorModel],
    obstacles: &[Obstacle],
    cfg: &RiskConfig,
    seed: u64,
) -> Result<HorizonRisk> {
    let mut total = 0.0;
    let mut lead: Option<(f64, HorizonRisk)> = None;
    for (i, (p, traj)) in modes.probs.iter().zip(&modes.trajectories).enumerate() {
        let h = horizon_risk(traj, models, obstacles, cfg, crate::rng::derive_seed(seed, i as u64))?;
        let w = p * h.p_c;
        total += w;
        if lead.as_ref().is_none_or(|(bw, _)| w > *bw) {
            lead = Some((w, h));
        }
    }
    let (_, mut h) = lead.ok_or(RiskError::EmptyHorizon)?;
    h.p_c = total.clamp(0.0, 1.0);
    Ok(h)
}

/// Sample indices at which an alarm fires: the `consecutive_hits`-th
/// consecutive sample above the threshold. Any sample at or below the
/// threshold resets the count, and each exceedance run alarms once.
pub fn alarm_stream(series: &[f64], threshold: f64, consecutive_hits: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut run = 0usize;
    for (i, &p) in series.iter().enumerate() {
        if p > threshold {
            run += 1;
            if run == consecutive_hits {
                out.push(i);
            }
        } else {
            run = 0;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRow {
    pub t: f64,
    pub p_c: f64,
    pub step: usize,
    pub obstacle: Option<usize>,
    pub alarm: bool,
}

/// Alarm event: onset time and the obstacle flagged at that tick.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AlarmEvent {
    pub t: f64,
    pub obstacle: Option<usize>,
}

/// Per-tick rows with the alarm flag set on each onset tick.
pub fn build_trace(times: &[f64], risks: &[HorizonRisk], cfg: &RiskConfig) -> Vec<TraceRow> {
    let series: Vec<f64> = risks.iter().map(|r| r.p_c).collect();
    let onsets = alarm_stream(&series, cfg.threshold, cfg.consecutive_hits);
    times
        .iter()
        .zip(risks)
        .enumerate()
        .map(|(i, (&t, r))| TraceRow { t, p_c: r.p_c, step: r.step, obstacle: r.obstacle, alarm: onsets.contains(&i) })
        .collect()
}

pub fn alarm_events(trace: &[TraceRow]) -> Vec<AlarmEvent> {
    trace.iter().filter(|r| r.alarm).map(|r| AlarmEvent { t: r.t, obstacle: r.obstacle }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::ModeSet;
    use proptest::prelude::*;

    fn unit_model(step: usize) -> StepErrorModel {
        StepErrorModel::isotropic(step, Vec2::ZERO, 1.0)
    }

    fn point_cfg(n: usize) -> RiskConfig {
        RiskConfig { particles: n, ego_length: 1e-9, ego_width: 1e-9, ..RiskConfig::default() }
    }

    #[test]
    fn particles_stay_inside_the_ellipse() {
        let m = StepErrorModel { step: 1, mean: Vec2::new(0.2, -0.1), s_xx: 2.0, s_xy: 0.5, s_yy: 0.8, n: 0 };
        let ps = sample_particles(&m, 5000, 0.95, 3, 100).unwrap();
        for p in &ps {
            assert!(m.mahalanobis2(*p).unwrap() <= 5.991 + 1e-9);
        }
        assert_eq!(ps, sample_particles(&m, 5000, 0.95, 3, 100).unwrap());
        assert_ne!(ps, sample_particles(&m, 5000, 0.95, 4, 100).unwrap());
    }

    #[test]
    fn truncated_mean_is_unbiased() {
        let ps = sample_particles(&unit_model(1), 10_000, 0.95, 8, 100).unwrap();
        let n = ps.len() as f64;
        let mx = ps.iter().map(|p| p.x).sum::<f64>() / n;
        let my = ps.iter().map(|p| p.y).sum::<f64>() / n;
        assert!(mx.abs() < 0.05 && my.abs() < 0.05);
    }

    #[test]
    fn rejection_cap_surfaces_error() {
        let r = sample_particles(&unit_model(1), 1000, 0.01, 1, 1);
        assert!(matches!(r, Err(RiskError::RejectionExhausted { .. })));
    }

    #[test]
    fn covering_and_distant_obstacles() {
        let cfg = RiskConfig::default();
        let m = unit_model(1);
        let big = OrientedRect::new(Vec2::ZERO, 0.0, 100.0, 100.0);
        let p = collision_probability(Vec2::ZERO, 0.3, &m, &[big], &cfg, 1).unwrap();
        assert_eq!(p.probability, 1.0);
        let far = OrientedRect::new(Vec2::new(100.0, 0.0), 0.0, 0.5, 0.5);
        let p = collision_probability(Vec2::ZERO, 0.3, &m, &[far], &cfg, 1).unwrap();
        assert_eq!(p.probability, 0.0);
    }

    #[test]
    fn half_plane_gives_one_half() {
        let cfg = point_cfg(10_000);
        // x ≥ 0 approximated by a huge rectangle with its left edge on x = 0
        let half = OrientedRect::new(Vec2::new(500.0, 0.0), 0.0, 1000.0, 1000.0);
        for seed in 0..20 {
            let p = collision_probability(Vec2::ZERO, 0.0, &unit_model(1), &[half], &cfg, seed).unwrap();
            assert!((p.probability - 0.5).abs() <= 2.0 * (0.25f64 / 1e4).sqrt() + 0.005, "{}", p.probability);
        }
    }

    #[test]
    fn horizon_ignores_late_steps() {
        let cfg = RiskConfig::default();
        let models: Vec<_> = (1..=10).map(unit_model).collect();
        let traj = Trajectory::new((1..=10).map(|k| Vec2::new(3.0 * k as f64, 0.0)).collect(), PRED_DT);
        // obstacle parked at the 9th waypoint
        let o = Obstacle { id: 4, position: Vec2::new(27.0, 0.0), velocity: Vec2::ZERO, length: 0.5, width: 0.5 };
        let h = horizon_risk(&traj, &models, &[o], &cfg, 1).unwrap();
        assert_eq!(h.per_step.len(), 7);
        assert_eq!(h.p_c, 0.0);
        assert_eq!(h.obstacle, None);
        let o2 = Obstacle { position: Vec2::new(9.0, 0.0), ..o };
        let h = horizon_risk(&traj, &models, &[o2], &cfg, 1).unwrap();
        assert!(h.p_c > 0.4);
        assert_eq!(h.step, 3);
        assert_eq!(h.obstacle, Some(4));
        assert_eq!(horizon_risk(&traj, &models, &[], &cfg, 1).unwrap().p_c, 0.0);
        assert!(matches!(horizon_risk(&traj, &models[..2], &[o2], &cfg, 1), Err(RiskError::MissingStepModel(3))));
    }

    #[test]
    fn ctra_ra_binary() {
        let cfg = RiskConfig::default();
        let traj = Trajectory::new((1..=10).map(|k| Vec2::new(3.0 * k as f64, 0.0)).collect(), PRED_DT);
        let ped = Obstacle { id: 1, position: Vec2::new(12.0, 0.3), velocity: Vec2::ZERO, length: 0.5, width: 0.5 };
        let r = ctra_ra(&traj, &[ped], &cfg);
        assert_eq!((r.p_c, r.step, r.obstacle), (1.0, 4, Some(1)));
        assert_eq!(ctra_ra(&traj, &[], &cfg).p_c, 0.0);
    }

    #[test]
    fn mtp_ra_weights_modes() {
        let cfg = RiskConfig::default();
        let models: Vec<_> = (1..=10).map(unit_model).collect();
        let line = |dy: f64| Trajectory::new((1..=10).map(|k| Vec2::new(3.0 * k as f64, dy)).collect(), PRED_DT);
        let wall = Obstacle { id: 0, position: Vec2::new(10.0, 0.0), velocity: Vec2::ZERO, length: 60.0, width: 8.0 };
        let modes = ModeSet { probs: [0.5, 0.3, 0.2], trajectories: [line(0.0), line(200.0), line(-200.0)] };
        assert!((mtp_ra(&modes, &models, &[wall], &cfg, 1).unwrap().p_c - 0.5).abs() < 1e-12);
        assert_eq!(mtp_ra(&modes, &models, &[], &cfg, 1).unwrap().p_c, 0.0);
        let all = ModeSet { probs: [0.5, 0.3, 0.2], trajectories: [line(0.0), line(0.0), line(0.0)] };
        assert!((mtp_ra(&all, &models, &[wall], &cfg, 1).unwrap().p_c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alarm_rule_examples() {
        assert_eq!(alarm_stream(&[0.5, 0.5, 0.41, 0.9], 0.4, 3), vec![2]);
        assert!(alarm_stream(&[0.5, 0.39, 0.5, 0.5], 0.4, 3).is_empty());
        assert_eq!(alarm_stream(&[0.41; 10], 0.4, 3), vec![2]);
        assert!(alarm_stream(&[0.4; 10], 0.4, 3).is_empty());
        assert_eq!(alarm_stream(&[0.5, 0.5, 0.5, 0.1, 0.5, 0.5, 0.5], 0.4, 3), vec![2, 6]);
    }

    proptest! {
        #[test]
        fn probability_bounded_and_monotone_in_size(
            ox in -6.0..6.0f64, oy in -6.0..6.0f64, l in 0.2..4.0f64, w in 0.2..4.0f64,
            grow in 0.0..3.0f64, h in -3.1..3.1f64, seed in 0u64..1000,
        ) {
            let cfg = RiskConfig { particles: 300, ..RiskConfig::default() };
            let m = StepErrorModel { step: 1, mean: Vec2::new(0.1, 0.0), s_xx: 1.2, s_xy: 0.3, s_yy: 0.6, n: 0 };
            let small = OrientedRect::new(Vec2::new(ox, oy), 0.4, l, w);
            let big = OrientedRect::new(Vec2::new(ox, oy), 0.4, l + grow, w + grow);
            let a = collision_probability(Vec2::ZERO, h, &m, &[small], &cfg, seed).unwrap().probability;
            let b = collision_probability(Vec2::ZERO, h, &m, &[big], &cfg, seed).unwrap().probability;
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b >= a);
        }

        #[test]
        fn alarms_only_after_enough_exceedances(series in proptest::collection::vec(0.0..1.0f64, 0..60)) {
            for i in alarm_stream(&series, 0.4, 3) {
                prop_assert!(i >= 2);
                prop_assert!(series[i - 2..=i].iter().all(|&p| p > 0.4));
                prop_assert!(i < 3 || series[i - 3] <= 0.4);
            }
        }
    }
}
