//! Trajectory, intention and alarm metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{Trajectory, Vec2};
use crate::risk::AlarmEvent;
use crate::scenegen::Conflict;
use crate::NUM_MODES;

/// Prediction steps evaluated: 0.9 s, 2.1 s and 3 s at 0.3 s per step.
pub const HORIZON_STEPS: [usize; 3] = [3, 7, 10];

/// FDE thresholds of the large-error table, metres.
pub const EXCEEDANCE_THRESHOLDS: [f64; 4] = [1.0, 2.0, 3.0, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("trajectory length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("horizon of {steps} steps exceeds trajectory length {len}")]
    HorizonTooLong { steps: usize, len: usize },
    #[error("no records to evaluate")]
    Empty,
    #[error("label {0} out of range")]
    BadLabel(usize),
}

pub type Result<T> = core::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajMetrics {
    pub steps: usize,
    pub ade: f64,
    pub fde: f64,
    /// Root mean square of the displacement over records and steps.
    pub sde: f64,
    pub records: usize,
}

/// Displacement errors over the first `steps` waypoints.
pub fn traj_metrics(pairs: &[(&Trajectory, &[Vec2])], steps: usize) -> Result<TrajMetrics> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut sum, mut sq, mut fin) = (0.0, 0.0, 0.0);
    for (pred, truth) in pairs {
        if pred.len() != truth.len() {
            return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
        }
        if steps == 0 || steps > pred.len() {
            return Err(EvalError::HorizonTooLong { steps, len: pred.len() });
        }
        for k in 0..steps {
            let d = (pred.waypoints[k] - truth[k]).norm();
            sum += d;
            sq += d * d;
        }
        fin += (pred.waypoints[steps - 1] - truth[steps - 1]).norm();
    }
    let n = pairs.len() as f64;
    let m = n * steps as f64;
    Ok(TrajMetrics { steps, ade: sum / m, fde: fin / n, sde: libm::sqrt(sq / m), records: pairs.len() })
}

/// Metrics at every horizon in [`HORIZON_STEPS`].
pub fn traj_metrics_all(pairs: &[(&Trajectory, &[Vec2])]) -> Result<Vec<TrajMetrics>> {
    HORIZON_STEPS.iter().map(|&s| traj_metrics(pairs, s)).collect()
}

/// Final displacement of each record at `steps`.
pub fn final_errors(pairs: &[(&Trajectory, &[Vec2])], steps: usize) -> Vec<f64> {
    pairs.iter().map(|(p, t)| (p.waypoints[steps - 1] - t[steps - 1]).norm()).collect()
}

/// Fraction of errors strictly above each threshold.
pub fn exceedance_table(errors: &[f64], thresholds: &[f64]) -> Vec<f64> {
    if errors.is_empty() {
        return vec![0.0; thresholds.len()];
    }
    thresholds.iter().map(|&t| errors.iter().filter(|&&e| e > t).count() as f64 / errors.len() as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntentMetrics {
    /// Rows are true classes, columns predictions.
    pub confusion: [[usize; NUM_MODES]; NUM_MODES],
    pub precision: [f64; NUM_MODES],
    pub recall: [f64; NUM_MODES],
    pub f1: [f64; NUM_MODES],
}

impl IntentMetrics {
    pub fn accuracy(&self) -> f64 {
        let total: usize = self.confusion.iter().flatten().sum();
        let hit: usize = (0..NUM_MODES).map(|c| self.confusion[c][c]).sum();
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Per-class precision, recall and F1 from predicted and true labels. A class
/// never predicted (or never present) gets 0 for the undefined ratio.
pub fn intent_metrics(pred: &[usize], truth: &[usize]) -> Result<IntentMetrics> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    let mut confusion = [[0usize; NUM_MODES]; NUM_MODES];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= NUM_MODES {
            return Err(EvalError::BadLabel(p));
        }
        if t >= NUM_MODES {
            return Err(EvalError::BadLabel(t));
        }
        confusion[t][p] += 1;
    }
    let mut precision = [0.0; NUM_MODES];
    let mut recall = [0.0; NUM_MODES];
    let mut f1 = [0.0; NUM_MODES];
    for c in 0..NUM_MODES {
        let tp = confusion[c][c];
        let predicted: usize = (0..NUM_MODES).map(|t| confusion[t][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        precision[c] = ratio(tp, predicted);
        recall[c] = ratio(tp, actual);
        let s = precision[c] + recall[c];
        f1[c] = if s > 0.0 { 2.0 * precision[c] * recall[c] / s } else { 0.0 };
    }
    Ok(IntentMetrics { confusion, precision, recall, f1 })
}

/// How the first correct prediction of a turn is found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum T2mRule {
    /// The prediction must stay correct from that time through steer onset.
    Stable,
    /// The first correct prediction counts.
    First,
}

/// Time-to-maneuver of one turn: steer onset minus the time the model's
/// prediction first equals `class` (under `rule`). Ticks are `(t, predicted
/// class)` in time order. `None` if the model never predicts the class.
pub fn time_to_maneuver(ticks: &[(f64, usize)], class: usize, steer_onset: f64, rule: T2mRule) -> Option<f64> {
    let first = match rule {
        T2mRule::First => ticks.iter().find(|(_, p)| *p == class).map(|(t, _)| *t),
        T2mRule::Stable => {
            // last tick at or before the onset, then walk back while correct
            let before = ticks.iter().rposition(|(t, _)| *t <= steer_onset + 1e-9);
            match before {
                Some(i) if ticks[i].1 == class => {
                    let mut j = i;
                    while j > 0 && ticks[j - 1].1 == class {
                        j -= 1;
                    }
                    Some(ticks[j].0)
                }
                // wrong at onset: the prediction lags; take the first correct
                // tick after it
                _ => ticks.iter().find(|(t, p)| *t > steer_onset + 1e-9 && *p == class).map(|(t, _)| *t),
            }
        }
    };
    first.map(|t| steer_onset - t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct T2mSummary {
    pub mean: Option<f64>,
    pub events: usize,
    /// Turns the model never recognised.
    pub missed: usize,
}

pub fn summarize_t2m(values: &[Option<f64>]) -> T2mSummary {
    let hits: Vec<f64> = values.iter().flatten().copied().collect();
    let mean = (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64);
    T2mSummary { mean, events: values.len(), missed: values.len() - hits.len() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlarmAudit {
    pub true_alarms: usize,
    pub false_alarms: usize,
    pub missed: usize,
    /// Collision time minus alarm onset for each true alarm.
    pub leads: Vec<f64>,
}

/// An alarm is true if it flags an obstacle that later collides with the ego
/// at a scripted time after the alarm; a conflict with no such alarm is
/// missed.
pub fn alarm_audit(alarms: &[AlarmEvent], conflicts: &[Conflict]) -> AlarmAudit {
    let mut audit = AlarmAudit { true_alarms: 0, false_alarms: 0, missed: 0, leads: Vec::new() };
    let mut covered = vec![false; conflicts.len()];
    for a in alarms {
        let hit = conflicts.iter().position(|c| a.obstacle == Some(c.obstacle) && a.t < c.time);
        match hit {
            Some(i) => {
                audit.true_alarms += 1;
                audit.leads.push(conflicts[i].time - a.t);
                covered[i] = true;
            }
            None => audit.false_alarms += 1,
        }
    }
    audit.missed = covered.iter().filter(|c| !**c).count();
    audit
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::PRED_DT;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn traj(pts: &[Vec2]) -> Trajectory {
        Trajectory::new(pts.to_vec(), PRED_DT)
    }

    fn line(n: usize, dy: f64) -> Vec<Vec2> {
        (1..=n).map(|k| Vec2::new(k as f64, dy)).collect()
    }

    #[test]
    fn perfect_and_constant_offset() {
        let truth = line(10, 0.0);
        let p = traj(&truth);
        let m = traj_metrics(&[(&p, &truth)], 10).unwrap();
        assert_eq!((m.ade, m.fde, m.sde), (0.0, 0.0, 0.0));
        let off: Vec<Vec2> = truth.iter().map(|w| *w + Vec2::new(3.0, 4.0)).collect();
        let p = traj(&off);
        for s in HORIZON_STEPS {
            let m = traj_metrics(&[(&p, &truth)], s).unwrap();
            assert!((m.ade - 5.0).abs() < 1e-12 && (m.fde - 5.0).abs() < 1e-12 && (m.sde - 5.0).abs() < 1e-12);
        }
        assert!(matches!(traj_metrics(&[(&p, &truth[..9])], 3), Err(EvalError::LengthMismatch(10, 9))));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn matches_double_loop_oracle() {
        let mut rng = crate::rng::stream(5, 0);
        let preds: Vec<Trajectory> = (0..5)
            .map(|_| {
                traj(
                    &(0..10)
                        .map(|_| Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let truths: Vec<Vec<Vec2>> = (0..5)
            .map(|_| (0..10).map(|_| Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))).collect())
            .collect();
        let pairs: Vec<(&Trajectory, &[Vec2])> = preds.iter().zip(&truths).map(|(p, t)| (p, t.as_slice())).collect();
        for s in HORIZON_STEPS {
            let m = traj_metrics(&pairs, s).unwrap();
            let (mut a, mut q, mut f) = (0.0, 0.0, 0.0);
            for r in 0..5 {
                for k in 0..s {
                    let dx = preds[r].waypoints[k].x - truths[r][k].x;
                    let dy = preds[r].waypoints[k].y - truths[r][k].y;
                    let d = (dx * dx + dy * dy).sqrt();
                    a += d;
                    q += d * d;
                    if k == s - 1 {
                        f += d;
                    }
                }
            }
            let n = (5 * s) as f64;
            assert!((m.ade - a / n).abs() < 1e-12);
            assert!((m.sde - (q / n).sqrt()).abs() < 1e-12);
            assert!((m.fde - f / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn exceedance_examples() {
        assert_eq!(exceedance_table(&[0.5; 7], &EXCEEDANCE_THRESHOLDS), vec![0.0; 4]);
        let t = exceedance_table(&[0.5, 1.5, 2.5, 3.5, 4.5], &EXCEEDANCE_THRESHOLDS);
        assert_eq!(t, vec![0.8, 0.6, 0.4, 0.2]);
    }

    #[test]
    fn perfect_intent_predictions() {
        let y = [0, 1, 2, 2, 1, 0, 0];
        let m = intent_metrics(&y, &y).unwrap();
        assert_eq!(m.precision, [1.0; 3]);
        assert_eq!(m.recall, [1.0; 3]);
        assert_eq!(m.f1, [1.0; 3]);
        assert_eq!(m.accuracy(), 1.0);
    }

    #[test]
    fn t2m_examples() {
        // locks to right at 10.0, steer onset 10.9
        let ticks: Vec<(f64, usize)> = (95..=115).map(|k| (k as f64 / 10.0, usize::from(k >= 100))).collect();
        let t = time_to_maneuver(&ticks, 1, 10.9, T2mRule::Stable).unwrap();
        assert!((t - 0.9).abs() < 1e-12);
        // an early flicker does not count under the stable rule
        let mut flick = ticks.clone();
        flick[0].1 = 1;
        assert!((time_to_maneuver(&flick, 1, 10.9, T2mRule::Stable).unwrap() - 0.9).abs() < 1e-12);
        assert!((time_to_maneuver(&flick, 1, 10.9, T2mRule::First).unwrap() - 1.4).abs() < 1e-12);
        // lagging prediction gives a negative value
        let late: Vec<(f64, usize)> = (95..=115).map(|k| (k as f64 / 10.0, usize::from(k >= 112))).collect();
        assert!((time_to_maneuver(&late, 1, 10.9, T2mRule::Stable).unwrap() + 0.3).abs() < 1e-12);
        assert_eq!(time_to_maneuver(&late, 2, 10.9, T2mRule::Stable), None);
        let s = summarize_t2m(&[Some(1.0), None, Some(0.0)]);
        assert_eq!((s.mean, s.events, s.missed), (Some(0.5), 3, 1));
    }

    #[test]
    fn alarm_audit_examples() {
        let c = [Conflict { obstacle: 2, time: 10.0 }];
        let a = alarm_audit(&[AlarmEvent { t: 7.0, obstacle: Some(2) }], &c);
        assert_eq!((a.true_alarms, a.false_alarms, a.missed), (1, 0, 0));
        assert!((a.leads[0] - 3.0).abs() < 1e-12);
        let a = alarm_audit(&[AlarmEvent { t: 7.0, obstacle: Some(1) }], &[]);
        assert_eq!((a.true_alarms, a.false_alarms, a.missed), (0, 1, 0));
        let a = alarm_audit(&[], &[]);
        assert_eq!((a.true_alarms, a.false_alarms, a.missed), (0, 0, 0));
        // after the collision, or on another obstacle: false, and the conflict is missed
        let a = alarm_audit(&[AlarmEvent { t: 10.5, obstacle: Some(2) }, AlarmEvent { t: 8.0, obstacle: Some(0) }], &c);
        assert_eq!((a.true_alarms, a.false_alarms, a.missed), (0, 2, 1));
    }

    proptest! {
        #[test]
        fn prf_match_brute_force(pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..80)) {
            let (pred, truth): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let m = intent_metrics(&pred, &truth).unwrap();
            for c in 0..3 {
                let tp = pred.iter().zip(&truth).filter(|(p, t)| **p == c && **t == c).count();
                let fp = pred.iter().zip(&truth).filter(|(p, t)| **p == c && **t != c).count();
                let fneg = pred.iter().zip(&truth).filter(|(p, t)| **p != c && **t == c).count();
                let pr = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
                let re = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
                prop_assert_eq!(m.precision[c], pr);
                prop_assert_eq!(m.recall[c], re);
                if pr + re > 0.0 {
                    prop_assert!((m.f1[c] - 2.0 * pr * re / (pr + re)).abs() < 1e-15);
                }
                prop_assert_eq!(m.confusion[c].iter().sum::<usize>(), truth.iter().filter(|t| **t == c).count());
            }
        }

        #[test]
        fn exceedance_monotone_and_counts(errors in proptest::collection::vec(0.0..6.0f64, 0..50)) {
            let t = exceedance_table(&errors, &EXCEEDANCE_THRESHOLDS);
            for w in t.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            for (f, th) in t.iter().zip(EXCEEDANCE_THRESHOLDS) {
                let c = errors.iter().filter(|e| **e > th).count();
                let want = if errors.is_empty() { 0.0 } else { c as f64 / errors.len() as f64 };
                prop_assert_eq!(*f, want);
            }
        }

        #[test]
        fn ade_never_exceeds_sde(seed in 0u64..500, n in 1usize..6) {
            let mut rng = crate::rng::stream(seed, 1);
            let preds: Vec<Trajectory> = (0..n).map(|_| traj(&(0..10).map(|_| Vec2::new(rng.random_range(-9.0..9.0), 0.0)).collect::<Vec<_>>())).collect();
            let truth = line(10, 0.0);
            let pairs: Vec<(&Trajectory, &[Vec2])> = preds.iter().map(|p| (p, truth.as_slice())).collect();
            for m in traj_metrics_all(&pairs).unwrap() {
                prop_assert!(m.ade <= m.sde + 1e-12);
            }
        }

        #[test]
        fn every_alarm_is_true_or_false(
            alarms in proptest::collection::vec((0.0..20.0f64, 0usize..4), 0..12),
            conflicts in proptest::collection::vec((0.0..20.0f64, 0usize..4), 0..4),
        ) {
            let a: Vec<AlarmEvent> = alarms.iter().map(|&(t, o)| AlarmEvent { t, obstacle: Some(o) }).collect();
            let c: Vec<Conflict> = conflicts.iter().map(|&(time, obstacle)| Conflict { obstacle, time }).collect();
            let r = alarm_audit(&a, &c);
            prop_assert_eq!(r.true_alarms + r.false_alarms, a.len());
            prop_assert_eq!(r.leads.len(), r.true_alarms);
            prop_assert!(r.leads.iter().all(|l| *l > 0.0));
            prop_assert!(r.missed <= c.len());
        }
    }
}
