//! Constant turn rate and acceleration propagation.

use alloc::vec::Vec;

use crate::geometry::{Trajectory, Vec2};
use crate::scenegen::Window;
use crate::{OBS_DT, OBS_LEN, PRED_DT, PRED_LEN};

/// Below this yaw rate the series form replaces the closed form.
pub const SMALL_YAW_RATE: f64 = 1e-4;

/// Fit span of the acceleration and yaw-rate estimates, seconds.
pub const FIT_SPAN: f64 = 0.5;

/// Displacement after `t` seconds from the origin heading `theta0` with
/// speed `v0`, acceleration `a` and yaw rate `w`.
pub fn ctra_displacement(theta0: f64, v0: f64, a: f64, w: f64, t: f64) -> Vec2 {
    if libm::fabs(w) < SMALL_YAW_RATE {
        // ∫(v0 + a s)·e^{i(θ0 + w s)} ds expanded to second order in w; the
        // truncation is below 1e-12 m over 3 s
        let along = v0 * t + 0.5 * a * t * t;
        let lin = v0 * t * t / 2.0 + a * t * t * t / 3.0;
        let quad = v0 * t * t * t / 3.0 + a * t * t * t * t / 4.0;
        let local = Vec2::new(along - 0.5 * w * w * quad, w * lin);
        return local.rotate(theta0);
    }
    let th = theta0 + w * t;
    let v = v0 + a * t;
    let (s0, c0) = (libm::sin(theta0), libm::cos(theta0));
    let (s1, c1) = (libm::sin(th), libm::cos(th));
    let w2 = w * w;
    Vec2::new((v * w * s1 + a * c1 - v0 * w * s0 - a * c0) / w2, (-v * w * c1 + a * s1 + v0 * w * c0 - a * s0) / w2)
}

/// Waypoints at `step, 2·step, …, steps·step` from `origin`.
pub fn ctra_predict(origin: Vec2, theta0: f64, v0: f64, a: f64, w: f64, steps: usize, step: f64) -> Trajectory {
    let pts = (1..=steps).map(|k| origin + ctra_displacement(theta0, v0, a, w, k as f64 * step)).collect();
    Trajectory::new(pts, step)
}

/// Least-squares slope of `ys` sampled every `dt`.
fn slope(ys: &[f64], dt: f64) -> f64 {
    let n = ys.len() as f64;
    let tm = (n - 1.0) * 0.5 * dt;
    let ym = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let d = i as f64 * dt - tm;
        num += d * (y - ym);
        den += d * d;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Speed, acceleration and yaw rate at the end of a window, the latter two
/// fitted over the last half second.
pub fn ctra_fit(w: &Window) -> (f64, f64, f64) {
    let k = (libm::round(FIT_SPAN / OBS_DT) as usize + 1).min(OBS_LEN);
    let rows = &w.obs[OBS_LEN - k..];
    let speeds: Vec<f64> = rows.iter().map(|o| libm::hypot(o[2], o[3])).collect();
    // unwrap the heading so a fit across ±π stays continuous
    let mut heads = Vec::with_capacity(k);
    for o in rows {
        let h = o[4];
        let h = match heads.last() {
            Some(&p) => p + crate::geometry::normalize_angle(h - p),
            None => h,
        };
        heads.push(h);
    }
    (speeds[k - 1], slope(&speeds, OBS_DT), slope(&heads, OBS_DT))
}

/// CTRA forecast of the 3 s future in the window's reference frame.
pub fn ctra_forecast(w: &Window) -> Trajectory {
    let (v, a, yaw) = ctra_fit(w);
    let last = w.obs[OBS_LEN - 1];
    ctra_predict(Vec2::new(last[0], last[1]), last[4], v, a, yaw, PRED_LEN, PRED_DT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Fine explicit-midpoint integration of the CTRA kinematics.
    fn integrate(v0: f64, a: f64, w: f64, t: f64, h: f64) -> Vec2 {
        let n = libm::round(t / h) as usize;
        let (mut x, mut y) = (0.0, 0.0);
        for i in 0..n {
            let s = (i as f64 + 0.5) * h;
            let v = v0 + a * s;
            x += h * v * libm::cos(w * s);
            y += h * v * libm::sin(w * s);
        }
        Vec2::new(x, y)
    }

    #[test]
    fn straight_constant_speed() {
        let d = ctra_displacement(0.0, 10.0, 0.0, 0.0, 1.0);
        assert!((d - Vec2::new(10.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn closed_form_matches_fine_integration() {
        for (v, a, w) in [(10.0, 0.0, 0.5), (8.0, -1.5, -0.3), (5.0, 0.7, 1.2)] {
            for k in 1..=10 {
                let t = k as f64 * 0.3;
                let d = ctra_displacement(0.0, v, a, w, t);
                let o = integrate(v, a, w, t, 1e-4);
                assert!((d - o).norm() < 1e-6, "{v} {a} {w} {t}: {:?} {:?}", d, o);
            }
        }
    }

    #[test]
    fn continuous_across_the_small_yaw_guard() {
        let a = ctra_predict(Vec2::ZERO, 0.3, 10.0, 1.0, 1e-5, 10, 0.3);
        let b = ctra_predict(Vec2::ZERO, 0.3, 10.0, 1.0, 0.0, 10, 0.3);
        for (p, q) in a.waypoints.iter().zip(&b.waypoints) {
            assert!((*p - *q).norm() < 1e-3);
        }
        // both sides of the guard agree closely
        for w in [0.99e-4, 1.01e-4] {
            let s = ctra_displacement(0.2, 9.0, -0.5, w, 3.0);
            let o = integrate(9.0, -0.5, w, 3.0, 1e-4).rotate(0.2);
            assert!((s - o).norm() < 1e-6);
        }
    }

    #[test]
    fn fit_recovers_rates() {
        let obs = (0..OBS_LEN)
            .map(|k| {
                let t = k as f64 * 0.1;
                let v = 6.0 + 0.5 * t;
                let h = -0.2 * (t - 1.9);
                [0.0, 0.0, v * libm::cos(h), v * libm::sin(h), h, 0.0, 0.0, 0.0, 0.0]
            })
            .collect();
        let w = Window { obs, steer: vec![0.0; OBS_LEN], raster: vec![] };
        let (v, a, yaw) = ctra_fit(&w);
        assert!((v - 6.95).abs() < 1e-12);
        assert!((a - 0.5).abs() < 1e-12);
        assert!((yaw + 0.2).abs() < 1e-12);
    }
}
