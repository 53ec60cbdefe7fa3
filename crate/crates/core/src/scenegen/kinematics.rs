//! Scripted speed and curvature profiles and their RK4 integration.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use crate::geometry::VehicleState;

/// Integration step of the fine simulation, seconds.
pub const SIM_DT: f64 = 0.01;
/// Fine steps per 10 Hz frame.
pub const SUBSTEPS: usize = 10;

/// `0 → 1` cosine ramp on `u ∈ [0, 1]`.
#[inline]
pub fn ramp(u: f64) -> f64 {
    0.5 * (1.0 - libm::cos(PI * u.clamp(0.0, 1.0)))
}

/// Time-based speed and curvature script of one episode. Turns ramp the
/// curvature up, hold it, and ramp it down so that the heading changes by
/// exactly ±π/2; `slow_down` episodes brake to `v_turn` over the ramp-up and
/// accelerate back after the turn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionProfile {
    pub turn_start: f64,
    pub ramp: f64,
    pub hold: f64,
    /// Signed; negative turns right.
    pub kappa_peak: f64,
    pub v_approach: f64,
    pub v_turn: f64,
    pub slow_down: bool,
    pub accel_time: f64,
    pub wheelbase: f64,
}

impl MotionProfile {
    pub fn straight(turn_start: f64, v_approach: f64, v_turn: f64, slow_down: bool, ramp: f64, wheelbase: f64) -> Self {
        MotionProfile {
            turn_start,
            ramp,
            hold: 0.0,
            kappa_peak: 0.0,
            v_approach,
            v_turn,
            slow_down,
            accel_time: 2.0,
            wheelbase,
        }
    }

    /// A 90° turn with peak curvature `1/radius` (reduced if the ramps alone
    /// already exceed 90°). `sign` is +1 for left, −1 for right.
    pub fn turn(
        turn_start: f64,
        v_approach: f64,
        v_turn: f64,
        radius: f64,
        ramp: f64,
        wheelbase: f64,
        sign: f64,
    ) -> Self {
        let mut p = MotionProfile {
            turn_start,
            ramp,
            hold: 0.0,
            kappa_peak: 0.0,
            v_approach,
            v_turn,
            slow_down: true,
            accel_time: 2.0,
            wheelbase,
        };
        let up = p.ramp_up_integral();
        let down = v_turn * ramp * 0.5;
        let k = 1.0 / radius;
        let hold = (FRAC_PI_2 / k - up - down) / v_turn;
        if hold >= 0.0 {
            p.hold = hold;
            p.kappa_peak = sign * k;
        } else {
            p.kappa_peak = sign * FRAC_PI_2 / (up + down);
        }
        p
    }

    /// `∫ v(s)·ramp(s/ramp) ds` over the ramp-up, Simpson's rule.
    fn ramp_up_integral(&self) -> f64 {
        let n = 2000;
        let h = self.ramp / n as f64;
        let f = |i: usize| {
            let s = i as f64 * h;
            self.speed(self.turn_start + s) * ramp(s / self.ramp)
        };
        let mut acc = f(0) + f(n);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 * f(i) } else { 2.0 * f(i) };
        }
        acc * h / 3.0
    }

    pub fn is_turn(&self) -> bool {
        self.kappa_peak != 0.0
    }

    pub fn turn_end(&self) -> f64 {
        self.turn_start + 2.0 * self.ramp + self.hold
    }

    pub fn curvature(&self, t: f64) -> f64 {
        if !self.is_turn() {
            return 0.0;
        }
        let s = t - self.turn_start;
        let down = self.ramp + self.hold;
        if s < 0.0 || s >= down + self.ramp {
            0.0
        } else if s < self.ramp {
            self.kappa_peak * ramp(s / self.ramp)
        } else if s < down {
            self.kappa_peak
        } else {
            self.kappa_peak * (1.0 - ramp((s - down) / self.ramp))
        }
    }

    pub fn speed(&self, t: f64) -> f64 {
        if !self.slow_down {
            return self.v_approach;
        }
        let dv = self.v_approach - self.v_turn;
        let s = t - self.turn_start;
        let end = self.turn_end();
        if s < 0.0 {
            self.v_approach
        } else if s < self.ramp {
            self.v_approach - dv * ramp(s / self.ramp)
        } else if t < end {
            self.v_turn
        } else {
            self.v_turn + dv * ramp((t - end) / self.accel_time)
        }
    }

    /// Front-wheel angle, radians; `θ̇ = v·tan(steer)/L` reproduces the
    /// curvature.
    pub fn steer(&self, t: f64) -> f64 {
        libm::atan(self.curvature(t) * self.wheelbase)
    }

    /// First time `|steer|` exceeds `threshold`, solved on the ramp-up.
    pub fn steer_crossing(&self, threshold: f64) -> Option<f64> {
        if !self.is_turn() {
            return None;
        }
        let r = libm::tan(threshold) / (libm::fabs(self.kappa_peak) * self.wheelbase);
        if r >= 1.0 {
            return None;
        }
        Some(self.turn_start + self.ramp / PI * libm::acos(1.0 - 2.0 * r))
    }
}

/// Integrates the profile from the origin heading +x and returns the state at
/// every 10 Hz frame `0..frames`.
pub fn simulate(p: &MotionProfile, frames: usize) -> Vec<VehicleState> {
    let deriv = |t: f64, th: f64| {
        let v = p.speed(t);
        (v * libm::cos(th), v * libm::sin(th), v * p.curvature(t))
    };
    let (mut x, mut y, mut th) = (0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(frames);
    for k in 0..frames {
        let t = k as f64 * SIM_DT * SUBSTEPS as f64;
        let v = p.speed(t);
        out.push(VehicleState::new(x, y, th, v * libm::cos(th), v * libm::sin(th)));
        for j in 0..SUBSTEPS {
            let t = (k * SUBSTEPS + j) as f64 * SIM_DT;
            let h = SIM_DT;
            let k1 = deriv(t, th);
            let k2 = deriv(t + 0.5 * h, th + 0.5 * h * k1.2);
            let k3 = deriv(t + 0.5 * h, th + 0.5 * h * k2.2);
            let k4 = deriv(t + h, th + h * k3.2);
            x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            y += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            th += h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
            // the script turns exactly 90°; drop the integration residue so
            // the exit road stays axis-aligned
            if p.is_turn() && t + h >= p.turn_end() {
                th = libm::copysign(FRAC_PI_2, p.kappa_peak);
            }
        }
    }
    out
}
