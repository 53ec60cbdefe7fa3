//! Planar frames, vehicle states, trajectories and oriented rectangles.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Neg, Sub};

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = a - two_pi * libm::floor(a / two_pi);
    // r in [0, 2π); rounding can land exactly on 2π
    if r >= two_pi {
        r -= two_pi;
    }
    if r > PI {
        r - two_pi
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector at angle `a`.
    #[inline]
    pub fn from_angle(a: f64) -> Self {
        Vec2::new(libm::cos(a), libm::sin(a))
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    #[inline]
    pub fn angle(self) -> f64 {
        libm::atan2(self.y, self.x)
    }

    /// Counter-clockwise rotation by `a`.
    #[inline]
    pub fn rotate(self, a: f64) -> Vec2 {
        let (s, c) = (libm::sin(a), libm::cos(a));
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Position and heading. The heading is normalized on construction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose2D { x, y, heading: normalize_angle(heading) }
    }

    #[inline]
    pub fn heading(&self) -> f64 {
        self.heading
    }

    #[inline]
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Maps a world point into the frame whose origin is this pose.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.position()).rotate(-self.heading)
    }

    /// Inverse of [`Pose2D::to_local`].
    pub fn to_world(&self, p: Vec2) -> Vec2 {
        p.rotate(self.heading) + self.position()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleState {
    pub pose: Pose2D,
    pub vx: f64,
    pub vy: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64, vx: f64, vy: f64) -> Self {
        VehicleState { pose: Pose2D::new(x, y, heading), vx, vy }
    }

    #[inline]
    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    #[inline]
    pub fn speed(&self) -> f64 {
        self.velocity().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.pose.x.is_finite()
            && self.pose.y.is_finite()
            && self.pose.heading.is_finite()
            && self.vx.is_finite()
            && self.vy.is_finite()
    }

    /// Expresses this state in the frame of `anchor`.
    pub fn relative_to(&self, anchor: &Pose2D) -> VehicleState {
        let p = anchor.to_local(self.pose.position());
        let v = self.velocity().rotate(-anchor.heading);
        VehicleState { pose: Pose2D::new(p.x, p.y, self.pose.heading - anchor.heading), vx: v.x, vy: v.y }
    }

    /// Inverse of [`VehicleState::relative_to`].
    pub fn absolute_from(&self, anchor: &Pose2D) -> VehicleState {
        let p = anchor.to_world(self.pose.position());
        let v = self.velocity().rotate(anchor.heading);
        VehicleState { pose: Pose2D::new(p.x, p.y, self.pose.heading + anchor.heading), vx: v.x, vy: v.y }
    }
}

/// Rigid transform of world-frame states into the frame of `anchor`.
pub fn to_ego_frame(states: &[VehicleState], anchor: &VehicleState) -> Vec<VehicleState> {
    states.iter().map(|s| s.relative_to(&anchor.pose)).collect()
}

/// Inverse of [`to_ego_frame`].
pub fn from_ego_frame(states: &[VehicleState], anchor: &VehicleState) -> Vec<VehicleState> {
    states.iter().map(|s| s.absolute_from(&anchor.pose)).collect()
}

/// Waypoints sampled every `step` seconds, the first one `step` after the
/// reference time.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    pub waypoints: Vec<Vec2>,
    pub step: f64,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Vec2>, step: f64) -> Self {
        Trajectory { waypoints, step }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Direction of travel into waypoint `i` (0-based), taken from the chord
    /// from the previous waypoint (the origin for `i == 0`). Falls back to the
    /// previous chord, then to `fallback`, when a chord is shorter than `eps`.
    pub fn chord_heading(&self, i: usize, fallback: f64, eps: f64) -> f64 {
        let mut j = i as isize;
        while j >= 0 {
            let cur = self.waypoints[j as usize];
            let prev = if j == 0 { Vec2::ZERO } else { self.waypoints[j as usize - 1] };
            let d = cur - prev;
            if d.norm() >= eps {
                return d.angle();
            }
            j -= 1;
        }
        fallback
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Vec2,
    heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    /// `length` runs along `heading`, `width` across it. Both must be positive.
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        debug_assert!(length > 0.0 && width > 0.0, "rectangle extents must be positive");
        OrientedRect { center, heading: normalize_angle(heading), length, width }
    }

    #[inline]
    pub fn heading(&self) -> f64 {
        self.heading
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// Unit axes (along, across).
    pub fn axes(&self) -> [Vec2; 2] {
        let u = Vec2::from_angle(self.heading);
        [u, u.perp()]
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let [u, v] = self.axes();
        let a = u * (self.length * 0.5);
        let b = v * (self.width * 0.5);
        let c = self.center;
        [c + a + b, c - a + b, c - a - b, c + a - b]
    }

    pub fn translated(&self, d: Vec2) -> OrientedRect {
        OrientedRect { center: self.center + d, ..*self }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let [u, v] = self.axes();
        let d = p - self.center;
        libm::fabs(d.dot(u)) <= self.length * 0.5 && libm::fabs(d.dot(v)) <= self.width * 0.5
    }
}

fn project(corners: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in corners {
        let p = c.dot(axis);
        lo = lo.min(p);
        hi = hi.max(p);
    }
    (lo, hi)
}

/// Separating-axis test over the four edge normals. Closed rectangles:
/// touching counts as intersecting.
pub fn obb_intersect(a: &OrientedRect, b: &OrientedRect) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    let [a0, a1] = a.axes();
    let [b0, b1] = b.axes();
    for axis in [a0, a1, b0, b1] {
        let (alo, ahi) = project(&ca, axis);
        let (blo, bhi) = project(&cb, axis);
        if ahi < blo || bhi < alo {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalize_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!(close(normalize_angle(3.0 * PI / 2.0), -PI / 2.0, 1e-15));
        assert!(close(normalize_angle(-7.0), -7.0 + 2.0 * PI, 1e-12));
        assert_eq!(normalize_angle(0.0), 0.0);
    }

    #[test]
    fn anchor_maps_to_origin() {
        let anchor = VehicleState::new(3.0, -2.0, 0.7, 4.0, 1.0);
        let e = to_ego_frame(&[anchor], &anchor)[0];
        assert!(close(e.pose.x, 0.0, 1e-12) && close(e.pose.y, 0.0, 1e-12));
        assert_eq!(e.pose.heading(), 0.0);
    }

    #[test]
    fn quarter_turn_anchor() {
        let anchor = VehicleState::new(0.0, 0.0, PI / 2.0, 0.0, 0.0);
        let p = VehicleState::new(1.0, 0.0, 0.0, 1.0, 0.0);
        let e = to_ego_frame(&[p], &anchor)[0];
        assert!(close(e.pose.x, 0.0, 1e-12));
        assert!(close(e.pose.y, -1.0, 1e-12));
        assert!(close(e.vx, 0.0, 1e-12) && close(e.vy, -1.0, 1e-12));
    }

    #[test]
    fn identical_and_far_rects() {
        let a = OrientedRect::new(Vec2::ZERO, 0.3, 2.0, 1.0);
        assert!(obb_intersect(&a, &a));
        let u = OrientedRect::new(Vec2::ZERO, 0.0, 1.0, 1.0);
        let w = OrientedRect::new(Vec2::new(10.0, 0.0), 0.0, 1.0, 1.0);
        assert!(!obb_intersect(&u, &w));
    }

    #[test]
    fn touching_rects_intersect() {
        let u = OrientedRect::new(Vec2::ZERO, 0.0, 1.0, 1.0);
        let w = OrientedRect::new(Vec2::new(1.0, 0.0), 0.0, 1.0, 1.0);
        assert!(obb_intersect(&u, &w));
        let gap = OrientedRect::new(Vec2::new(1.0 + 1e-9, 0.0), 0.0, 1.0, 1.0);
        assert!(!obb_intersect(&u, &gap));
    }

    #[test]
    fn diagonal_separation_needs_second_box_axes() {
        // Separated only along the rotated box's own normal.
        let a = OrientedRect::new(Vec2::ZERO, 0.0, 2.0, 2.0);
        let b = OrientedRect::new(Vec2::new(1.9, 1.9), PI / 4.0, 2.0, 0.2);
        assert!(!obb_intersect(&a, &b));
    }

    #[test]
    fn chord_heading_fallbacks() {
        let t = Trajectory::new(vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0)], 0.3);
        assert_eq!(t.chord_heading(0, 0.25, 1e-6), 0.25);
        assert!(close(t.chord_heading(1, 0.0, 1e-6), PI / 2.0, 1e-12));
    }

    fn rect_strategy() -> impl Strategy<Value = OrientedRect> {
        (-5.0..5.0f64, -5.0..5.0f64, -4.0..4.0f64, 0.1..4.0f64, 0.1..4.0f64)
            .prop_map(|(x, y, h, l, w)| OrientedRect::new(Vec2::new(x, y), h, l, w))
    }

    proptest! {
        #[test]
        fn ego_frame_round_trip(
            x in -1e3..1e3f64, y in -1e3..1e3f64, h in -10.0..10.0f64,
            ax in -1e3..1e3f64, ay in -1e3..1e3f64, ah in -10.0..10.0f64,
            vx in -30.0..30.0f64, vy in -30.0..30.0f64,
        ) {
            let s = VehicleState::new(x, y, h, vx, vy);
            let anchor = VehicleState::new(ax, ay, ah, 0.0, 0.0);
            let back = from_ego_frame(&to_ego_frame(&[s], &anchor), &anchor)[0];
            prop_assert!(close(back.pose.x, s.pose.x, 1e-12 * 1e3));
            prop_assert!(close(back.pose.y, s.pose.y, 1e-12 * 1e3));
            prop_assert!(close(normalize_angle(back.pose.heading() - s.pose.heading()), 0.0, 1e-12));
            prop_assert!(close(back.vx, s.vx, 1e-12 * 30.0));
            prop_assert!(close(back.vy, s.vy, 1e-12 * 30.0));
        }

        #[test]
        fn obb_symmetric(a in rect_strategy(), b in rect_strategy()) {
            prop_assert_eq!(obb_intersect(&a, &b), obb_intersect(&b, &a));
        }

        #[test]
        fn obb_rigid_invariant(a in rect_strategy(), b in rect_strategy(),
                               tx in -50.0..50.0f64, ty in -50.0..50.0f64, r in -4.0..4.0f64) {
            let pose = Pose2D::new(tx, ty, r);
            let move_rect = |q: &OrientedRect| OrientedRect::new(pose.to_world(q.center), q.heading() + r, q.length, q.width);
            // skip near-tangent configurations whose answer flips under rounding
            let margin = sat_margin(&a, &b);
            prop_assume!(margin.abs() > 1e-9);
            prop_assert_eq!(obb_intersect(&a, &b), obb_intersect(&move_rect(&a), &move_rect(&b)));
        }
    }

    /// Largest separation over the four SAT axes (negative when overlapping).
    fn sat_margin(a: &OrientedRect, b: &OrientedRect) -> f64 {
        let ca = a.corners();
        let cb = b.corners();
        let mut best = f64::NEG_INFINITY;
        for axis in a.axes().into_iter().chain(b.axes()) {
            let (alo, ahi) = project(&ca, axis);
            let (blo, bhi) = project(&cb, axis);
            best = best.max((blo - ahi).max(alo - bhi));
        }
        best
    }

    #[test]
    fn tangent_pair_is_transform_invariant() {
        let a = OrientedRect::new(Vec2::ZERO, 0.0, 2.0, 1.0);
        let b = OrientedRect::new(Vec2::new(2.0, 0.0), 0.0, 2.0, 1.0);
        let moved = |q: &OrientedRect| q.translated(Vec2::new(0.5, 0.25));
        assert!(obb_intersect(&a, &b));
        assert!(obb_intersect(&moved(&a), &moved(&b)));
    }
}
