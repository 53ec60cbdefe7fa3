//! Intersection layout and the ego-centred occupancy raster.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{Pose2D, Vec2};

pub const GRID: usize = 32;
pub const CHANNELS: usize = 3;
pub const CELL: f64 = 1.5;
pub const RASTER_LEN: usize = GRID * GRID * CHANNELS;

/// A four-way intersection: the approach road runs along the x axis, the
/// cross road along `x = x_int`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoadLayout {
    pub x_int: f64,
    pub half_width: f64,
    /// Crosswalk band depth, metres, starting half a metre outside the box.
    pub crosswalk: f64,
}

impl RoadLayout {
    pub fn new(x_int: f64, half_width: f64) -> Self {
        RoadLayout { x_int, half_width, crosswalk: 3.0 }
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.x_int, 0.0)
    }

    pub fn on_road(&self, p: Vec2) -> bool {
        libm::fabs(p.y) <= self.half_width || libm::fabs(p.x - self.x_int) <= self.half_width
    }

    /// Crosswalk bands on all four arms.
    pub fn on_crosswalk(&self, p: Vec2) -> bool {
        let d = p - self.center();
        let (ax, ay) = (libm::fabs(d.x), libm::fabs(d.y));
        let lo = self.half_width + 0.5;
        let hi = lo + self.crosswalk;
        (ay <= self.half_width && ax >= lo && ax <= hi) || (ax <= self.half_width && ay >= lo && ay <= hi)
    }
}

#[inline]
pub fn raster_index(channel: usize, i: usize, j: usize) -> usize {
    (channel * GRID + i) * GRID + j
}

/// Ego-frame centre of cell `(i, j)`: rows run from far ahead to behind,
/// columns from left to right.
#[inline]
pub fn cell_center(i: usize, j: usize) -> Vec2 {
    let c = (GRID as f64 - 1.0) * 0.5;
    Vec2::new((c - i as f64) * CELL, (c - j as f64) * CELL)
}

/// Channel-major `3 × 32 × 32` raster: drivable road, crosswalks, and
/// pedestrians (cells within half a cell plus a quarter metre of one).
pub fn rasterize(layout: &RoadLayout, ego: &Pose2D, pedestrians: &[Vec2]) -> Vec<f32> {
    let mut r = vec![0.0f32; RASTER_LEN];
    let peds: Vec<Vec2> = pedestrians.iter().map(|p| ego.to_local(*p)).collect();
    let reach = 0.5 * CELL + 0.25;
    for i in 0..GRID {
        for j in 0..GRID {
            let local = cell_center(i, j);
            let world = ego.to_world(local);
            if layout.on_road(world) {
                r[raster_index(0, i, j)] = 1.0;
            }
            if layout.on_crosswalk(world) {
                r[raster_index(1, i, j)] = 1.0;
            }
            if peds.iter().any(|p| libm::fabs(p.x - local.x) <= reach && libm::fabs(p.y - local.y) <= reach) {
                r[raster_index(2, i, j)] = 1.0;
            }
        }
    }
    r
}
