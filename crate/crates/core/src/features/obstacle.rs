//! Unknown-obstacle layer: synthetic range returns rasterised with
//! Bresenham traversal.

use alloc::vec;
use alloc::vec::Vec;

use super::GridWindow;
use crate::geometry::{Rect, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RangeScanParams {
    pub ray_step_deg: f64,
    pub max_range: f64,
}

impl Default for RangeScanParams {
    fn default() -> Self {
        Self { ray_step_deg: 1.0, max_range: 10.0 }
    }
}

/// Integer cells on the line from `a` to `b`, both inclusive.
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let dx = (b.0 - x).abs();
    let dy = -(b.1 - y).abs();
    let sx = if x < b.0 { 1 } else { -1 };
    let sy = if y < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy) as usize + 1);
    loop {
        out.push((x, y));
        if (x, y) == b {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Nearest hit point of each ray, `None` when the ray leaves `max_range`
/// without touching an obstacle.
pub fn range_scan(origin: Vec2, obstacles: &[Rect], params: &RangeScanParams) -> Vec<Option<Vec2>> {
    let rays = libm::round(360.0 / params.ray_step_deg) as usize;
    (0..rays)
        .map(|k| {
            let dir = Vec2::from_angle((k as f64 * params.ray_step_deg).to_radians());
            obstacles
                .iter()
                .filter_map(|o| o.ray_hit(origin, dir))
                .filter(|&t| t <= params.max_range)
                .fold(None, |best: Option<f64>, t| Some(best.map_or(t, |b| b.min(t))))
                .map(|t| origin + dir * t)
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Occupancy {
    Unknown,
    Free,
    Occupied,
}

/// Binary layer: 1 for cells holding a range return, 0 for free or unseen
/// cells.
pub fn obstacle_layer(window: &GridWindow, obstacles: &[Rect], robot_position: Vec2, params: &RangeScanParams) -> Vec<f64> {
    let mut grid = vec![Occupancy::Unknown; window.state_count()];
    if obstacles.is_empty() {
        return vec![0.0; window.state_count()];
    }
    let robot_cell = window.lattice_coords(robot_position);
    for hit in range_scan(robot_position, obstacles, params).into_iter().flatten() {
        let hit_cell = window.lattice_coords(hit);
        let line = bresenham(robot_cell, hit_cell);
        let (last, traversed) = line.split_last().expect("line has at least one cell");
        for &c in traversed {
            if let Some((r, col)) = window.lattice_to_cell(c) {
                let s = window.state_index(r, col);
                if grid[s] == Occupancy::Unknown {
                    grid[s] = Occupancy::Free;
                }
            }
        }
        if let Some((r, col)) = window.lattice_to_cell(*last) {
            grid[window.state_index(r, col)] = Occupancy::Occupied;
        }
    }
    grid.into_iter()
        .map(|o| if o == Occupancy::Occupied { 1.0 } else { 0.0 })
        .collect()
}
