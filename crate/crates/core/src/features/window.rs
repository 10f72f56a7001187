use crate::geometry::Vec2;
use crate::{Error, Result};

/// An `m × m` lattice of square cells in the world frame.
///
/// Local coordinates are `u` (forward, along `orientation`) and `w`
/// (to the left). Cell `(row, col)` covers `u ∈ [row·res, (row+1)·res)` and
/// `w ∈ [col·res, (col+1)·res)`; its MDP state index is `row·m + col`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridWindow {
    pub origin: Vec2,
    pub orientation: f64,
    pub cells_per_side: usize,
    pub resolution: f64,
}

impl GridWindow {
    pub fn new(origin: Vec2, orientation: f64, cells_per_side: usize, resolution: f64) -> Result<Self> {
        let w = Self { origin, orientation, cells_per_side, resolution };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells_per_side < 2 {
            return Err(Error::InvalidParameter { name: "cells_per_side", reason: "must be >= 2" });
        }
        if !(self.resolution > 0.0) || !self.origin.is_finite() || !self.orientation.is_finite() {
            return Err(Error::InvalidParameter { name: "window", reason: "resolution must be > 0 and pose finite" });
        }
        Ok(())
    }

    /// Window with the robot at the centre of the middle cell of row 0,
    /// extending forward along `bearing`.
    pub fn ahead_of(robot: Vec2, bearing: f64, cells_per_side: usize, resolution: f64) -> Self {
        let forward = Vec2::from_angle(bearing);
        let left = forward.perp();
        let half = cells_per_side as f64 * resolution * 0.5;
        Self {
            origin: robot - forward * (0.5 * resolution) - left * half,
            orientation: bearing,
            cells_per_side,
            resolution,
        }
    }

    #[inline]
    pub fn state_count(&self) -> usize {
        self.cells_per_side * self.cells_per_side
    }

    pub fn side_length(&self) -> f64 {
        self.cells_per_side as f64 * self.resolution
    }

    pub fn footprint_area(&self) -> f64 {
        let s = self.side_length();
        s * s
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.orientation)
    }

    pub fn left(&self) -> Vec2 {
        self.forward().perp()
    }

    /// World point → `(u, w)` local coordinates.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let d = p - self.origin;
        Vec2::new(d.dot(self.forward()), d.dot(self.left()))
    }

    pub fn to_world(&self, local: Vec2) -> Vec2 {
        self.origin + self.forward() * local.x + self.left() * local.y
    }

    /// Integer cell coordinates of a world point, unbounded (may lie outside
    /// the window).
    pub fn lattice_coords(&self, p: Vec2) -> (i64, i64) {
        let l = self.to_local(p);
        (
            libm::floor(l.x / self.resolution) as i64,
            libm::floor(l.y / self.resolution) as i64,
        )
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        self.lattice_to_cell(self.lattice_coords(p))
    }

    pub fn lattice_to_cell(&self, (row, col): (i64, i64)) -> Option<(usize, usize)> {
        let m = self.cells_per_side as i64;
        ((0..m).contains(&row) && (0..m).contains(&col)).then(|| (row as usize, col as usize))
    }

    pub fn state_of(&self, p: Vec2) -> Option<usize> {
        self.cell_of(p).map(|(r, c)| self.state_index(r, c))
    }

    #[inline]
    pub fn state_index(&self, row: usize, col: usize) -> usize {
        row * self.cells_per_side + col
    }

    #[inline]
    pub fn cell_of_state(&self, state: usize) -> (usize, usize) {
        (state / self.cells_per_side, state % self.cells_per_side)
    }

    /// Whether `p` lies in the metric footprint.
    pub fn contains(&self, p: Vec2) -> bool {
        self.cell_of(p).is_some()
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Vec2 {
        self.to_world(Vec2::new(
            (row as f64 + 0.5) * self.resolution,
            (col as f64 + 0.5) * self.resolution,
        ))
    }

    pub fn state_center(&self, state: usize) -> Vec2 {
        let (r, c) = self.cell_of_state(state);
        self.cell_center(r, c)
    }

    /// Cell corners in world frame, counter-clockwise.
    pub fn cell_corners(&self, row: usize, col: usize) -> [Vec2; 4] {
        let (u, w, r) = (row as f64 * self.resolution, col as f64 * self.resolution, self.resolution);
        [
            self.to_world(Vec2::new(u, w)),
            self.to_world(Vec2::new(u + r, w)),
            self.to_world(Vec2::new(u + r, w + r)),
            self.to_world(Vec2::new(u, w + r)),
        ]
    }

    /// Window outline in world frame, counter-clockwise.
    pub fn outline(&self) -> [Vec2; 4] {
        let s = self.side_length();
        [
            self.origin,
            self.to_world(Vec2::new(s, 0.0)),
            self.to_world(Vec2::new(s, s)),
            self.to_world(Vec2::new(0.0, s)),
        ]
    }

    /// Index of the cell whose centre is closest to `target` (lowest index on
    /// ties).
    pub fn nearest_state(&self, target: Vec2) -> usize {
        let mut best = (0, f64::INFINITY);
        for s in 0..self.state_count() {
            let d = self.state_center(s).distance(target);
            if d < best.1 {
                best = (s, d);
            }
        }
        best.0
    }
}
