//! Per-cell feature stack over the robot-local grid window.
//!
//! Four layers, in this order: distance to the waypoint, unknown obstacles,
//! predicted pedestrian trajectories and social distance. The goal layer is
//! min-max scaled to `[0, 1]`; the other layers are scaled by
//! `max(1, max|φ|)` so that zero stays zero and values land in `[−1, 1]`.
//! A constant layer always normalises to zeros.

mod obstacle;
mod prediction;
mod social;
mod window;

use alloc::vec::Vec;

pub use obstacle::{bresenham, obstacle_layer, range_scan, RangeScanParams};
pub use prediction::{entered_cells, predict_trajectories, prediction_layer, ConstantVelocity, TrajectoryPrediction, TrajectoryPredictor};
pub use social::{crowd_density, social_distance, social_layer, social_radii, social_value, SocialDistanceParams, DENSITY_ASYMPTOTE};
pub use window::GridWindow;

use crate::geometry::Vec2;
use crate::sim::WorldState;
use crate::Result;

pub const LAYER_NAMES: [&str; 4] = ["goal_distance", "obstacle", "prediction", "social"];
pub const GOAL_LAYER: usize = 0;
pub const OBSTACLE_LAYER: usize = 1;
pub const PREDICTION_LAYER: usize = 2;
pub const SOCIAL_LAYER: usize = 3;

/// Layers whose value range is below this are treated as constant.
pub const DEGENERATE_RANGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FeatureConfig {
    pub cells_per_side: usize,
    pub resolution: f64,
    pub gamma_pred: f64,
    pub prediction_horizon: usize,
    pub social: SocialDistanceParams,
    pub scan: RangeScanParams,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            cells_per_side: 3,
            resolution: 1.0,
            gamma_pred: 0.9,
            prediction_horizon: 20,
            social: SocialDistanceParams::default(),
            scan: RangeScanParams::default(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_pred > 0.0 && self.gamma_pred < 1.0) {
            return Err(crate::Error::InvalidParameter { name: "gamma_pred", reason: "must lie in (0, 1)" });
        }
        if self.prediction_horizon == 0 {
            return Err(crate::Error::InvalidParameter { name: "prediction_horizon", reason: "must be >= 1" });
        }
        self.social.validate()?;
        GridWindow::new(Vec2::ZERO, 0.0, self.cells_per_side, self.resolution).map(|_| ())
    }
}

/// Stacked per-cell features; `layers[k][s]` is layer `k` at state `s`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureMap {
    pub window: GridWindow,
    pub layers: Vec<Vec<f64>>,
}

impl FeatureMap {
    pub fn n_features(&self) -> usize {
        self.layers.len()
    }

    pub fn state_count(&self) -> usize {
        self.window.state_count()
    }

    /// Writes the feature vector of `state` into `out`.
    pub fn features_at(&self, state: usize, out: &mut [f64]) {
        for (o, layer) in out.iter_mut().zip(&self.layers) {
            *o = layer[state];
        }
    }

    pub fn feature_vector(&self, state: usize) -> Vec<f64> {
        self.layers.iter().map(|l| l[state]).collect()
    }
}

/// Euclidean distance from each cell centre to `waypoint`, min-max scaled
/// to `[0, 1]`.
pub fn goal_distance_layer(window: &GridWindow, waypoint: Vec2) -> Vec<f64> {
    let raw: Vec<f64> = raw_goal_distances(window, waypoint);
    let (lo, hi) = min_max(&raw);
    if hi - lo < DEGENERATE_RANGE {
        return alloc::vec![0.0; raw.len()];
    }
    raw.iter().map(|d| (d - lo) / (hi - lo)).collect()
}

pub fn raw_goal_distances(window: &GridWindow, waypoint: Vec2) -> Vec<f64> {
    (0..window.state_count())
        .map(|s| window.state_center(s).distance(waypoint))
        .collect()
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Zero-preserving scaling into `[−1, 1]`; constant layers become zeros.
pub fn normalize_signed(layer: &mut [f64]) {
    let (lo, hi) = min_max(layer);
    if !(hi - lo >= DEGENERATE_RANGE) {
        layer.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let scale = lo.abs().max(hi.abs()).max(1.0);
    layer.iter_mut().for_each(|v| *v /= scale);
}

/// Builds the four-layer map with the constant-velocity predictor.
pub fn build_feature_map(world: &WorldState, window: &GridWindow, waypoint: Vec2, config: &FeatureConfig) -> FeatureMap {
    let predictor = ConstantVelocity { dt: world.clock.dt };
    build_feature_map_with(world, window, waypoint, config, &predictor, &[])
}

pub fn build_feature_map_with(
    world: &WorldState,
    window: &GridWindow,
    waypoint: Vec2,
    config: &FeatureConfig,
    predictor: &dyn TrajectoryPredictor,
    history: &[Vec<Vec2>],
) -> FeatureMap {
    let goal = goal_distance_layer(window, waypoint);
    let mut obstacles = obstacle_layer(window, &world.obstacles, world.robot.position, &config.scan);
    let predictions = predictor.predict(&world.pedestrians, history, config.prediction_horizon);
    let mut prediction = prediction_layer(window, &predictions, config.gamma_pred);
    let mut social = social_layer(window, &world.pedestrians, &config.social);
    normalize_signed(&mut obstacles);
    normalize_signed(&mut prediction);
    normalize_signed(&mut social);
    FeatureMap { window: *window, layers: alloc::vec![goal, obstacles, prediction, social] }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goal_layer_hand_table() {
        // window centred on the origin facing +x; waypoint two cells right of
        // the centre cell (1,1) ⇒ at local (1.5, 3.5)... i.e. world (1, -2).
        let w = GridWindow::ahead_of(Vec2::ZERO, 0.0, 3, 1.0);
        let waypoint = w.cell_center(1, 1) - w.left() * 2.0;
        let raw = raw_goal_distances(&w, waypoint);
        let s5 = libm::sqrt(5.0);
        let expected = [
            // row 0: cols 0,1,2: lateral offsets 1,2,3 from the waypoint, forward offset 1
            libm::sqrt(2.0), s5, libm::sqrt(10.0),
            1.0, 2.0, 3.0,
            libm::sqrt(2.0), s5, libm::sqrt(10.0),
        ];
        for (a, b) in raw.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn waypoint_on_cell_centre_is_layer_minimum() {
        let w = GridWindow::ahead_of(Vec2::ZERO, 0.3, 3, 1.0);
        let layer = goal_distance_layer(&w, w.cell_center(2, 0));
        assert_eq!(layer[w.state_index(2, 0)], 0.0);
        assert!(layer.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(layer.iter().any(|&v| v == 1.0));
    }

    #[test]
    fn constant_layers_become_zero() {
        let mut l = [0.4; 9];
        normalize_signed(&mut l);
        assert!(l.iter().all(|&v| v == 0.0));
        let mut l = [0.0, -3.0, -1.5];
        normalize_signed(&mut l);
        assert_eq!(l, [0.0, -1.0, -0.5]);
        let mut l = [0.0, -0.5];
        normalize_signed(&mut l);
        assert_eq!(l, [0.0, -0.5]);
    }
}
