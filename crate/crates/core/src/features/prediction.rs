//! Predicted-trajectory layer with a pluggable pedestrian predictor.

use alloc::vec;
use alloc::vec::Vec;

use super::GridWindow;
use crate::geometry::Vec2;
use crate::sim::PedestrianState;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryPrediction {
    pub pedestrian_id: u32,
    pub horizon_steps: usize,
    pub predicted_positions: Vec<Vec2>,
}

/// Anything that maps current pedestrian states (plus their past positions)
/// to future positions, one per step for `horizon` steps.
pub trait TrajectoryPredictor {
    /// `history[i]` holds past positions of `pedestrians[i]`, oldest first;
    /// it may be empty or shorter than `pedestrians`.
    fn predict(&self, pedestrians: &[PedestrianState], history: &[Vec<Vec2>], horizon: usize) -> Vec<TrajectoryPrediction>;
}

/// Extrapolates `position + k·dt·velocity` for `k = 1..=horizon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantVelocity {
    pub dt: f64,
}

impl TrajectoryPredictor for ConstantVelocity {
    fn predict(&self, pedestrians: &[PedestrianState], _history: &[Vec<Vec2>], horizon: usize) -> Vec<TrajectoryPrediction> {
        pedestrians
            .iter()
            .map(|p| TrajectoryPrediction {
                pedestrian_id: p.id,
                horizon_steps: horizon,
                predicted_positions: (1..=horizon)
                    .map(|k| p.position + p.linear_velocity * (k as f64 * self.dt))
                    .collect(),
            })
            .collect()
    }
}

/// Default predictor entry point.
pub fn predict_trajectories(
    pedestrians: &[PedestrianState],
    history: &[Vec<Vec2>],
    horizon: usize,
    dt: f64,
) -> Vec<TrajectoryPrediction> {
    ConstantVelocity { dt }.predict(pedestrians, history, horizon.max(1))
}

/// Distinct window cells a trajectory enters, in order of first entry.
pub fn entered_cells(window: &GridWindow, positions: &[Vec2]) -> Vec<usize> {
    let mut seen: Vec<usize> = Vec::new();
    for &p in positions {
        if let Some(s) = window.state_of(p) {
            if !seen.contains(&s) {
                seen.push(s);
            }
        }
    }
    seen
}

/// Raw layer: the `t`-th distinct cell (from 0) entered by a pedestrian's
/// prediction accumulates `−gamma_pred^t`.
pub fn prediction_layer(window: &GridWindow, predictions: &[TrajectoryPrediction], gamma_pred: f64) -> Vec<f64> {
    let mut layer = vec![0.0; window.state_count()];
    for prediction in predictions {
        let mut weight = 1.0;
        for s in entered_cells(window, &prediction.predicted_positions) {
            layer[s] -= weight;
            weight *= gamma_pred;
        }
    }
    layer
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walker(position: Vec2, velocity: Vec2) -> PedestrianState {
        PedestrianState { id: 3, position, linear_velocity: velocity, angular_velocity: 0.0, goal: position }
    }

    #[test]
    fn stationary_prediction_repeats_position() {
        let p = walker(Vec2::new(1.0, 2.0), Vec2::ZERO);
        let pred = predict_trajectories(&[p], &[], 4, 0.1);
        assert_eq!(pred[0].predicted_positions, vec![Vec2::new(1.0, 2.0); 4]);
        assert_eq!(pred[0].horizon_steps, 4);
    }

    #[test]
    fn linear_motion_advances_per_step() {
        let p = walker(Vec2::ZERO, Vec2::new(1.0, 0.0));
        let pred = predict_trajectories(&[p], &[], 5, 0.1);
        for (k, q) in pred[0].predicted_positions.iter().enumerate() {
            assert!((q.x - 0.1 * (k + 1) as f64).abs() < 1e-15);
            assert_eq!(q.y, 0.0);
        }
    }

    #[test]
    fn no_pedestrians_gives_zero_layer() {
        let w = GridWindow::ahead_of(Vec2::ZERO, 0.0, 3, 1.0);
        assert!(prediction_layer(&w, &[], 0.9).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_entered_cell_weighs_one_then_gamma() {
        let w = GridWindow::new(Vec2::ZERO, 0.0, 3, 1.0).unwrap();
        // enters (0,0) → (1,0), re-enters (0,0) which must not count twice
        let pred = TrajectoryPrediction {
            pedestrian_id: 0,
            horizon_steps: 3,
            predicted_positions: vec![Vec2::new(0.5, 0.5), Vec2::new(1.5, 0.5), Vec2::new(0.5, 0.5)],
        };
        let layer = prediction_layer(&w, &[pred.clone()], 0.9);
        assert_eq!(layer[0], -1.0);
        assert_eq!(layer[3], -0.9);
        // a second pedestrian entering (1,0) first
        let other = TrajectoryPrediction { predicted_positions: vec![Vec2::new(1.5, 0.5)], ..pred.clone() };
        let layer = prediction_layer(&w, &[pred, other], 0.9);
        assert_eq!(layer[3], -(1.0 + 0.9));
    }
}
