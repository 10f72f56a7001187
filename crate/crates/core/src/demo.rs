//! Recorded demonstrations: raw state history plus the grid windows the
//! robot traversed, with their features and visited cells.

use alloc::vec::Vec;

use crate::features::{FeatureMap, GridWindow};
use crate::geometry::Vec2;
use crate::sim::{PedestrianState, RobotState, Scenario};

/// One traversal window: placed when the robot enters it, closed when the
/// robot leaves its footprint.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DemoWindow {
    pub window: GridWindow,
    pub waypoint: Vec2,
    /// Step index of the snapshot the features were computed from.
    pub start_step: usize,
    pub goal_state: usize,
    pub features: FeatureMap,
    /// Distinct consecutive cells visited, 4-connected.
    pub visited: Vec<usize>,
}

impl DemoWindow {
    /// Visited states as a fixed-length MDP path of `horizon + 1` states:
    /// cut at the first goal visit (the goal is absorbing), truncated to the
    /// horizon, then padded by repeating the last state.
    pub fn padded_states(&self, horizon: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::with_capacity(horizon + 1);
        for &s in &self.visited {
            if out.len() == horizon + 1 {
                break;
            }
            out.push(s);
            if s == self.goal_state {
                break;
            }
        }
        let last = *out.last().unwrap_or(&self.goal_state);
        out.resize(horizon + 1, last);
        out
    }
}

/// How a scripted expert misbehaves in its noisy blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NoiseModel {
    /// Plans with the pedestrian layers ignored.
    #[default]
    Careless,
    /// Holds one uniformly random action.
    RandomAction,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum DemoSource {
    ScriptedExpert {
        p_noise: f64,
        seed: u64,
        #[cfg_attr(feature = "serde", serde(default))]
        noise: NoiseModel,
    },
    Teleop,
    Replay,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
    /// The command source stopped before the episode ended.
    Aborted,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Demonstration {
    pub id: u64,
    pub dt: f64,
    pub scenario: Scenario,
    pub source: DemoSource,
    pub outcome: Outcome,
    /// Incomplete demos are excluded from training by default.
    pub complete: bool,
    pub robot_states: Vec<RobotState>,
    pub pedestrian_history: Vec<Vec<PedestrianState>>,
    /// `commands[t]` moved the world from step `t` to `t + 1`.
    pub commands: Vec<Vec2>,
    /// Index into `windows` of the window active at each step.
    pub step_window: Vec<usize>,
    pub windows: Vec<DemoWindow>,
    pub trajectory_length: f64,
    pub n_s: u64,
    pub svcr: f64,
}

impl Demonstration {
    /// A demonstration made only of windows, for gridworld experiments.
    pub fn from_windows(id: u64, windows: Vec<DemoWindow>, svcr: f64) -> Self {
        Self {
            id,
            dt: 0.1,
            scenario: Scenario::circle_crossing(0, 1.0, 0),
            source: DemoSource::Synthetic,
            outcome: Outcome::Success,
            complete: true,
            robot_states: Vec::new(),
            pedestrian_history: Vec::new(),
            commands: Vec::new(),
            step_window: Vec::new(),
            windows,
            trajectory_length: 0.0,
            n_s: 0,
            svcr,
        }
    }

    pub fn steps(&self) -> usize {
        self.robot_states.len()
    }
}

/// `l_R`: summed step displacement of the robot.
pub fn trajectory_length(robot_states: &[RobotState]) -> f64 {
    robot_states
        .windows(2)
        .map(|w| w[1].position.distance(w[0].position))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn window(visited: Vec<usize>, goal_state: usize) -> DemoWindow {
        let w = GridWindow::ahead_of(Vec2::ZERO, 0.0, 3, 1.0);
        DemoWindow {
            window: w,
            waypoint: Vec2::new(2.0, 0.0),
            start_step: 0,
            goal_state,
            features: FeatureMap { window: w, layers: vec![vec![0.0; 9]; 4] },
            visited,
        }
    }

    #[test]
    fn padding_cuts_at_goal_and_repeats() {
        assert_eq!(window(vec![1, 4, 7, 8], 7).padded_states(6), vec![1, 4, 7, 7, 7, 7, 7]);
        assert_eq!(window(vec![1, 0], 7).padded_states(3), vec![1, 0, 0, 0]);
        assert_eq!(window(vec![1, 0, 3, 4, 5, 2], 7).padded_states(2), vec![1, 0, 3]);
    }

    #[test]
    fn length_sums_steps() {
        let r = |x: f64, y: f64| RobotState { position: Vec2::new(x, y), heading: 0.0, speed: 0.0 };
        assert_eq!(trajectory_length(&[r(0.0, 0.0), r(3.0, 4.0), r(3.0, 5.0)]), 6.0);
        assert_eq!(trajectory_length(&[r(1.0, 1.0)]), 0.0);
    }
}
