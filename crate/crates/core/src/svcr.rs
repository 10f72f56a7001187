//! Sudden velocity change rate: how many times pedestrians inside the
//! robot's active window changed velocity abruptly, per metre travelled.

use crate::demo::Demonstration;
use crate::features::GridWindow;
use crate::sim::PedestrianState;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SvcrConfig {
    /// m/s
    pub v_thrd: f64,
    /// rad/s
    pub omega_thrd: f64,
}

impl Default for SvcrConfig {
    fn default() -> Self {
        Self { v_thrd: 0.3, omega_thrd: 0.5 }
    }
}

impl SvcrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_thrd > 0.0 && self.omega_thrd > 0.0) {
            return Err(Error::InvalidParameter { name: "svcr thresholds", reason: "must be > 0" });
        }
        Ok(())
    }
}

/// Whether the step `prev → cur` of one pedestrian is a sudden change.
#[inline]
pub fn is_sudden_change(prev: &PedestrianState, cur: &PedestrianState, config: &SvcrConfig) -> bool {
    let dv = (prev.linear_velocity - cur.linear_velocity).norm();
    let dw = (prev.angular_velocity - cur.angular_velocity).abs();
    dv >= config.v_thrd || dw >= config.omega_thrd
}

/// Counts `(t, n)` events with `t ≥ 1` where pedestrian `n` is inside the
/// window active at `t` and its velocity changed suddenly from `t − 1`.
/// Pedestrians are matched across steps by id.
pub fn count_sudden_changes<'a>(
    history: &[alloc::vec::Vec<PedestrianState>],
    window_at: impl Fn(usize) -> &'a GridWindow,
    config: &SvcrConfig,
) -> u64 {
    let mut n_s = 0;
    for t in 1..history.len() {
        let window = window_at(t);
        let prev = &history[t - 1];
        for (k, cur) in history[t].iter().enumerate() {
            let before = match prev.get(k) {
                Some(p) if p.id == cur.id => Some(p),
                _ => prev.iter().find(|p| p.id == cur.id),
            };
            if let Some(before) = before {
                if window.contains(cur.position) && is_sudden_change(before, cur, config) {
                    n_s += 1;
                }
            }
        }
    }
    n_s
}

/// `(n_s, ε_s)` with `ε_s = n_s / l_R`, and `ε_s = 0` when `l_R = 0`.
pub fn compute_svcr(demo: &Demonstration, config: &SvcrConfig) -> Result<(u64, f64)> {
    if demo.pedestrian_history.len() < 2 {
        return Ok((0, 0.0));
    }
    if demo.step_window.len() != demo.pedestrian_history.len() {
        return Err(Error::StateCount { expected: demo.pedestrian_history.len(), found: demo.step_window.len() });
    }
    if let Some(&bad) = demo.step_window.iter().find(|&&w| w >= demo.windows.len()) {
        return Err(Error::StateOutOfRange { state: bad, states: demo.windows.len() });
    }
    let n_s = count_sudden_changes(
        &demo.pedestrian_history,
        |t| &demo.windows[demo.step_window[t]].window,
        config,
    );
    let rate = if demo.trajectory_length > 0.0 { n_s as f64 / demo.trajectory_length } else { 0.0 };
    Ok((n_s, rate))
}
