//! The local grid MDP: deterministic moves between adjacent cells, value
//! iteration for planning, and the soft (maximum-entropy) backward pass with
//! forward visitation propagation used by the IRL gradient.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Action {
    /// +1 row (forward).
    Up,
    Down,
    /// +1 column (towards the window's left side).
    Left,
    Right,
    Stop,
    UpLeft,
    UpRight,
    DownLeft,
    DownRight,
}

const CARDINAL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stop];
const WITH_DIAGONALS: [Action; 9] = [
    Action::Up,
    Action::Down,
    Action::Left,
    Action::Right,
    Action::Stop,
    Action::UpLeft,
    Action::UpRight,
    Action::DownLeft,
    Action::DownRight,
];

impl Action {
    /// `(Δrow, Δcol)` of the move.
    pub fn offset(self) -> (i64, i64) {
        match self {
            Action::Up => (1, 0),
            Action::Down => (-1, 0),
            Action::Left => (0, 1),
            Action::Right => (0, -1),
            Action::Stop => (0, 0),
            Action::UpLeft => (1, 1),
            Action::UpRight => (1, -1),
            Action::DownLeft => (-1, 1),
            Action::DownRight => (-1, -1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ActionSet {
    #[default]
    Cardinal,
    WithDiagonals,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMdp {
    side: usize,
    action_set: ActionSet,
    gamma: f64,
    goal: Option<usize>,
}

impl GridMdp {
    pub fn new(side: usize, gamma: f64) -> Result<Self> {
        if side < 1 {
            return Err(Error::InvalidParameter { name: "side", reason: "must be >= 1" });
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter { name: "gamma", reason: "must lie in [0, 1)" });
        }
        Ok(Self { side, action_set: ActionSet::Cardinal, gamma, goal: None })
    }

    /// Makes `goal` absorbing: every action taken there stays there.
    pub fn with_goal(mut self, goal: usize) -> Result<Self> {
        self.check_state(goal)?;
        self.goal = Some(goal);
        Ok(self)
    }

    pub fn with_action_set(mut self, action_set: ActionSet) -> Self {
        self.action_set = action_set;
        self
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn goal(&self) -> Option<usize> {
        self.goal
    }

    pub fn state_count(&self) -> usize {
        self.side * self.side
    }

    pub fn actions(&self) -> &'static [Action] {
        match self.action_set {
            ActionSet::Cardinal => &CARDINAL,
            ActionSet::WithDiagonals => &WITH_DIAGONALS,
        }
    }

    pub fn check_state(&self, state: usize) -> Result<()> {
        if state < self.state_count() {
            Ok(())
        } else {
            Err(Error::StateOutOfRange { state, states: self.state_count() })
        }
    }

    /// Deterministic successor; off-grid moves and the goal state map to self.
    pub fn transition(&self, state: usize, action: Action) -> usize {
        if self.goal == Some(state) {
            return state;
        }
        let (row, col) = ((state / self.side) as i64, (state % self.side) as i64);
        let (dr, dc) = action.offset();
        let (r, c) = (row + dr, col + dc);
        let m = self.side as i64;
        if (0..m).contains(&r) && (0..m).contains(&c) {
            (r * m + c) as usize
        } else {
            state
        }
    }

    fn check_rewards(&self, rewards: &[f64]) -> Result<()> {
        if rewards.len() != self.state_count() {
            return Err(Error::StateCount { expected: self.state_count(), found: rewards.len() });
        }
        Ok(())
    }
}

/// Per-state argmax action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyPolicy {
    pub actions: Vec<Action>,
}

impl GreedyPolicy {
    pub fn action(&self, state: usize) -> Action {
        self.actions[state]
    }
}

/// One Bellman optimality sweep: `V'(s) = r(s) + γ·max_a V(T(s, a))`.
pub fn bellman_backup(mdp: &GridMdp, rewards: &[f64], values: &[f64]) -> Vec<f64> {
    (0..mdp.state_count())
        .map(|s| {
            let best = mdp
                .actions()
                .iter()
                .map(|&a| values[mdp.transition(s, a)])
                .fold(f64::NEG_INFINITY, f64::max);
            rewards[s] + mdp.gamma() * best
        })
        .collect()
}

/// Greedy policy w.r.t. `values`; ties go to the lowest action index. The
/// absorbing goal always stops.
pub fn greedy_policy(mdp: &GridMdp, values: &[f64]) -> GreedyPolicy {
    let actions = (0..mdp.state_count())
        .map(|s| {
            if mdp.goal() == Some(s) {
                return Action::Stop;
            }
            let mut best = (mdp.actions()[0], f64::NEG_INFINITY);
            for &a in mdp.actions() {
                let v = values[mdp.transition(s, a)];
                if v > best.1 {
                    best = (a, v);
                }
            }
            best.0
        })
        .collect();
    GreedyPolicy { actions }
}

/// Iterates Bellman sweeps until successive iterates differ by less than
/// `tol` in sup norm, so the returned values have Bellman residual `< tol`.
pub fn value_iteration(mdp: &GridMdp, rewards: &[f64], tol: f64) -> Result<(Vec<f64>, GreedyPolicy)> {
    mdp.check_rewards(rewards)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", reason: "must be > 0" });
    }
    let mut values = vec![0.0; mdp.state_count()];
    loop {
        let next = bellman_backup(mdp, rewards, &values);
        let delta = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        values = next;
        if !(delta >= tol) {
            break;
        }
    }
    let policy = greedy_policy(mdp, &values);
    Ok((values, policy))
}

/// Time-indexed maximum-entropy policy for a finite horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPolicy {
    action_count: usize,
    state_count: usize,
    /// `steps[t][s·|A| + a]` = π_t(a | s).
    steps: Vec<Vec<f64>>,
}

impl SoftPolicy {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Action distribution at step `t` in state `s`, in `GridMdp::actions` order.
    pub fn distribution(&self, t: usize, state: usize) -> &[f64] {
        let k = self.action_count;
        &self.steps[t][state * k..(state + 1) * k]
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + libm::log(xs.iter().map(|x| libm::exp(x - m)).sum::<f64>())
}

/// Backward soft Bellman recursion over `horizon` steps.
///
/// `Q_t(s, a) = r(s') + V_{t+1}(s')` with `s' = T(s, a)`, `V_H = 0`, and
/// `V_t(s) = log Σ_a exp Q_t(s, a)`. The resulting action sequences from
/// any start have probability proportional to `exp(Σ_{t≥1} r(s_t))`.
pub fn soft_value_iteration(mdp: &GridMdp, rewards: &[f64], horizon: usize) -> Result<SoftPolicy> {
    mdp.check_rewards(rewards)?;
    if horizon == 0 {
        return Err(Error::InvalidParameter { name: "horizon", reason: "must be >= 1" });
    }
    let n = mdp.state_count();
    let actions = mdp.actions();
    let k = actions.len();
    let mut next_values = vec![0.0; n];
    let mut steps = vec![Vec::new(); horizon];
    let mut q = vec![0.0; k];
    for t in (0..horizon).rev() {
        let mut probs = vec![0.0; n * k];
        let mut values = vec![0.0; n];
        for s in 0..n {
            for (qa, &a) in q.iter_mut().zip(actions) {
                let next = mdp.transition(s, a);
                *qa = rewards[next] + next_values[next];
            }
            let v = log_sum_exp(&q);
            values[s] = v;
            for (p, qa) in probs[s * k..(s + 1) * k].iter_mut().zip(&q) {
                *p = libm::exp(qa - v);
            }
        }
        steps[t] = probs;
        next_values = values;
    }
    Ok(SoftPolicy { action_count: k, state_count: n, steps })
}

/// Expected visitation counts from `start` over `horizon` steps; the start
/// counts once, so the total mass is `horizon + 1`.
pub fn expected_svf(mdp: &GridMdp, policy: &SoftPolicy, start: usize, horizon: usize) -> Result<Vec<f64>> {
    mdp.check_state(start)?;
    if horizon > policy.horizon() {
        return Err(Error::InvalidParameter { name: "horizon", reason: "exceeds the policy horizon" });
    }
    let n = mdp.state_count();
    let mut mass = vec![0.0; n];
    mass[start] = 1.0;
    let mut total = mass.clone();
    for t in 0..horizon {
        let mut next = vec![0.0; n];
        for (s, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (&a, &p) in mdp.actions().iter().zip(policy.distribution(t, s)) {
                next[mdp.transition(s, a)] += m * p;
            }
        }
        for (acc, v) in total.iter_mut().zip(&next) {
            *acc += v;
        }
        mass = next;
    }
    Ok(total)
}

/// Mean per-demonstration visit counts.
pub fn demo_svf(demonstrations: &[Vec<usize>], mdp: &GridMdp) -> Result<Vec<f64>> {
    if demonstrations.is_empty() {
        return Err(Error::EmptyDemonstrations);
    }
    let mut counts = vec![0.0; mdp.state_count()];
    for demo in demonstrations {
        for &s in demo {
            mdp.check_state(s)?;
            counts[s] += 1.0;
        }
    }
    let inv = 1.0 / demonstrations.len() as f64;
    counts.iter_mut().for_each(|c| *c *= inv);
    Ok(counts)
}

/// `Σ_t log P(s_{t+1} | s_t)` of a state sequence under `policy`, where the
/// step probability sums every action leading to the observed successor.
pub fn sequence_log_likelihood(mdp: &GridMdp, policy: &SoftPolicy, states: &[usize]) -> f64 {
    states
        .windows(2)
        .take(policy.horizon())
        .enumerate()
        .map(|(t, pair)| {
            let p: f64 = mdp
                .actions()
                .iter()
                .zip(policy.distribution(t, pair[0]))
                .filter(|(&a, _)| mdp.transition(pair[0], a) == pair[1])
                .map(|(_, &p)| p)
                .sum();
            libm::log(p)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions_are_total() {
        let mdp = GridMdp::new(3, 0.9).unwrap();
        assert_eq!(mdp.transition(0, Action::Down), 0);
        assert_eq!(mdp.transition(0, Action::Right), 0);
        assert_eq!(mdp.transition(0, Action::Up), 3);
        assert_eq!(mdp.transition(0, Action::Left), 1);
        assert_eq!(mdp.transition(4, Action::Stop), 4);
        let mdp = mdp.with_goal(4).unwrap();
        for &a in mdp.actions() {
            assert_eq!(mdp.transition(4, a), 4);
        }
    }

    #[test]
    fn diagonal_actions_are_gated() {
        let mdp = GridMdp::new(3, 0.9).unwrap();
        assert_eq!(mdp.actions().len(), 5);
        let mdp = mdp.with_action_set(ActionSet::WithDiagonals);
        assert_eq!(mdp.actions().len(), 9);
        assert_eq!(mdp.transition(0, Action::UpLeft), 4);
    }

    #[test]
    fn goal_reward_decays_with_manhattan_distance() {
        let goal = 8;
        let mdp = GridMdp::new(3, 0.9).unwrap().with_goal(goal).unwrap();
        let mut r = vec![0.0; 9];
        r[goal] = 1.0;
        let (v, _) = value_iteration(&mdp, &r, 1e-12).unwrap();
        for s in 0..9 {
            let d = (2 - s / 3) + (2 - s % 3);
            let expected = libm::pow(0.9, d as f64) * v[goal];
            assert!((v[s] - expected).abs() < 1e-9, "state {s}: {} vs {expected}", v[s]);
        }
    }

    #[test]
    fn uniform_rewards_tie_to_first_action() {
        let mdp = GridMdp::new(3, 0.9).unwrap();
        let (_, pi) = value_iteration(&mdp, &[0.5; 9], 1e-10).unwrap();
        assert!(pi.actions.iter().all(|&a| a == Action::Up));
    }

    #[test]
    fn myopic_values_equal_rewards() {
        let mdp = GridMdp::new(3, 0.0).unwrap();
        let r: Vec<f64> = (0..9).map(|s| (s as f64 * 0.37).sin()).collect();
        let (v, _) = value_iteration(&mdp, &r, 1e-9).unwrap();
        assert_eq!(v, r);
    }

    #[test]
    fn equal_rewards_give_uniform_soft_policy() {
        let mdp = GridMdp::new(3, 0.9).unwrap();
        let pi = soft_value_iteration(&mdp, &[0.3; 9], 6).unwrap();
        for t in 0..6 {
            for s in 0..9 {
                for p in pi.distribution(t, s) {
                    assert!((p - 0.2).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn svf_horizon_zero_is_dirac() {
        let mdp = GridMdp::new(3, 0.9).unwrap();
        let pi = soft_value_iteration(&mdp, &[0.0; 9], 3).unwrap();
        let mu = expected_svf(&mdp, &pi, 4, 0).unwrap();
        assert_eq!(mu, {
            let mut e = vec![0.0; 9];
            e[4] = 1.0;
            e
        });
        assert!(expected_svf(&mdp, &pi, 4, 4).is_err());
    }

    #[test]
    fn demo_svf_counts() {
        let mdp = GridMdp::new(3, 0.9).unwrap();
        let mu = demo_svf(&[vec![0, 1, 2], vec![0, 3, 6]], &mdp).unwrap();
        assert_eq!(mu, vec![1.0, 0.5, 0.5, 0.5, 0.0, 0.0, 0.5, 0.0, 0.0]);
        let once = demo_svf(&[(0..9).collect()], &mdp).unwrap();
        assert_eq!(once, vec![1.0; 9]);
        let twice = demo_svf(&[vec![0, 1, 4], vec![0, 1, 4]], &mdp).unwrap();
        assert_eq!(twice, demo_svf(&[vec![0, 1, 4]], &mdp).unwrap());
        assert_eq!(demo_svf(&[], &mdp), Err(Error::EmptyDemonstrations));
        assert!(demo_svf(&[vec![9]], &mdp).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(GridMdp::new(3, 1.0).is_err());
        let mdp = GridMdp::new(3, 0.5).unwrap();
        assert!(value_iteration(&mdp, &[0.0; 4], 1e-6).is_err());
        assert!(value_iteration(&mdp, &[0.0; 9], 0.0).is_err());
        assert!(soft_value_iteration(&mdp, &[0.0; 9], 0).is_err());
    }
}
