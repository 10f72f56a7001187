//! Independent reference implementations shared by the integration tests
//! and the acceptance target. Nothing here calls the code under test for
//! the quantity it checks.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crowdnav_core::demo::{DemoWindow, Demonstration};
use crowdnav_core::features::{FeatureMap, GridWindow};
use crowdnav_core::geometry::Vec2;
use crowdnav_core::mdp::{GridMdp, SoftPolicy};
use crowdnav_core::reward_net::RewardModel;
use crowdnav_core::sim::PedestrianState;
use crowdnav_core::svcr::SvcrConfig;

/// `(Δrow, Δcol)` in the crate's action order: Up, Down, Left, Right, Stop.
pub const MOVES: [(i64, i64); 5] = [(1, 0), (-1, 0), (0, 1), (0, -1), (0, 0)];

pub fn step(side: usize, goal: Option<usize>, s: usize, a: usize) -> usize {
    if goal == Some(s) {
        return s;
    }
    let (r, c) = ((s / side) as i64 + MOVES[a].0, (s % side) as i64 + MOVES[a].1);
    if r < 0 || c < 0 || r >= side as i64 || c >= side as i64 {
        s
    } else {
        r as usize * side + c as usize
    }
}

/// Every action sequence of length `horizon` from `start`, with probability
/// proportional to `exp` of the rewards of the states it enters.
pub fn enumerate_sequences(side: usize, goal: Option<usize>, rewards: &[f64], start: usize, horizon: usize) -> Vec<(Vec<usize>, f64)> {
    let count = MOVES.len().pow(horizon as u32);
    let mut out = Vec::with_capacity(count);
    for code in 0..count {
        let mut c = code;
        let mut s = start;
        let mut total = 0.0;
        let mut actions = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let a = c % MOVES.len();
            c /= MOVES.len();
            s = step(side, goal, s, a);
            total += rewards[s];
            actions.push(a);
        }
        out.push((actions, total));
    }
    let max = out.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = out.iter().map(|x| (x.1 - max).exp()).sum();
    out.into_iter().map(|(a, r)| (a, (r - max).exp() / z)).collect()
}

/// Probability of each state path (start excluded) from enumeration.
pub fn path_probabilities(side: usize, goal: Option<usize>, sequences: &[(Vec<usize>, f64)], start: usize) -> BTreeMap<Vec<usize>, f64> {
    let mut paths = BTreeMap::new();
    for (actions, p) in sequences {
        let mut s = start;
        let path: Vec<usize> = actions
            .iter()
            .map(|&a| {
                s = step(side, goal, s, a);
                s
            })
            .collect();
        *paths.entry(path).or_insert(0.0) += p;
    }
    paths
}

/// Probability the soft policy assigns to an action sequence from `start`.
pub fn policy_sequence_probability(policy: &SoftPolicy, side: usize, goal: Option<usize>, start: usize, actions: &[usize]) -> f64 {
    let mut s = start;
    let mut p = 1.0;
    for (t, &a) in actions.iter().enumerate() {
        p *= policy.distribution(t, s)[a];
        s = step(side, goal, s, a);
    }
    p
}

/// Monte-Carlo visitation counts of `rollouts` sampled trajectories.
pub fn monte_carlo_svf(policy: &SoftPolicy, side: usize, goal: Option<usize>, start: usize, horizon: usize, rollouts: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; side * side];
    for _ in 0..rollouts {
        let mut s = start;
        counts[s] += 1;
        for t in 0..horizon {
            let u: f64 = rng.gen();
            let dist = policy.distribution(t, s);
            let mut acc = 0.0;
            let mut a = dist.len() - 1;
            for (k, p) in dist.iter().enumerate() {
                acc += p;
                if u < acc {
                    a = k;
                    break;
                }
            }
            s = step(side, goal, s, a);
            counts[s] += 1;
        }
    }
    counts.iter().map(|&c| c as f64 / rollouts as f64).collect()
}

pub fn random_rewards(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// `Σ_s error(s)·r(s)` for a parameter vector, the scalar whose gradient
/// `RewardModel::backward` returns.
pub fn weighted_reward_sum(model: &RewardModel, params: &[f64], features: &FeatureMap, error: &[f64]) -> f64 {
    let mut m = model.clone();
    m.set_parameters(params).unwrap();
    let rewards = naive_forward(&m, features);
    rewards.iter().zip(error).map(|(r, e)| r * e).sum()
}

/// Forward pass written out with plain loops: tanh hidden layers, linear
/// head.
pub fn naive_forward(model: &RewardModel, features: &FeatureMap) -> Vec<f64> {
    let n = features.layers[0].len();
    (0..n)
        .map(|s| {
            let mut a: Vec<f64> = features.layers.iter().map(|l| l[s]).collect();
            for (k, layer) in model.layers.iter().enumerate() {
                let mut z = vec![0.0; layer.outputs];
                for o in 0..layer.outputs {
                    let mut acc = layer.biases[o];
                    for i in 0..layer.inputs {
                        acc += layer.weights[o * layer.inputs + i] * a[i];
                    }
                    z[o] = if k + 1 == model.layers.len() { acc } else { acc.tanh() };
                }
                a = z;
            }
            a[0]
        })
        .collect()
}

/// Central finite-difference gradient.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Pairwise logistic loss written directly from its definition, with `j`
/// the better (lower-SVCR) trajectory.
pub fn logistic_pair_loss(r_worse: f64, r_better: f64) -> f64 {
    (r_worse - r_better).exp().ln_1p()
}

/// Point-in-window test by explicit rotation into the window frame:
/// closed lower edges, open upper edges.
pub fn in_window(window: &GridWindow, p: Vec2) -> bool {
    let (dx, dy) = (p.x - window.origin.x, p.y - window.origin.y);
    let (c, s) = (window.orientation.cos(), window.orientation.sin());
    let u = c * dx + s * dy;
    let w = -s * dx + c * dy;
    let side = window.cells_per_side as f64 * window.resolution;
    (0.0..side).contains(&u) && (0.0..side).contains(&w)
}

/// Sudden-change count by a straight re-scan: every step, every pedestrian,
/// look its id up in the previous step.
pub fn rescan_sudden_changes(demo: &Demonstration, config: &SvcrConfig) -> u64 {
    let mut n = 0;
    for t in 1..demo.pedestrian_history.len() {
        let window = &demo.windows[demo.step_window[t]].window;
        for cur in &demo.pedestrian_history[t] {
            let Some(prev) = demo.pedestrian_history[t - 1].iter().find(|p| p.id == cur.id) else {
                continue;
            };
            let dvx = cur.linear_velocity.x - prev.linear_velocity.x;
            let dvy = cur.linear_velocity.y - prev.linear_velocity.y;
            let dv = (dvx * dvx + dvy * dvy).sqrt();
            let dw = (cur.angular_velocity - prev.angular_velocity).abs();
            if in_window(window, cur.position) && (dv >= config.v_thrd || dw >= config.omega_thrd) {
                n += 1;
            }
        }
    }
    n
}

pub fn rescan_svcr(demo: &Demonstration, config: &SvcrConfig) -> (u64, f64) {
    let n = rescan_sudden_changes(demo, config);
    let rate = if demo.trajectory_length > 0.0 { n as f64 / demo.trajectory_length } else { 0.0 };
    (n, rate)
}

fn pedestrian(id: u32, position: Vec2, velocity: Vec2, omega: f64) -> PedestrianState {
    PedestrianState { id, position, linear_velocity: velocity, angular_velocity: omega, goal: Vec2::ZERO }
}

fn empty_window(window: GridWindow, start_step: usize) -> DemoWindow {
    let n = window.state_count();
    DemoWindow {
        window,
        waypoint: window.to_world(Vec2::new(window.side_length(), 0.0)),
        start_step,
        goal_state: n - 1,
        features: FeatureMap { window, layers: vec![vec![0.0; n]; 4] },
        visited: vec![0],
    }
}

/// A synthetic demonstration: `steps` steps, up to `pedestrians` people
/// scattered around a few random windows, with occasional id shuffles,
/// drop-outs, velocity jumps and exact-threshold changes.
pub fn random_svcr_demo(rng: &mut ChaCha8Rng, steps: usize, pedestrians: u32, config: &SvcrConfig) -> Demonstration {
    let window_count = rng.gen_range(1..=4);
    let windows: Vec<DemoWindow> = (0..window_count)
        .map(|k| {
            let origin = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let w = GridWindow { origin, orientation: rng.gen_range(-3.2..3.2), cells_per_side: 3, resolution: rng.gen_range(0.5..1.5) };
            empty_window(w, k * steps / window_count)
        })
        .collect();
    let step_window: Vec<usize> = (0..steps).map(|t| (t * window_count / steps).min(window_count - 1)).collect();

    let mut history: Vec<Vec<PedestrianState>> = Vec::with_capacity(steps);
    let mut current: Vec<PedestrianState> = (0..pedestrians)
        .map(|id| {
            let p = Vec2::new(rng.gen_range(-3.0..5.0), rng.gen_range(-3.0..5.0));
            pedestrian(id, p, Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)), 0.0)
        })
        .collect();
    for _ in 0..steps {
        for p in current.iter_mut() {
            match rng.gen_range(0..6) {
                // exact threshold jumps from a zero state
                0 => {
                    p.linear_velocity = Vec2::ZERO;
                    p.angular_velocity = 0.0;
                }
                1 if p.linear_velocity == Vec2::ZERO => p.linear_velocity = Vec2::new(config.v_thrd, 0.0),
                1 if p.angular_velocity == 0.0 => p.angular_velocity = config.omega_thrd,
                2 => p.linear_velocity = Vec2::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)),
                3 => p.angular_velocity += rng.gen_range(-1.0..1.0),
                _ => {
                    p.linear_velocity = p.linear_velocity + Vec2::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
                }
            }
            p.position = p.position + p.linear_velocity * 0.1;
        }
        let mut snapshot: Vec<PedestrianState> = current.iter().copied().filter(|_| rng.gen_bool(0.9)).collect();
        if rng.gen_bool(0.3) && snapshot.len() > 1 {
            let last = snapshot.len() - 1;
            snapshot.swap(0, last);
        }
        history.push(snapshot);
    }
    let mut demo = Demonstration::from_windows(0, windows, 0.0);
    demo.pedestrian_history = history;
    demo.step_window = step_window;
    demo.trajectory_length = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.5..20.0) };
    demo
}

/// Planted-reward gridworld used by the recovery experiment.
pub struct PlantedWorld {
    pub features: FeatureMap,
    pub goal: usize,
    pub rewards: Vec<f64>,
}

pub const PLANTED_WEIGHTS: [f64; 4] = [-1.0, -3.0, 1.0, 1.5];

/// Random 3×3 feature map shaped like the navigation layers: normalised
/// goal distance, sparse binary obstacles, non-positive pedestrian layers.
/// The planted reward is linear in the features.
pub fn planted_world(rng: &mut ChaCha8Rng) -> PlantedWorld {
    let side = 3;
    let n = side * side;
    let window = GridWindow { origin: Vec2::ZERO, orientation: 0.0, cells_per_side: side, resolution: 1.0 };
    let goal = rng.gen_range(0..n);
    let (gr, gc) = ((goal / side) as f64, (goal % side) as f64);
    let dist: Vec<f64> = (0..n).map(|s| (((s / side) as f64 - gr).powi(2) + ((s % side) as f64 - gc).powi(2)).sqrt()).collect();
    let max = dist.iter().copied().fold(0.0, f64::max);
    let goal_layer: Vec<f64> = dist.iter().map(|d| d / max).collect();
    let obstacle: Vec<f64> = (0..n).map(|s| if s != goal && rng.gen_bool(0.2) { 1.0 } else { 0.0 }).collect();
    let mut pedestrian_layer = || -> Vec<f64> { (0..n).map(|_| if rng.gen_bool(0.4) { -rng.gen_range(0.0..1.0) } else { 0.0 }).collect() };
    let prediction = pedestrian_layer();
    let social = pedestrian_layer();
    let layers = vec![goal_layer, obstacle, prediction, social];
    let rewards = (0..n).map(|s| (0..4).map(|k| PLANTED_WEIGHTS[k] * layers[k][s]).sum()).collect();
    PlantedWorld { features: FeatureMap { window, layers }, goal, rewards }
}

/// Value iteration with an absorbing goal, written out independently.
/// Returns the greedy action index per state (ties to the lowest index).
pub fn optimal_policy(side: usize, goal: usize, rewards: &[f64], gamma: f64) -> Vec<usize> {
    let n = side * side;
    let mut v = vec![0.0; n];
    for _ in 0..2000 {
        let next: Vec<f64> = (0..n)
            .map(|s| rewards[s] + gamma * (0..MOVES.len()).map(|a| v[step(side, Some(goal), s, a)]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        v = next;
    }
    (0..n)
        .map(|s| {
            let mut best = (0, f64::NEG_INFINITY);
            for a in 0..MOVES.len() {
                let q = v[step(side, Some(goal), s, a)];
                if q > best.1 {
                    best = (a, q);
                }
            }
            best.0
        })
        .collect()
}

/// Rolls a policy from `start` until the goal or `max_steps`.
pub fn rollout(side: usize, goal: usize, policy: &[usize], start: usize, max_steps: usize) -> Vec<usize> {
    let mut path = vec![start];
    let mut s = start;
    while s != goal && path.len() <= max_steps {
        let next = step(side, Some(goal), s, policy[s]);
        if next == s {
            break;
        }
        s = next;
        path.push(s);
    }
    path
}

pub fn planted_demo(world: &PlantedWorld, start: usize, id: u64, gamma: f64) -> Demonstration {
    let policy = optimal_policy(3, world.goal, &world.rewards, gamma);
    let visited = rollout(3, world.goal, &policy, start, 8);
    let window = DemoWindow {
        window: world.features.window,
        waypoint: Vec2::ZERO,
        start_step: 0,
        goal_state: world.goal,
        features: world.features.clone(),
        visited,
    };
    Demonstration::from_windows(id, vec![window], 0.0)
}

/// Fraction of non-goal states where two policies agree.
pub fn agreement(a: &[usize], b: &[usize], goal: usize) -> (usize, usize) {
    let total = a.len() - 1;
    let same = (0..a.len()).filter(|&s| s != goal && a[s] == b[s]).count();
    (same, total)
}

pub fn mdp(side: usize, gamma: f64, goal: Option<usize>) -> GridMdp {
    let m = GridMdp::new(side, gamma).unwrap();
    match goal {
        Some(g) => m.with_goal(g).unwrap(),
        None => m,
    }
}
