//! Online planning loop, waypoints, episode recording and evaluation
//! metrics.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::demo::{trajectory_length, DemoSource, DemoWindow, Demonstration, NoiseModel, Outcome};
use crate::features::social_radii;
use crate::features::{build_feature_map, FeatureConfig, FeatureMap, GridWindow};
use crate::geometry::Vec2;
use crate::mdp::{value_iteration, Action, ActionSet, GridMdp};
use crate::reward_net::{LinearReward, RewardFunction};
use crate::sim::{make_scenario, step_world, PedestrianState, RobotState, Scenario, SimParams, WorldState};
use crate::svcr::{compute_svcr, SvcrConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NavConfig {
    pub waypoint_spacing: f64,
    /// A waypoint counts as reached inside this distance.
    pub waypoint_reach: f64,
    pub goal_radius: f64,
    pub collision_distance: f64,
    pub timeout: f64,
    pub controller_gain: f64,
    pub gamma_plan: f64,
    pub vi_tolerance: f64,
    pub action_set: ActionSet,
    /// Longest time a traversal window stays open, s.
    pub window_timeout: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            waypoint_spacing: 2.0,
            waypoint_reach: 1.0,
            goal_radius: 0.3,
            collision_distance: 0.3,
            timeout: 40.0,
            controller_gain: 1.5,
            gamma_plan: 0.9,
            vi_tolerance: 1e-9,
            action_set: ActionSet::Cardinal,
            window_timeout: 1000.0,
        }
    }
}

impl NavConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.waypoint_spacing,
            self.waypoint_reach,
            self.goal_radius,
            self.timeout,
            self.controller_gain,
            self.vi_tolerance,
            self.window_timeout,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.collision_distance >= 0.0) {
            return Err(Error::InvalidParameter { name: "nav", reason: "distances, timeout, gain and tolerance must be > 0" });
        }
        GridMdp::new(2, self.gamma_plan).map(|_| ())
    }
}

/// Everything the runtime needs besides the scenario and the reward.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RuntimeConfig {
    pub sim: SimParams,
    pub features: FeatureConfig,
    pub nav: NavConfig,
    pub svcr: SvcrConfig,
}

impl RuntimeConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.features.validate()?;
        self.nav.validate()?;
        self.svcr.validate()
    }
}

/// Straight-line global path sampled every `spacing` metres, ending at the
/// goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waypoints {
    start: Vec2,
    points: Vec<Vec2>,
    index: usize,
}

impl Waypoints {
    pub fn new(start: Vec2, goal: Vec2, spacing: f64) -> Self {
        let length = start.distance(goal);
        let n = libm::ceil(length / spacing).max(1.0) as usize;
        let points = (1..=n)
            .map(|k| if k == n { goal } else { start + (goal - start) * (k as f64 * spacing / length) })
            .collect();
        Self { start, points, index: 0 }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn current(&self) -> Vec2 {
        self.points[self.index]
    }

    pub fn is_final(&self) -> bool {
        self.index + 1 == self.points.len()
    }

    /// Moves past every non-final waypoint that is within `reach` of the
    /// robot or that the robot has passed along the path.
    pub fn advance(&mut self, robot: Vec2, reach: f64) {
        let goal = *self.points.last().unwrap();
        let axis = (goal - self.start).normalized();
        while !self.is_final() {
            let wp = self.current();
            let passed = axis.map_or(false, |a| (robot - self.start).dot(a) >= (wp - self.start).dot(a));
            if robot.distance(wp) <= reach || passed {
                self.index += 1;
            } else {
                break;
            }
        }
    }
}

/// One planning cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub window: GridWindow,
    pub features: FeatureMap,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub goal_state: usize,
    pub robot_state: usize,
    pub action: Action,
}

/// Window ahead of the robot, oriented towards `waypoint`.
pub fn window_for(robot: Vec2, waypoint: Vec2, features: &FeatureConfig) -> GridWindow {
    let d = waypoint - robot;
    let bearing = if d.norm() > 1e-12 { d.angle() } else { 0.0 };
    GridWindow::ahead_of(robot, bearing, features.cells_per_side, features.resolution)
}

pub fn plan(world: &WorldState, waypoint: Vec2, reward: &dyn RewardFunction, config: &RuntimeConfig) -> Result<Plan> {
    let window = window_for(world.robot.position, waypoint, &config.features);
    let features = build_feature_map(world, &window, waypoint, &config.features);
    let rewards = reward.rewards(&features)?;
    let goal_state = window.nearest_state(waypoint);
    let mdp = GridMdp::new(window.cells_per_side, config.nav.gamma_plan)?
        .with_action_set(config.nav.action_set)
        .with_goal(goal_state)?;
    let (values, policy) = value_iteration(&mdp, &rewards, config.nav.vi_tolerance)?;
    let robot_state = window.nearest_state(world.robot.position);
    let action = policy.action(robot_state);
    Ok(Plan { window, features, rewards, values, goal_state, robot_state, action })
}

/// Proportional control towards `target`, clamped to the robot's top
/// speed, in the robot frame.
pub fn p_control(robot: &RobotState, target: Vec2, gain: f64, max_speed: f64) -> Vec2 {
    robot.to_robot_frame(((target - robot.position) * gain).clamp_norm(max_speed))
}

/// Command that drives the robot to the centre of the cell `action` leads
/// to; zero for a stop.
pub fn action_command(world: &WorldState, window: &GridWindow, action: Action, config: &RuntimeConfig) -> Vec2 {
    if action == Action::Stop {
        return Vec2::ZERO;
    }
    let (row, col) = window.cell_of_state(window.nearest_state(world.robot.position));
    let (dr, dc) = action.offset();
    let target = window.to_world(Vec2::new(
        (row as f64 + dr as f64 + 0.5) * window.resolution,
        (col as f64 + dc as f64 + 0.5) * window.resolution,
    ));
    p_control(&world.robot, target, config.nav.controller_gain, config.sim.robot_max_speed)
}

/// Greedy local-policy command for one world snapshot.
pub fn plan_step(world: &WorldState, waypoint: Vec2, reward: &dyn RewardFunction, config: &RuntimeConfig) -> Result<Vec2> {
    let p = plan(world, waypoint, reward, config)?;
    Ok(action_command(world, &p.window, p.action, config))
}

/// Final approach: once the planner stops with the goal inside the robot's
/// own cell, steer straight onto it.
fn finish_command(world: &WorldState, plan: &Plan, command: Vec2, final_waypoint: bool, config: &RuntimeConfig) -> Vec2 {
    if plan.action == Action::Stop && final_waypoint && plan.goal_state == plan.robot_state {
        p_control(&world.robot, world.robot_goal, config.nav.controller_gain, config.sim.robot_max_speed)
    } else {
        command
    }
}

/// What a command source sees each tick.
pub struct StepContext<'a> {
    pub world: &'a WorldState,
    pub waypoint: Vec2,
    pub final_waypoint: bool,
    /// The traversal window the robot is currently in.
    pub window: &'a DemoWindow,
    pub config: &'a RuntimeConfig,
}

/// Produces one robot-frame velocity per tick; `None` ends the episode
/// early (e.g. an operator disconnect).
pub trait CommandSource {
    fn next_command(&mut self, ctx: &StepContext<'_>) -> Result<Option<Vec2>>;
}

/// Drives with the greedy plan of a reward function, re-planned every tick.
pub struct PolicyDriver<'a> {
    pub reward: &'a dyn RewardFunction,
}

impl CommandSource for PolicyDriver<'_> {
    fn next_command(&mut self, ctx: &StepContext<'_>) -> Result<Option<Vec2>> {
        let (world, config) = (ctx.world, ctx.config);
        let p = plan(world, ctx.waypoint, self.reward, config)?;
        let command = action_command(world, &p.window, p.action, config);
        Ok(Some(finish_command(world, &p, command, ctx.final_waypoint, config)))
    }
}

/// Hand-tuned linear reward over the feature layers used by the scripted
/// expert.
pub fn expert_reward() -> LinearReward {
    LinearReward { weights: vec![-1.0, -3.0, 1.0, 1.5] }
}

/// Weights of [`expert_reward`] with the pedestrian layers zeroed: still
/// avoids obstacles but ignores people.
pub fn careless_reward() -> LinearReward {
    LinearReward { weights: vec![-1.0, -3.0, 0.0, 0.0] }
}

/// Ticks a noisy block lasts: one cell traversal at top speed with the
/// default resolution and time step.
pub const NOISE_HOLD_TICKS: usize = 10;

/// Planner-driven demonstrator. Time is split into blocks of `hold` ticks;
/// with probability `p_noise` a block misbehaves according to `noise`.
pub struct ScriptedExpert {
    pub reward: LinearReward,
    pub careless: LinearReward,
    pub noise: NoiseModel,
    pub p_noise: f64,
    pub hold: usize,
    rng: ChaCha8Rng,
    tick: usize,
    noisy: Option<Option<Action>>,
}

impl ScriptedExpert {
    pub fn new(p_noise: f64, seed: u64) -> Self {
        Self::with_noise(NoiseModel::Careless, p_noise, seed)
    }

    pub fn with_noise(noise: NoiseModel, p_noise: f64, seed: u64) -> Self {
        Self {
            reward: expert_reward(),
            careless: careless_reward(),
            noise,
            p_noise,
            hold: NOISE_HOLD_TICKS,
            rng: ChaCha8Rng::seed_from_u64(seed),
            tick: 0,
            noisy: None,
        }
    }
}

fn action_list(set: ActionSet) -> &'static [Action] {
    match set {
        ActionSet::Cardinal => &[Action::Up, Action::Down, Action::Left, Action::Right, Action::Stop],
        ActionSet::WithDiagonals => &[
            Action::Up,
            Action::Down,
            Action::Left,
            Action::Right,
            Action::Stop,
            Action::UpLeft,
            Action::UpRight,
            Action::DownLeft,
            Action::DownRight,
        ],
    }
}

impl CommandSource for ScriptedExpert {
    fn next_command(&mut self, ctx: &StepContext<'_>) -> Result<Option<Vec2>> {
        let (world, config) = (ctx.world, ctx.config);
        if self.tick % self.hold.max(1) == 0 {
            self.noisy = None;
            if self.p_noise > 0.0 && self.rng.gen_bool(self.p_noise.min(1.0)) {
                self.noisy = Some(match self.noise {
                    NoiseModel::Careless => None,
                    NoiseModel::RandomAction => {
                        let actions = action_list(config.nav.action_set);
                        Some(actions[self.rng.gen_range(0..actions.len())])
                    }
                });
            }
        }
        self.tick += 1;
        let reward = if self.noisy.is_some() { &self.careless } else { &self.reward };
        let p = plan(world, ctx.waypoint, reward, config)?;
        if let Some(Some(action)) = self.noisy {
            return Ok(Some(action_command(world, &p.window, action, config)));
        }
        let command = action_command(world, &p.window, p.action, config);
        Ok(Some(finish_command(world, &p, command, ctx.final_waypoint, config)))
    }
}

/// Replays a recorded command log, then ends.
#[derive(Debug, Clone)]
pub struct ReplayCommands {
    commands: Vec<Vec2>,
    next: usize,
}

impl ReplayCommands {
    pub fn new(commands: Vec<Vec2>) -> Self {
        Self { commands, next: 0 }
    }
}

impl CommandSource for ReplayCommands {
    fn next_command(&mut self, _: &StepContext<'_>) -> Result<Option<Vec2>> {
        let c = self.commands.get(self.next).copied();
        self.next += 1;
        Ok(c)
    }
}

/// Tracks traversal windows. A window is placed ahead of the robot and
/// closed once the robot leaves its footprint, reaches its goal cell, or has
/// spent `max_steps` ticks in it.
#[derive(Debug, Clone, Default)]
pub struct Recorder {
    pub windows: Vec<DemoWindow>,
    pub step_window: Vec<usize>,
    last_cell: Option<(i64, i64)>,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, step: usize, world: &WorldState, waypoint: Vec2, features: &FeatureConfig, max_steps: usize) {
        let robot = world.robot.position;
        if let (Some(current), Some(from)) = (self.windows.last_mut(), self.last_cell) {
            let to = current.window.lattice_coords(robot);
            extend_path(&current.window, &mut current.visited, from, to);
            self.last_cell = Some(to);
        }
        let keep = self.windows.last().map_or(false, |w| {
            w.window.contains(robot)
                && w.window.state_of(robot) != Some(w.goal_state)
                && step - w.start_step < max_steps.max(1)
        });
        if !keep {
            let window = window_for(robot, waypoint, features);
            let cell = window.lattice_coords(robot);
            self.windows.push(DemoWindow {
                window,
                waypoint,
                start_step: step,
                goal_state: window.nearest_state(waypoint),
                features: build_feature_map(world, &window, waypoint, features),
                visited: window.state_of(robot).into_iter().collect(),
            });
            self.last_cell = Some(cell);
        }
        self.step_window.push(self.windows.len() - 1);
    }
}

/// Appends the in-window lattice cells between `from` (exclusive) and `to`,
/// rows first, so consecutive entries stay 4-connected.
fn extend_path(window: &GridWindow, visited: &mut Vec<usize>, mut from: (i64, i64), to: (i64, i64)) {
    while from != to {
        if from.0 != to.0 {
            from.0 += (to.0 - from.0).signum();
        } else {
            from.1 += (to.1 - from.1).signum();
        }
        if let Some((r, c)) = window.lattice_to_cell(from) {
            let s = window.state_index(r, c);
            if visited.last() != Some(&s) {
                visited.push(s);
            }
        }
    }
}

/// Whether the robot is in collision with any pedestrian or obstacle.
pub fn in_collision(world: &WorldState, config: &RuntimeConfig) -> bool {
    let r = world.robot.position;
    world.pedestrians.iter().any(|p| p.position.distance(r) < config.nav.collision_distance)
        || world.obstacles.iter().any(|o| o.contains(r))
}

/// Outside→inside crossings of the robot into pedestrians' social discs
/// between consecutive steps. Pedestrians are matched by id.
pub fn count_invasions(robot_states: &[RobotState], history: &[Vec<PedestrianState>], features: &FeatureConfig) -> u64 {
    let inside_at = |t: usize| -> Vec<(u32, bool)> {
        let radii = social_radii(&history[t], &features.social);
        history[t]
            .iter()
            .zip(radii)
            .map(|(p, d)| (p.id, p.position.distance(robot_states[t].position) <= d))
            .collect()
    };
    let steps = robot_states.len().min(history.len());
    if steps == 0 {
        return 0;
    }
    let mut count = 0;
    let mut previous = inside_at(0);
    for t in 1..steps {
        let now = inside_at(t);
        for &(id, inside) in &now {
            let was = previous.iter().find(|(pid, _)| *pid == id).map_or(false, |&(_, w)| w);
            if inside && !was {
                count += 1;
            }
        }
        previous = now;
    }
    count
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeResult {
    pub seed: u64,
    pub pedestrian_count: usize,
    pub outcome: Outcome,
    pub success: bool,
    pub collision: bool,
    pub navigation_time: f64,
    pub path_length: f64,
    pub invasion_count: u64,
    /// Invasions per metre; 0 for a robot that never moved.
    pub invasion_rate: f64,
    pub n_s: u64,
    pub svcr: f64,
    pub steps: usize,
}

impl EpisodeResult {
    pub fn from_demo(demo: &Demonstration, config: &RuntimeConfig) -> Self {
        let invasion_count = count_invasions(&demo.robot_states, &demo.pedestrian_history, &config.features);
        let path_length = demo.trajectory_length;
        Self {
            seed: demo.scenario.seed,
            pedestrian_count: demo.scenario.pedestrian_count,
            outcome: demo.outcome,
            success: demo.outcome == Outcome::Success,
            collision: demo.outcome == Outcome::Collision,
            navigation_time: demo.commands.len() as f64 * demo.dt,
            path_length,
            invasion_count,
            invasion_rate: if path_length > 0.0 { invasion_count as f64 / path_length } else { 0.0 },
            n_s: demo.n_s,
            svcr: demo.svcr,
            steps: demo.commands.len(),
        }
    }
}

/// Steps `world` under `source` until success, collision, timeout or the
/// source ends, recording a full demonstration.
pub fn run_world(
    mut world: WorldState,
    scenario: &Scenario,
    source: &mut dyn CommandSource,
    demo_source: DemoSource,
    id: u64,
    config: &RuntimeConfig,
) -> Result<Demonstration> {
    config.validate()?;
    let dt = config.sim.dt;
    let max_steps = libm::round(config.nav.timeout / dt) as usize;
    let mut waypoints = Waypoints::new(world.robot.position, world.robot_goal, config.nav.waypoint_spacing);
    let window_steps = libm::round(config.nav.window_timeout / dt) as usize;
    let mut recorder = Recorder::new();
    let mut robot_states = vec![world.robot];
    let mut pedestrian_history = vec![world.pedestrians.clone()];
    let mut commands = Vec::new();

    let outcome = loop {
        let step = commands.len();
        waypoints.advance(world.robot.position, config.nav.waypoint_reach);
        recorder.observe(step, &world, waypoints.current(), &config.features, window_steps);
        if world.robot.position.distance(world.robot_goal) <= config.nav.goal_radius {
            break Outcome::Success;
        }
        if in_collision(&world, config) {
            break Outcome::Collision;
        }
        if step >= max_steps {
            break Outcome::Timeout;
        }
        let ctx = StepContext {
            world: &world,
            waypoint: waypoints.current(),
            final_waypoint: waypoints.is_final(),
            window: recorder.windows.last().unwrap(),
            config,
        };
        let Some(command) = source.next_command(&ctx)? else {
            break Outcome::Aborted;
        };
        world = step_world(&world, command, dt, &config.sim);
        commands.push(command);
        robot_states.push(world.robot);
        pedestrian_history.push(world.pedestrians.clone());
    };

    let mut demo = Demonstration {
        id,
        dt,
        scenario: scenario.clone(),
        source: demo_source,
        outcome,
        complete: outcome != Outcome::Aborted,
        trajectory_length: trajectory_length(&robot_states),
        robot_states,
        pedestrian_history,
        commands,
        step_window: recorder.step_window,
        windows: recorder.windows,
        n_s: 0,
        svcr: 0.0,
    };
    let (n_s, svcr) = compute_svcr(&demo, &config.svcr)?;
    demo.n_s = n_s;
    demo.svcr = svcr;
    Ok(demo)
}

pub fn collect_demo(
    scenario: &Scenario,
    source: &mut dyn CommandSource,
    demo_source: DemoSource,
    id: u64,
    config: &RuntimeConfig,
) -> Result<Demonstration> {
    let world = make_scenario(scenario, &config.sim)?;
    run_world(world, scenario, source, demo_source, id, config)
}

/// Scripted-expert demonstration with per-episode seeded careless noise.
pub fn collect_scripted(scenario: &Scenario, p_noise: f64, seed: u64, id: u64, config: &RuntimeConfig) -> Result<Demonstration> {
    collect_scripted_with(scenario, NoiseModel::Careless, p_noise, seed, id, config)
}

pub fn collect_scripted_with(
    scenario: &Scenario,
    noise: NoiseModel,
    p_noise: f64,
    seed: u64,
    id: u64,
    config: &RuntimeConfig,
) -> Result<Demonstration> {
    let mut expert = ScriptedExpert::with_noise(noise, p_noise, seed);
    collect_demo(scenario, &mut expert, DemoSource::ScriptedExpert { p_noise, seed, noise }, id, config)
}

pub fn run_episode(scenario: &Scenario, reward: &dyn RewardFunction, config: &RuntimeConfig) -> Result<EpisodeResult> {
    let mut driver = PolicyDriver { reward };
    let demo = collect_demo(scenario, &mut driver, DemoSource::Replay, scenario.seed, config)?;
    Ok(EpisodeResult::from_demo(&demo, config))
}

/// Aggregate metrics over a batch of episodes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvaluationReport {
    pub episodes: usize,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    /// Mean over successful episodes; absent when none succeeded.
    pub mean_navigation_time: Option<f64>,
    pub mean_path_length: f64,
    pub mean_invasion_rate: f64,
    pub mean_svcr: f64,
    pub pairwise_accuracy: Option<f64>,
}

pub fn aggregate(results: &[EpisodeResult], pairwise_accuracy: Option<f64>) -> EvaluationReport {
    let n = results.len().max(1) as f64;
    let mean = |f: &dyn Fn(&EpisodeResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    let successes: Vec<&EpisodeResult> = results.iter().filter(|r| r.success).collect();
    EvaluationReport {
        episodes: results.len(),
        success_rate: successes.len() as f64 / n,
        collision_rate: mean(&|r| r.collision as u8 as f64),
        timeout_rate: mean(&|r| (r.outcome == Outcome::Timeout) as u8 as f64),
        mean_navigation_time: (!successes.is_empty())
            .then(|| successes.iter().map(|r| r.navigation_time).sum::<f64>() / successes.len() as f64),
        mean_path_length: mean(&|r| r.path_length),
        mean_invasion_rate: mean(&|r| r.invasion_rate),
        mean_svcr: mean(&|r| r.svcr),
        pairwise_accuracy,
    }
}

/// Runs every scenario once, in order.
pub fn evaluate(reward: &dyn RewardFunction, scenarios: &[Scenario], config: &RuntimeConfig) -> Result<Vec<EpisodeResult>> {
    if scenarios.is_empty() {
        return Err(Error::InvalidParameter { name: "episodes", reason: "must be >= 1" });
    }
    scenarios.iter().map(|s| run_episode(s, reward, config)).collect()
}
