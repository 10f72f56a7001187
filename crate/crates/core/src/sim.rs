//! Deterministic 2-D social-force crowd simulation with a kinematic robot.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::GridWindow;
use crate::geometry::{wrap_angle, Rect, Vec2};
use crate::{Error, Result};

/// Minimum spacing between agents when a scenario is generated.
pub const MIN_SPAWN_SPACING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PedestrianState {
    pub id: u32,
    pub position: Vec2,
    pub linear_velocity: Vec2,
    /// Heading change rate of the velocity vector, rad/s.
    pub angular_velocity: f64,
    pub goal: Vec2,
}

/// Holonomic robot. Commands are velocities in the robot frame
/// (x forward along `heading`, y to the left); the heading is fixed by the
/// scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RobotState {
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
}

impl RobotState {
    pub fn to_world(&self, command: Vec2) -> Vec2 {
        command.rotated(self.heading)
    }

    pub fn to_robot_frame(&self, world_velocity: Vec2) -> Vec2 {
        world_velocity.rotated(-self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScenarioKind {
    CircleCrossing,
    Corridor,
    RandomGoals,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub pedestrian_count: usize,
    pub circle_radius: f64,
    pub static_obstacles: Vec<Rect>,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::circle_crossing(4, 4.0, 0)
    }
}

impl Scenario {
    pub fn circle_crossing(pedestrian_count: usize, circle_radius: f64, seed: u64) -> Self {
        Self {
            kind: ScenarioKind::CircleCrossing,
            pedestrian_count,
            circle_radius,
            static_obstacles: Vec::new(),
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.circle_radius > 0.0) || !self.circle_radius.is_finite() {
            return Err(Error::InvalidParameter {
                name: "circle_radius",
                reason: "must be positive and finite",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimClock {
    pub step_index: u64,
    pub dt: f64,
}

impl SimClock {
    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.dt
    }
}

/// Helbing-style social-force parameters plus robot limits.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SimParams {
    pub dt: f64,
    pub relaxation_time: f64,
    pub desired_speed: f64,
    pub max_pedestrian_speed: f64,
    pub pedestrian_radius: f64,
    /// Inside this distance the desired speed ramps down linearly to zero.
    pub arrival_radius: f64,
    pub repulsion_strength: f64,
    pub repulsion_range: f64,
    pub obstacle_strength: f64,
    pub obstacle_range: f64,
    pub robot_repulsion: bool,
    pub robot_strength: f64,
    pub robot_range: f64,
    pub robot_radius: f64,
    pub robot_max_speed: f64,
    /// Below this speed a pedestrian's heading is undefined and ω is 0.
    pub heading_speed_floor: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            relaxation_time: 0.5,
            desired_speed: 1.2,
            max_pedestrian_speed: 1.8,
            pedestrian_radius: 0.3,
            arrival_radius: 0.5,
            repulsion_strength: 1.5,
            repulsion_range: 0.8,
            obstacle_strength: 10.0,
            obstacle_range: 0.2,
            robot_repulsion: true,
            robot_strength: 6.0,
            robot_range: 0.3,
            robot_radius: 0.3,
            robot_max_speed: 1.0,
            heading_speed_floor: 0.2,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter { name: "dt", reason: "must be > 0" });
        }
        if !(self.relaxation_time > 0.0) {
            return Err(Error::InvalidParameter { name: "relaxation_time", reason: "must be > 0" });
        }
        Ok(())
    }
}

/// An immutable world snapshot.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorldState {
    pub clock: SimClock,
    pub robot: RobotState,
    pub robot_goal: Vec2,
    pub pedestrians: Vec<PedestrianState>,
    pub obstacles: Vec<Rect>,
}

/// Places the robot and the crowd for `scenario`.
pub fn make_scenario(scenario: &Scenario, params: &SimParams) -> Result<WorldState> {
    scenario.validate()?;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let radius = scenario.circle_radius;
    let n = scenario.pedestrian_count;
    let mut obstacles = scenario.static_obstacles.clone();

    let (robot_start, robot_goal, pedestrians) = match scenario.kind {
        ScenarioKind::CircleCrossing => {
            let robot_angle = -PI / 2.0;
            let agents = n + 1;
            let slot = 2.0 * PI / agents as f64;
            let min_angle = 2.0 * libm::asin((MIN_SPAWN_SPACING / (2.0 * radius)).min(1.0));
            if n > 0 && (2.0 * radius * libm::sin(slot / 2.0) < MIN_SPAWN_SPACING || slot < min_angle) {
                return Err(Error::CrowdDoesNotFit { count: n, radius, spacing: MIN_SPAWN_SPACING });
            }
            // Jitter is bounded so neighbouring slots never come closer than
            // the minimum spacing.
            let jitter = ((slot - min_angle) * 0.5 * 0.5).max(0.0);
            let peds = (0..n)
                .map(|k| {
                    let angle = robot_angle + (k + 1) as f64 * slot + rng.gen_range(-1.0..=1.0) * jitter;
                    let start = Vec2::from_angle(angle) * radius;
                    PedestrianState {
                        id: k as u32,
                        position: start,
                        linear_velocity: Vec2::ZERO,
                        angular_velocity: 0.0,
                        goal: -start,
                    }
                })
                .collect();
            let start = Vec2::from_angle(robot_angle) * radius;
            (start, -start, peds)
        }
        ScenarioKind::Corridor => {
            let half_width = 1.8;
            let wall = 0.4;
            obstacles.push(Rect::from_corners(
                Vec2::new(-radius - 2.0, half_width),
                Vec2::new(radius + 2.0, half_width + wall),
            ));
            obstacles.push(Rect::from_corners(
                Vec2::new(-radius - 2.0, -half_width - wall),
                Vec2::new(radius + 2.0, -half_width),
            ));
            let start = Vec2::new(-radius, 0.0);
            let goal = Vec2::new(radius, 0.0);
            let lateral = half_width - params.pedestrian_radius - 0.2;
            let peds = sample_spaced(&mut rng, n, start, |rng| {
                let p = Vec2::new(rng.gen_range(-radius + 1.0..=radius), rng.gen_range(-lateral..=lateral));
                (p, Vec2::new(-radius - 1.0, p.y))
            })
            .ok_or(Error::CrowdDoesNotFit { count: n, radius, spacing: MIN_SPAWN_SPACING })?;
            (start, goal, peds)
        }
        ScenarioKind::RandomGoals => {
            let start = Vec2::new(0.0, -radius);
            let peds = sample_spaced(&mut rng, n, start, |rng| {
                let p = Vec2::new(rng.gen_range(-radius..=radius), rng.gen_range(-radius..=radius));
                let g = Vec2::new(rng.gen_range(-radius..=radius), rng.gen_range(-radius..=radius));
                (p, g)
            })
            .ok_or(Error::CrowdDoesNotFit { count: n, radius, spacing: MIN_SPAWN_SPACING })?;
            (start, -start, peds)
        }
    };

    Ok(WorldState {
        clock: SimClock { step_index: 0, dt: params.dt },
        robot: RobotState {
            position: robot_start,
            heading: wrap_angle((robot_goal - robot_start).angle()),
            speed: 0.0,
        },
        robot_goal,
        pedestrians,
        obstacles,
    })
}

fn sample_spaced(
    rng: &mut ChaCha8Rng,
    n: usize,
    robot: Vec2,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> (Vec2, Vec2),
) -> Option<Vec<PedestrianState>> {
    let mut peds: Vec<PedestrianState> = Vec::with_capacity(n);
    let mut attempts = 0;
    while peds.len() < n {
        attempts += 1;
        if attempts > 1000 * (n + 1) {
            return None;
        }
        let (p, goal) = draw(rng);
        let clear = p.distance(robot) >= MIN_SPAWN_SPACING
            && peds.iter().all(|q| q.position.distance(p) >= MIN_SPAWN_SPACING);
        if clear {
            peds.push(PedestrianState {
                id: peds.len() as u32,
                position: p,
                linear_velocity: Vec2::ZERO,
                angular_velocity: 0.0,
                goal,
            });
        }
    }
    Some(peds)
}

/// Unit vector pushing `from` away from `other`, with a deterministic
/// fallback for coincident points.
fn away(from: Vec2, other: Vec2, tiebreak: f64) -> (Vec2, f64) {
    let diff = from - other;
    let dist = diff.norm();
    match diff.normalized() {
        Some(n) => (n, dist),
        None => (Vec2::new(if tiebreak >= 0.0 { 1.0 } else { -1.0 }, 0.0), dist),
    }
}

/// Desired-velocity relaxation term towards the pedestrian's goal.
pub fn goal_force(ped: &PedestrianState, params: &SimParams) -> Vec2 {
    let to_goal = ped.goal - ped.position;
    let dist = to_goal.norm();
    let desired = to_goal * (params.desired_speed / dist.max(params.arrival_radius));
    (desired - ped.linear_velocity) * (1.0 / params.relaxation_time)
}

/// Repulsion exerted on `a` by pedestrian `b`.
pub fn pairwise_force(a: &PedestrianState, b: &PedestrianState, params: &SimParams) -> Vec2 {
    let (n, dist) = away(a.position, b.position, a.id as f64 - b.id as f64);
    let reach = 2.0 * params.pedestrian_radius;
    n * (params.repulsion_strength * libm::exp((reach - dist) / params.repulsion_range))
}

/// Repulsion from the nearest point of a static obstacle.
pub fn obstacle_force(ped: &PedestrianState, obstacle: &Rect, params: &SimParams) -> Vec2 {
    let closest = obstacle.closest_point(ped.position);
    let (n, dist) = if obstacle.contains(ped.position) {
        (away(ped.position, obstacle.center(), 1.0).0, 0.0)
    } else {
        away(ped.position, closest, 1.0)
    };
    n * (params.obstacle_strength * libm::exp((params.pedestrian_radius - dist) / params.obstacle_range))
}

pub fn robot_force(ped: &PedestrianState, robot: &RobotState, params: &SimParams) -> Vec2 {
    if !params.robot_repulsion {
        return Vec2::ZERO;
    }
    let (n, dist) = away(ped.position, robot.position, 1.0);
    let reach = params.pedestrian_radius + params.robot_radius;
    n * (params.robot_strength * libm::exp((reach - dist) / params.robot_range))
}

/// Total social force acting on pedestrian `index`.
pub fn net_force(world: &WorldState, index: usize, params: &SimParams) -> Vec2 {
    let ped = &world.pedestrians[index];
    let mut f = goal_force(ped, params);
    for (j, other) in world.pedestrians.iter().enumerate() {
        if j != index {
            f += pairwise_force(ped, other, params);
        }
    }
    for obstacle in &world.obstacles {
        f += obstacle_force(ped, obstacle, params);
    }
    f + robot_force(ped, &world.robot, params)
}

/// Advances the world by `dt`. Pedestrians follow the social-force model
/// (semi-implicit Euler, speed-clamped); the robot moves kinematically with
/// `robot_command` (robot frame) clamped to its maximum speed.
pub fn step_world(world: &WorldState, robot_command: Vec2, dt: f64, params: &SimParams) -> WorldState {
    debug_assert!(dt > 0.0);
    let pedestrians = (0..world.pedestrians.len())
        .map(|i| {
            let ped = &world.pedestrians[i];
            let force = net_force(world, i, params);
            let v = (ped.linear_velocity + force * dt).clamp_norm(params.max_pedestrian_speed);
            let floor = params.heading_speed_floor;
            let omega = if ped.linear_velocity.norm() > floor && v.norm() > floor {
                wrap_angle(v.angle() - ped.linear_velocity.angle()) / dt
            } else {
                0.0
            };
            PedestrianState {
                position: ped.position + v * dt,
                linear_velocity: v,
                angular_velocity: omega,
                ..*ped
            }
        })
        .collect();

    let command = robot_command.clamp_norm(params.robot_max_speed);
    let velocity = world.robot.to_world(command);
    let robot = RobotState {
        position: world.robot.position + velocity * dt,
        heading: world.robot.heading,
        speed: command.norm(),
    };

    WorldState {
        clock: SimClock { step_index: world.clock.step_index + 1, dt },
        robot,
        robot_goal: world.robot_goal,
        pedestrians,
        obstacles: world.obstacles.clone(),
    }
}

/// Pedestrians whose position lies in the window footprint (closed lower
/// edges, open upper edges).
pub fn pedestrians_in_window(world: &WorldState, window: &GridWindow) -> Vec<PedestrianState> {
    world
        .pedestrians
        .iter()
        .filter(|p| window.contains(p.position))
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lone(position: Vec2, goal: Vec2) -> WorldState {
        WorldState {
            clock: SimClock { step_index: 0, dt: 0.1 },
            robot: RobotState { position: Vec2::new(100.0, 100.0), heading: 0.0, speed: 0.0 },
            robot_goal: Vec2::new(100.0, 100.0),
            pedestrians: alloc::vec![PedestrianState {
                id: 0,
                position,
                linear_velocity: Vec2::ZERO,
                angular_velocity: 0.0,
                goal,
            }],
            obstacles: Vec::new(),
        }
    }

    #[test]
    fn empty_circle_crossing_has_robot_only() {
        let w = make_scenario(&Scenario::circle_crossing(0, 4.0, 1), &SimParams::default()).unwrap();
        assert!(w.pedestrians.is_empty());
        assert!((w.robot.position.distance(w.robot_goal) - 8.0).abs() < 1e-12);
        // facing the goal
        let facing = Vec2::from_angle(w.robot.heading);
        assert!((facing.dot((w.robot_goal - w.robot.position) * 0.125) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scenario_is_deterministic_per_seed() {
        let s = Scenario::circle_crossing(4, 4.0, 7);
        let p = SimParams::default();
        assert_eq!(make_scenario(&s, &p).unwrap(), make_scenario(&s, &p).unwrap());
        assert_ne!(make_scenario(&s, &p).unwrap(), make_scenario(&s.with_seed(8), &p).unwrap());
    }

    #[test]
    fn antipodal_goals_cross_the_center() {
        let w = make_scenario(&Scenario::circle_crossing(6, 4.0, 3), &SimParams::default()).unwrap();
        for p in &w.pedestrians {
            // distance from the origin to the segment start→goal
            let d = p.goal - p.position;
            let t = (-p.position.dot(d) / d.norm_squared()).clamp(0.0, 1.0);
            assert!((p.position + d * t).norm() <= 1.0);
        }
    }

    #[test]
    fn overcrowded_circle_is_rejected() {
        let err = make_scenario(&Scenario::circle_crossing(60, 4.0, 0), &SimParams::default());
        assert!(matches!(err, Err(Error::CrowdDoesNotFit { .. })));
        assert!(make_scenario(&Scenario::circle_crossing(30, 0.5, 0), &SimParams::default()).is_err());
    }

    #[test]
    fn invalid_radius_is_rejected() {
        assert!(make_scenario(&Scenario::circle_crossing(0, 0.0, 0), &SimParams::default()).is_err());
    }

    #[test]
    fn pedestrian_at_goal_stays() {
        let p = SimParams::default();
        let g = Vec2::new(1.0, 2.0);
        let mut w = lone(g, g);
        assert!(net_force(&w, 0, &p).norm() < 1e-12);
        for _ in 0..50 {
            w = step_world(&w, Vec2::ZERO, 0.1, &p);
        }
        assert!(w.pedestrians[0].position.distance(g) <= 0.05);
    }

    #[test]
    fn head_on_repulsion_is_antisymmetric() {
        let p = SimParams::default();
        let a = PedestrianState {
            id: 0,
            position: Vec2::new(0.0, 0.0),
            linear_velocity: Vec2::new(1.0, 0.0),
            angular_velocity: 0.0,
            goal: Vec2::new(5.0, 0.0),
        };
        let b = PedestrianState { id: 1, position: Vec2::new(1.0, 0.0), goal: Vec2::new(-4.0, 0.0), ..a };
        let fa = pairwise_force(&a, &b, &p);
        let fb = pairwise_force(&b, &a, &p);
        assert!(fa.x < 0.0 && fb.x > 0.0);
        assert_eq!(fa.x, -fb.x);
    }

    #[test]
    fn robot_moves_by_clamped_command() {
        let p = SimParams::default();
        let mut w = lone(Vec2::new(50.0, 50.0), Vec2::new(50.0, 50.0));
        w.robot = RobotState { position: Vec2::ZERO, heading: PI / 2.0, speed: 0.0 };
        let next = step_world(&w, Vec2::new(5.0, 0.0), 0.1, &p);
        assert!((next.robot.position - Vec2::new(0.0, 0.1)).norm() < 1e-12);
        assert_eq!(next.robot.speed, 1.0);
        assert_eq!(next.clock.step_index, 1);
    }

    #[test]
    fn corridor_and_random_goals_generate() {
        let p = SimParams::default();
        for kind in [ScenarioKind::Corridor, ScenarioKind::RandomGoals] {
            let s = Scenario { kind, pedestrian_count: 5, circle_radius: 4.0, static_obstacles: Vec::new(), seed: 9 };
            let w = make_scenario(&s, &p).unwrap();
            assert_eq!(w.pedestrians.len(), 5);
            for (i, a) in w.pedestrians.iter().enumerate() {
                for b in &w.pedestrians[i + 1..] {
                    assert!(a.position.distance(b.position) >= MIN_SPAWN_SPACING);
                }
            }
        }
    }
}
