//! Two-lane kinematic highway simulator.
//!
//! Vehicles are points with a rectangular footprint, advanced by explicit
//! Euler integration. The ego vehicle follows the agent's commands; manual
//! vehicles decide lane changes with the regret model and follow their
//! leader with a proportional speed law.
//!
//! Lateral positions grow to the left: the right lane is centered at
//! `-lane_width / 2`, the left lane at `+lane_width / 2`.

mod affordance;
mod manual;
mod reward;
mod trace;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regret::RegretParams;

pub use affordance::{extract_affordances, AffordanceVector, AFFORDANCE_DIM};
pub use manual::{lane_change_intent, mv_decision, mv_decision_with, mv_observation, mv_policy, MvCommand, MvSituation};
pub use reward::{reward_components, RewardBreakdown, RewardConfig};
pub use trace::{write_trace_line, SceneSnapshot, VehicleSnapshot};

/// Index of the ego vehicle in [`Scene::vehicles`].
pub const EGO: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadConfig {
    pub length: f64,
    pub lane_width: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    /// Integration step in seconds.
    pub dt: f64,
    /// Magnitude of the accelerate/decelerate command.
    pub max_accel: f64,
    /// Magnitude of the lateral speed used for lane changes.
    pub lateral_speed: f64,
    /// The ego is off the road once `|y|` exceeds this.
    pub offroad_bound: f64,
    /// Episode time cap in steps.
    pub max_steps: u32,
    /// Initial positions are perturbed uniformly by up to this many meters.
    pub jitter: f64,
    pub sensing_range: f64,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self {
            length: 400.0,
            lane_width: 3.5,
            vehicle_length: 4.5,
            vehicle_width: 2.0,
            dt: 0.1,
            max_accel: 2.0,
            lateral_speed: 1.8,
            offroad_bound: 2.0,
            max_steps: 600,
            jitter: 2.0,
            sensing_range: 100.0,
        }
    }
}

impl RoadConfig {
    pub fn lane_center(&self, lane: Lane) -> f64 {
        match lane {
            Lane::Right => -0.5 * self.lane_width,
            Lane::Left => 0.5 * self.lane_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("lane_width", self.lane_width),
            ("vehicle_length", self.vehicle_length),
            ("vehicle_width", self.vehicle_width),
            ("dt", self.dt),
            ("max_accel", self.max_accel),
            ("lateral_speed", self.lateral_speed),
            ("offroad_bound", self.offroad_bound),
            ("sensing_range", self.sensing_range),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("road {name} must be > 0")));
            }
        }
        if !(self.jitter >= 0.0) || self.max_steps == 0 {
            return Err(Error::Config("road jitter must be >= 0 and max_steps >= 1".into()));
        }
        Ok(())
    }
}

/// Behavior constants of the manual vehicles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    /// Lane-change decisions are evaluated once per this many seconds.
    pub decision_period: f64,
    /// A leader closer than this (bumper to bumper) can block.
    pub block_distance: f64,
    /// A leader blocks when slower than `v_b - block_speed_margin`.
    pub block_speed_margin: f64,
    /// Gain of the proportional speed law, 1/s.
    pub speed_gain: f64,
    /// Below this time headway the desired speed drops to the leader's.
    pub min_headway: f64,
    /// Strongest braking available when a rear-end conflict is imminent.
    pub emergency_decel: f64,
    /// Bumper gap kept when stopping behind a leader.
    pub standstill_gap: f64,
    /// No lane change starts while a target-lane vehicle is within this
    /// longitudinal distance (center to center).
    pub merge_clearance: f64,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            decision_period: 1.0,
            block_distance: 50.0,
            block_speed_margin: 0.5,
            speed_gain: 1.0,
            min_headway: 2.0,
            emergency_decel: 8.0,
            standstill_gap: 2.0,
            merge_clearance: 9.0,
        }
    }
}

/// Everything that stays fixed during an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub road: RoadConfig,
    pub drivers: DriverConfig,
    pub reward: RewardConfig,
    /// Decision profile shared by every manual driver.
    pub profile: RegretParams<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            road: RoadConfig::default(),
            drivers: DriverConfig::default(),
            reward: RewardConfig::default(),
            profile: RegretParams::pilot_driver(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lane {
    Right,
    Left,
}

impl Lane {
    /// Lane whose center is nearest to `y`.
    pub fn nearest(y: f64) -> Self {
        if y >= 0.0 {
            Lane::Left
        } else {
            Lane::Right
        }
    }

    pub fn other(self) -> Self {
        match self {
            Lane::Right => Lane::Left,
            Lane::Left => Lane::Right,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub v_x: f64,
    pub v_y: f64,
    /// Longitudinal acceleration currently commanded.
    pub a_x: f64,
}

/// Explicit Euler step. Positions advance with the pre-update velocity and
/// the longitudinal speed never drops below zero.
pub fn euler_step(state: VehicleState, dt: f64) -> VehicleState {
    VehicleState {
        x: state.x + state.v_x * dt,
        y: state.y + state.v_y * dt,
        v_x: (state.v_x + state.a_x * dt).max(0.0),
        ..state
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Ego,
    Manual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Maneuver {
    None,
    ChangingLane,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: usize,
    pub role: Role,
    pub state: VehicleState,
    /// Best speed `v_b`; ignored for the ego.
    pub best_speed: f64,
    pub lane_target: Lane,
    pub maneuver: Maneuver,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EgoAction {
    LaneLeft,
    LaneRight,
    Accelerate,
    Decelerate,
    Maintain,
}

impl EgoAction {
    pub const ALL: [EgoAction; 5] = [
        EgoAction::LaneLeft,
        EgoAction::LaneRight,
        EgoAction::Accelerate,
        EgoAction::Decelerate,
        EgoAction::Maintain,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// `(a_x, v_y)` commanded by this action.
    pub fn command(self, road: &RoadConfig) -> (f64, f64) {
        match self {
            EgoAction::LaneLeft => (0.0, road.lateral_speed),
            EgoAction::LaneRight => (0.0, -road.lateral_speed),
            EgoAction::Accelerate => (road.max_accel, 0.0),
            EgoAction::Decelerate => (-road.max_accel, 0.0),
            EgoAction::Maintain => (0.0, 0.0),
        }
    }

    pub fn is_lateral(self) -> bool {
        matches!(self, EgoAction::LaneLeft | EgoAction::LaneRight)
    }

    pub fn name(self) -> &'static str {
        match self {
            EgoAction::LaneLeft => "lane_left",
            EgoAction::LaneRight => "lane_right",
            EgoAction::Accelerate => "accelerate",
            EgoAction::Decelerate => "decelerate",
            EgoAction::Maintain => "maintain",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terminal {
    Collision,
    OffRoad,
    GoalReached,
    TimeLimit,
}

impl Terminal {
    pub fn name(self) -> &'static str {
        match self {
            Terminal::Collision => "collision",
            Terminal::OffRoad => "off_road",
            Terminal::GoalReached => "goal",
            Terminal::TimeLimit => "time_limit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub config: SimConfig,
    /// The ego is always at index [`EGO`].
    pub vehicles: Vec<Vehicle>,
    pub step: u32,
    pub terminal: Option<Terminal>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub scene: Scene,
    pub reward: RewardBreakdown,
    pub terminal: Option<Terminal>,
}

// Prespecified start: the ego approaches in the left lane; a slow leader
// blocks a manual vehicle in the right lane.
const EGO_START_X: f64 = 10.0;
const EGO_START_SPEED: f64 = 12.5;
const EGO_TO_BLOCKED_GAP: f64 = 10.0;
const BLOCKED_SPEED: f64 = 5.56;
const BLOCKED_BEST_SPEED: f64 = 12.5;
const BLOCKED_TO_LEADER_GAP: f64 = 12.0;
const LEADER_SPEED: f64 = 5.56;

impl Scene {
    pub fn ego(&self) -> &Vehicle {
        &self.vehicles[EGO]
    }

    pub fn road(&self) -> &RoadConfig {
        &self.config.road
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.road.dt
    }

    pub fn manual_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.vehicles
            .iter()
            .enumerate()
            .filter(|(_, v)| v.role == Role::Manual)
            .map(|(i, _)| i)
    }
}

/// Builds the start scene with the default manual-driver and reward setup.
pub fn init_scene(road: &RoadConfig, seed: u64) -> Scene {
    init_scene_with(
        &SimConfig {
            road: road.clone(),
            ..SimConfig::default()
        },
        seed,
    )
}

pub fn init_scene_with(config: &SimConfig, seed: u64) -> Scene {
    let road = &config.road;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = || {
        if road.jitter > 0.0 {
            rng.gen_range(-road.jitter..=road.jitter)
        } else {
            0.0
        }
    };

    let blocked_x = EGO_START_X + road.vehicle_length + EGO_TO_BLOCKED_GAP;
    let leader_x = blocked_x + road.vehicle_length + BLOCKED_TO_LEADER_GAP;
    let left = road.lane_center(Lane::Left);
    let right = road.lane_center(Lane::Right);
    let vehicle = |id, role, x: f64, y, v_x, best_speed, lane| Vehicle {
        id,
        role,
        state: VehicleState {
            x,
            y,
            v_x,
            ..VehicleState::default()
        },
        best_speed,
        lane_target: lane,
        maneuver: Maneuver::None,
    };

    let vehicles = vec![
        vehicle(0, Role::Ego, EGO_START_X + jitter(), left, EGO_START_SPEED, EGO_START_SPEED, Lane::Left),
        vehicle(1, Role::Manual, blocked_x + jitter(), right, BLOCKED_SPEED, BLOCKED_BEST_SPEED, Lane::Right),
        vehicle(2, Role::Manual, leader_x + jitter(), right, LEADER_SPEED, LEADER_SPEED, Lane::Right),
    ];
    Scene {
        config: config.clone(),
        vehicles,
        step: 0,
        terminal: None,
    }
}

/// First pair of vehicles whose footprints overlap.
pub fn check_collision(scene: &Scene) -> Option<(usize, usize)> {
    let road = scene.road();
    let vs = &scene.vehicles;
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            if footprints_overlap(&vs[i].state, &vs[j].state, road) {
                return Some((vs[i].id, vs[j].id));
            }
        }
    }
    None
}

pub fn footprints_overlap(a: &VehicleState, b: &VehicleState, road: &RoadConfig) -> bool {
    (a.x - b.x).abs() < road.vehicle_length && (a.y - b.y).abs() < road.vehicle_width
}

/// Lateral speed toward `target_y` that never overshoots it within one step.
pub fn lateral_speed_toward(y: f64, target_y: f64, road: &RoadConfig) -> f64 {
    let remaining = target_y - y;
    remaining.signum() * road.lateral_speed.min(remaining.abs() / road.dt)
}

const SNAP_DISTANCE: f64 = 0.05;

/// Advances the scene by one time step under the ego's action.
pub fn step(scene: &Scene, action: EgoAction) -> Result<StepOutcome> {
    if let Some(t) = scene.terminal {
        return Err(Error::State(format!("scene already terminated ({})", t.name())));
    }
    let road = scene.road().clone();
    let commands: Vec<Option<MvCommand>> = (0..scene.vehicles.len())
        .map(|i| (scene.vehicles[i].role == Role::Manual).then(|| mv_policy(scene, i)))
        .collect();

    let mut next = scene.clone();
    for (vehicle, command) in next.vehicles.iter_mut().zip(commands) {
        let (a_x, v_y) = match (vehicle.role, command) {
            (Role::Ego, _) => action.command(&road),
            (Role::Manual, Some(cmd)) => {
                if let Some(target) = cmd.start_change {
                    vehicle.maneuver = Maneuver::ChangingLane;
                    vehicle.lane_target = target;
                }
                (cmd.a_x, cmd.v_y)
            }
            (Role::Manual, None) => unreachable!("manual vehicles always receive a command"),
        };
        vehicle.state.a_x = a_x;
        vehicle.state.v_y = v_y;
        vehicle.state = euler_step(vehicle.state, road.dt);
        if vehicle.maneuver == Maneuver::ChangingLane {
            let center = road.lane_center(vehicle.lane_target);
            if (vehicle.state.y - center).abs() < SNAP_DISTANCE {
                vehicle.state.y = center;
                vehicle.state.v_y = 0.0;
                vehicle.maneuver = Maneuver::None;
            }
        }
    }
    next.step += 1;

    let collision = check_collision(&next).is_some();
    let ego = next.ego().state;
    let terminal = if collision {
        Some(Terminal::Collision)
    } else if ego.y.abs() > road.offroad_bound {
        Some(Terminal::OffRoad)
    } else if ego.x >= road.length {
        Some(Terminal::GoalReached)
    } else if next.step >= road.max_steps {
        Some(Terminal::TimeLimit)
    } else {
        None
    };
    next.terminal = terminal;
    let reward = reward_components(&next, collision, &next.config.reward);
    Ok(StepOutcome {
        scene: next,
        reward,
        terminal,
    })
}
