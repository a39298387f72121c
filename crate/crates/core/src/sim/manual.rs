//! Manual vehicle behavior: regret-based lane choice and car following.

use crate::regret::{
    advantage_from_parts, keep_lane_utility, net_advantage, DecisionTrace, LaneChangeObservation, LaneDecision,
    RegretParams, MIN_LEADER_SPEED,
};

use super::{lateral_speed_toward, Lane, Maneuver, Role, Scene, Vehicle};

/// Command produced for one manual vehicle for the next step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MvCommand {
    pub a_x: f64,
    pub v_y: f64,
    /// Set when a lane change toward this lane begins on this step.
    pub start_change: Option<Lane>,
}

/// What a blocked manual vehicle sees when weighing a lane change.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MvSituation {
    pub target: Lane,
    /// `None` when no vehicle approaches from behind in the target lane.
    pub observation: Option<LaneChangeObservation<f64>>,
    pub leader_speed: f64,
    pub best_speed: f64,
}

fn bumper_gap(behind: &Vehicle, ahead: &Vehicle, length: f64) -> f64 {
    (ahead.state.x - behind.state.x - length).max(0.0)
}

fn same_lane_leader(scene: &Scene, index: usize) -> Option<&Vehicle> {
    let me = &scene.vehicles[index];
    let lane = Lane::nearest(me.state.y);
    scene
        .vehicles
        .iter()
        .enumerate()
        .filter(|(j, v)| *j != index && Lane::nearest(v.state.y) == lane && v.state.x > me.state.x)
        .map(|(_, v)| v)
        .min_by(|a, b| a.state.x.total_cmp(&b.state.x))
}

/// Nearest vehicle ahead whose footprint would meet this one laterally.
fn path_leader(scene: &Scene, index: usize) -> Option<&Vehicle> {
    let me = &scene.vehicles[index];
    let reach = scene.road().vehicle_width + 0.5;
    scene
        .vehicles
        .iter()
        .enumerate()
        .filter(|(j, v)| *j != index && (v.state.y - me.state.y).abs() < reach && v.state.x > me.state.x)
        .map(|(_, v)| v)
        .min_by(|a, b| a.state.x.total_cmp(&b.state.x))
}

/// Observation for a lane change, or `None` when the vehicle is not in a
/// position to consider one: not manual, mid-maneuver, unblocked, leader
/// stopped, target lane occupied alongside, or no room or gain ahead in the
/// target lane.
pub fn mv_observation(scene: &Scene, index: usize) -> Option<MvSituation> {
    let me = scene.vehicles.get(index)?;
    if me.role != Role::Manual || me.maneuver != Maneuver::None {
        return None;
    }
    let road = scene.road();
    let drivers = &scene.config.drivers;
    let leader = same_lane_leader(scene, index)?;
    let blocked = bumper_gap(me, leader, road.vehicle_length) <= drivers.block_distance
        && leader.state.v_x < me.best_speed - drivers.block_speed_margin;
    if !blocked || leader.state.v_x <= MIN_LEADER_SPEED {
        return None;
    }

    let target = Lane::nearest(me.state.y).other();
    let in_target = |v: &&Vehicle| v.id != me.id && Lane::nearest(v.state.y) == target;
    if scene
        .vehicles
        .iter()
        .filter(in_target)
        .any(|v| (v.state.x - me.state.x).abs() < drivers.merge_clearance)
    {
        return None;
    }
    // Moving over only pays off, and only fits, if whoever leads the target
    // lane is faster than the current leader and leaves a headway gap.
    let target_leader = scene
        .vehicles
        .iter()
        .filter(in_target)
        .filter(|v| v.state.x > me.state.x)
        .min_by(|a, b| a.state.x.total_cmp(&b.state.x));
    if let Some(tl) = target_leader {
        let gap = bumper_gap(me, tl, road.vehicle_length);
        let closure = (me.state.v_x - tl.state.v_x).max(0.0);
        let needed = (drivers.min_headway * me.state.v_x)
            .max(drivers.standstill_gap + closure * closure / (2.0 * road.max_accel));
        if tl.state.v_x <= leader.state.v_x || gap < needed {
            return None;
        }
    }
    let approacher = scene
        .vehicles
        .iter()
        .filter(in_target)
        .filter(|v| v.state.x < me.state.x && v.state.v_x > MIN_LEADER_SPEED)
        .max_by(|a, b| a.state.x.total_cmp(&b.state.x));

    let observation = approacher.and_then(|a| {
        LaneChangeObservation::new(
            leader.state.v_x,
            me.state.v_x,
            a.state.v_x,
            me.best_speed,
            bumper_gap(a, me, road.vehicle_length),
        )
        .ok()
    });
    Some(MvSituation {
        target,
        observation,
        leader_speed: leader.state.v_x,
        best_speed: me.best_speed,
    })
}

/// Evaluates the lane-change decision of a manual vehicle regardless of the
/// decision clock.
pub fn mv_decision(scene: &Scene, index: usize) -> Option<(Lane, DecisionTrace<f64>)> {
    mv_decision_with(scene, index, &scene.config.profile)
}

/// Same as [`mv_decision`] under an arbitrary decision profile.
pub fn mv_decision_with(
    scene: &Scene,
    index: usize,
    profile: &RegretParams<f64>,
) -> Option<(Lane, DecisionTrace<f64>)> {
    let situation = mv_observation(scene, index)?;
    let trace = match situation.observation {
        Some(obs) => net_advantage(&obs, profile).ok()?,
        None => {
            // Nobody approaches: the change succeeds for sure, and the fast
            // lane is assumed to flow at the driver's best speed.
            let v_b = situation.best_speed;
            let obs =
                LaneChangeObservation::new(situation.leader_speed, v_b, v_b, v_b, 0.0).ok()?;
            let u_keep = keep_lane_utility(&obs, profile).ok()?;
            let (w_val, e_ck) = advantage_from_parts(u_keep, 1.0, profile).ok()?;
            DecisionTrace {
                t_c: crate::regret::TimeToCollision::Never,
                p_hat: 1.0,
                u_keep,
                w_val,
                e_ck,
                decision: LaneDecision::from_advantage(e_ck),
            }
        }
    };
    Some((situation.target, trace))
}

fn decision_tick(scene: &Scene) -> bool {
    let period = (scene.config.drivers.decision_period / scene.road().dt).round().max(1.0) as u32;
    scene.step.is_multiple_of(period)
}

/// Lane the vehicle starts changing toward on this step, if any.
pub fn lane_change_intent(scene: &Scene, index: usize) -> Option<Lane> {
    if !decision_tick(scene) {
        return None;
    }
    match mv_decision(scene, index)? {
        (lane, trace) if trace.decision == LaneDecision::ChangeLane => Some(lane),
        _ => None,
    }
}

/// Longitudinal and lateral command of a manual vehicle.
pub fn mv_policy(scene: &Scene, index: usize) -> MvCommand {
    let road = scene.road();
    let drivers = &scene.config.drivers;
    let me = &scene.vehicles[index];
    let s = me.state;

    let (v_y, start_change) = match me.maneuver {
        Maneuver::ChangingLane => (lateral_speed_toward(s.y, road.lane_center(me.lane_target), road), None),
        Maneuver::None => match lane_change_intent(scene, index) {
            Some(target) => (lateral_speed_toward(s.y, road.lane_center(target), road), Some(target)),
            None => (0.0, None),
        },
    };

    let mut v_des = me.best_speed;
    let mut a_x;
    match path_leader(scene, index) {
        Some(leader) => {
            let gap = leader.state.x - s.x - road.vehicle_length;
            let headway = if s.v_x > 1e-9 { gap / s.v_x } else { f64::INFINITY };
            if headway < drivers.min_headway {
                v_des = v_des.min(leader.state.v_x);
            }
            a_x = (drivers.speed_gain * (v_des - s.v_x)).clamp(-road.max_accel, road.max_accel);
            let closure = s.v_x - leader.state.v_x;
            if closure > 0.0 {
                let room = gap - drivers.standstill_gap;
                let needed = if room > 1e-6 {
                    closure * closure / (2.0 * room)
                } else {
                    f64::INFINITY
                };
                if needed > road.max_accel {
                    a_x = a_x.min(-needed.min(drivers.emergency_decel));
                }
            }
        }
        None => {
            a_x = (drivers.speed_gain * (v_des - s.v_x)).clamp(-road.max_accel, road.max_accel);
        }
    }

    MvCommand { a_x, v_y, start_change }
}
