//! Short-horizon action shield.
//!
//! Manual vehicles are rolled forward under their predicted lane choice,
//! the ego under the proposed action; an action whose rollout brings the
//! ego within the conflict box of any vehicle, or off the road, is
//! replaced.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agent::Experience;
use crate::error::{Error, Result};
use crate::regret::{LaneDecision, RegretParams};
use crate::sim::{
    euler_step, extract_affordances, lateral_speed_toward, mv_decision_with, EgoAction, Maneuver, Scene,
    VehicleState, EGO,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisorConfig {
    pub enabled: bool,
    /// Prediction horizon in seconds.
    pub t_pred: f64,
    /// Longitudinal conflict distance, center to center.
    pub safe_distance: f64,
    /// Lateral conflict distance, center to center.
    pub lateral_gap: f64,
    pub dt: f64,
    pub offroad_bound: f64,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            t_pred: 0.7,
            safe_distance: 18.0,
            lateral_gap: 2.5,
            dt: 0.1,
            offroad_bound: 2.0,
        }
    }
}

impl SupervisorConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [self.t_pred, self.safe_distance, self.lateral_gap, self.dt, self.offroad_bound];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("supervisor horizon, distances and dt must be > 0".into()));
        }
        Ok(())
    }

    /// Number of predicted steps.
    pub fn horizon(&self) -> usize {
        // The small slack keeps 0.7 / 0.1 from rounding up to 8.
        ((self.t_pred / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SafetyVerdict {
    Safe,
    UnsafeCollision { vehicle: usize, step: usize },
    UnsafeOffRoad { step: usize },
}

impl SafetyVerdict {
    pub fn is_safe(self) -> bool {
        self == SafetyVerdict::Safe
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupervisionResult {
    pub executed: EgoAction,
    pub vetoed: Option<(EgoAction, SafetyVerdict)>,
    /// Terminal transition pairing the original state with the vetoed action.
    pub unsafe_experience: Option<Experience>,
}

/// Predicted states of one manual vehicle, steps `1..=horizon`.
#[derive(Clone, Debug, PartialEq)]
pub struct MvPrediction {
    pub id: usize,
    pub states: Vec<VehicleState>,
}

/// Constant-speed rollouts of every manual vehicle. A vehicle predicted to
/// change lanes, or already doing so, drifts toward the target lane center.
pub fn predict_mv_trajectories(
    scene: &Scene,
    params: &RegretParams<f64>,
    cfg: &SupervisorConfig,
) -> Vec<MvPrediction> {
    let road = scene.road();
    scene
        .manual_indices()
        .map(|i| {
            let v = &scene.vehicles[i];
            let target = match v.maneuver {
                Maneuver::ChangingLane => Some(v.lane_target),
                Maneuver::None => match mv_decision_with(scene, i, params) {
                    Some((lane, trace)) if trace.decision == LaneDecision::ChangeLane => Some(lane),
                    _ => None,
                },
            };
            let mut s = VehicleState { a_x: 0.0, ..v.state };
            let states = (0..cfg.horizon())
                .map(|_| {
                    s.v_y = match target {
                        Some(lane) => lateral_speed_toward(s.y, road.lane_center(lane), road),
                        None => 0.0,
                    };
                    s = euler_step(s, cfg.dt);
                    s
                })
                .collect();
            MvPrediction { id: v.id, states }
        })
        .collect()
}

/// Ego states after steps `1..=horizon` under a held action.
pub fn predict_ego_trajectory(scene: &Scene, action: EgoAction, cfg: &SupervisorConfig) -> Vec<VehicleState> {
    let (a_x, v_y) = action.command(scene.road());
    let mut s = VehicleState {
        a_x,
        v_y,
        ..scene.vehicles[EGO].state
    };
    (0..cfg.horizon())
        .map(|_| {
            s = euler_step(s, cfg.dt);
            s
        })
        .collect()
}

fn verdict_for(ego: &[VehicleState], mvs: &[MvPrediction], cfg: &SupervisorConfig) -> SafetyVerdict {
    for (k, e) in ego.iter().enumerate() {
        for mv in mvs {
            let o = &mv.states[k];
            if (o.y - e.y).abs() < cfg.lateral_gap && (o.x - e.x).abs() < cfg.safe_distance {
                return SafetyVerdict::UnsafeCollision {
                    vehicle: mv.id,
                    step: k + 1,
                };
            }
        }
        if e.y.abs() > cfg.offroad_bound {
            return SafetyVerdict::UnsafeOffRoad { step: k + 1 };
        }
    }
    SafetyVerdict::Safe
}

pub fn check_action(
    scene: &Scene,
    action: EgoAction,
    params: &RegretParams<f64>,
    cfg: &SupervisorConfig,
) -> SafetyVerdict {
    let mvs = predict_mv_trajectories(scene, params, cfg);
    verdict_for(&predict_ego_trajectory(scene, action, cfg), &mvs, cfg)
}

/// Smallest predicted footprint clearance to any manual vehicle.
fn min_separation(ego: &[VehicleState], mvs: &[MvPrediction], scene: &Scene) -> f64 {
    let road = scene.road();
    let mut worst = f64::INFINITY;
    for (k, e) in ego.iter().enumerate() {
        for mv in mvs {
            let o = &mv.states[k];
            let clearance = ((o.x - e.x).abs() - road.vehicle_length).max((o.y - e.y).abs() - road.vehicle_width);
            worst = worst.min(clearance);
        }
    }
    worst
}

fn category_replacement(action: EgoAction) -> EgoAction {
    match action {
        EgoAction::LaneLeft | EgoAction::LaneRight => EgoAction::Maintain,
        EgoAction::Accelerate | EgoAction::Decelerate | EgoAction::Maintain => EgoAction::Decelerate,
    }
}

/// Safe substitute for an action judged unsafe. Lane changes fall back to
/// lane keeping and longitudinal actions to braking; if that is unsafe as
/// well, the action with the largest predicted clearance wins, preferring
/// safe actions and then actions that stay on the road.
pub fn replace_action(
    action: EgoAction,
    _verdict: SafetyVerdict,
    scene: &Scene,
    params: &RegretParams<f64>,
    cfg: &SupervisorConfig,
) -> EgoAction {
    let mvs = predict_mv_trajectories(scene, params, cfg);
    let candidate = category_replacement(action);
    if verdict_for(&predict_ego_trajectory(scene, candidate, cfg), &mvs, cfg).is_safe() {
        return candidate;
    }

    // Rank: safe, then on-road, then clearance.
    let scored: Vec<(EgoAction, (bool, bool, f64))> = EgoAction::ALL
        .iter()
        .map(|&a| {
            let traj = predict_ego_trajectory(scene, a, cfg);
            let safe = verdict_for(&traj, &mvs, cfg).is_safe();
            let on_road = traj.iter().all(|s| s.y.abs() <= cfg.offroad_bound);
            (a, (safe, on_road, min_separation(&traj, &mvs, scene)))
        })
        .collect();
    let mut best = scored[0];
    for &s in &scored[1..] {
        if s.1 > best.1 {
            best = s;
        }
    }
    best.0
}

/// Checks the proposed action and substitutes a safe one when needed.
/// Disabled supervisors pass every action through.
pub fn supervise(
    scene: &Scene,
    proposed: EgoAction,
    params: &RegretParams<f64>,
    cfg: &SupervisorConfig,
    r_col: f64,
) -> SupervisionResult {
    let pass = SupervisionResult {
        executed: proposed,
        vetoed: None,
        unsafe_experience: None,
    };
    if !cfg.enabled {
        return pass;
    }
    let verdict = check_action(scene, proposed, params, cfg);
    if verdict.is_safe() {
        return pass;
    }
    SupervisionResult {
        executed: replace_action(proposed, verdict, scene, params, cfg),
        vetoed: Some((proposed, verdict)),
        unsafe_experience: Some(Experience {
            state: extract_affordances(scene),
            action: proposed,
            reward: r_col,
            next: None,
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VetoEvent {
    pub epoch: u64,
    pub step: u32,
    pub original: EgoAction,
    pub verdict: SafetyVerdict,
    pub replacement: EgoAction,
}

pub fn write_veto_line<W: Write>(out: &mut W, event: &VetoEvent) -> Result<()> {
    serde_json::to_writer(&mut *out, event)?;
    out.write_all(b"\n").map_err(|e| Error::io("veto log", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{init_scene, RoadConfig};

    fn params() -> RegretParams<f64> {
        RegretParams::pilot_driver()
    }

    fn exact_scene() -> Scene {
        init_scene(&RoadConfig { jitter: 0.0, ..RoadConfig::default() }, 0)
    }

    fn place(scene: &mut Scene, i: usize, x: f64, y: f64, v_x: f64) {
        let s = &mut scene.vehicles[i].state;
        (s.x, s.y, s.v_x) = (x, y, v_x);
    }

    #[test]
    fn horizon_is_seven() {
        assert_eq!(SupervisorConfig::default().horizon(), 7);
    }

    #[test]
    fn ego_rollouts() {
        let cfg = SupervisorConfig::default();
        let mut scene = exact_scene();
        let maintain = predict_ego_trajectory(&scene, EgoAction::Maintain, &cfg);
        assert_eq!(maintain.len(), 7);
        for (k, s) in maintain.iter().enumerate() {
            assert!((s.x - (10.0 + 1.25 * (k + 1) as f64)).abs() < 1e-9);
        }
        place(&mut scene, 0, 10.0, -1.75, 0.0);
        for (k, s) in predict_ego_trajectory(&scene, EgoAction::LaneLeft, &cfg).iter().enumerate() {
            assert!((s.y - (-1.75 + 0.18 * (k + 1) as f64)).abs() < 1e-9);
        }
        for s in predict_ego_trajectory(&scene, EgoAction::Decelerate, &cfg) {
            assert_eq!(s.v_x, 0.0);
        }
    }

    #[test]
    fn mv_predictions() {
        let cfg = SupervisorConfig::default();
        let scene = exact_scene();
        let preds = predict_mv_trajectories(&scene, &params(), &cfg);
        assert_eq!(preds.len(), 2);
        // The blocked MV keeps its lane in the start scene.
        for s in &preds[0].states {
            assert_eq!(s.y, -1.75);
        }
        assert!((preds[0].states[6].x - (scene.vehicles[1].state.x + 0.7 * 5.56)).abs() < 1e-9);

        let mut open = exact_scene();
        place(&mut open, 0, 300.0, 1.75, 12.5);
        let drift = &predict_mv_trajectories(&open, &params(), &cfg)[0];
        for (k, s) in drift.states.iter().enumerate() {
            assert!((s.y - (-1.75 + 0.18 * (k + 1) as f64)).abs() < 1e-9);
        }

        let mut alone = exact_scene();
        alone.vehicles.truncate(1);
        assert!(predict_mv_trajectories(&alone, &params(), &cfg).is_empty());
    }

    #[test]
    fn verdicts() {
        let cfg = SupervisorConfig::default();
        let mut scene = exact_scene();
        // Right-lane occupant 12 m ahead at the same speed.
        place(&mut scene, 0, 100.0, 1.75, 10.0);
        place(&mut scene, 1, 112.0, -1.75, 10.0);
        place(&mut scene, 2, 250.0, -1.75, 10.0);
        scene.vehicles[1].best_speed = 10.0;
        assert!(matches!(
            check_action(&scene, EgoAction::LaneRight, &params(), &cfg),
            SafetyVerdict::UnsafeCollision { vehicle: 1, .. }
        ));
        assert_eq!(check_action(&scene, EgoAction::Maintain, &params(), &cfg), SafetyVerdict::Safe);
        assert!(matches!(
            check_action(&scene, EgoAction::LaneLeft, &params(), &cfg),
            SafetyVerdict::UnsafeOffRoad { .. }
        ));
    }

    #[test]
    fn replacements() {
        let cfg = SupervisorConfig::default();
        let mut scene = exact_scene();
        place(&mut scene, 0, 100.0, 1.75, 10.0);
        place(&mut scene, 1, 112.0, -1.75, 10.0);
        place(&mut scene, 2, 250.0, -1.75, 10.0);
        scene.vehicles[1].best_speed = 10.0;
        let p = params();
        let v = check_action(&scene, EgoAction::LaneRight, &p, &cfg);
        assert_eq!(replace_action(EgoAction::LaneRight, v, &scene, &p, &cfg), EgoAction::Maintain);
        let v = check_action(&scene, EgoAction::LaneLeft, &p, &cfg);
        assert_eq!(replace_action(EgoAction::LaneLeft, v, &scene, &p, &cfg), EgoAction::Maintain);

        // Same-lane leader: speeding up closes the gap inside the box.
        let mut follow = scene.clone();
        place(&mut follow, 1, 100.0 + 18.2, 1.75, 10.0);
        let v = check_action(&follow, EgoAction::Accelerate, &p, &cfg);
        assert!(!v.is_safe());
        assert_eq!(check_action(&follow, EgoAction::Decelerate, &p, &cfg), SafetyVerdict::Safe);
        assert_eq!(replace_action(EgoAction::Accelerate, v, &follow, &p, &cfg), EgoAction::Decelerate);
    }

    #[test]
    fn supervise_outcomes() {
        let mut cfg = SupervisorConfig::default();
        let mut scene = exact_scene();
        place(&mut scene, 0, 100.0, 1.75, 10.0);
        place(&mut scene, 1, 112.0, -1.75, 10.0);
        place(&mut scene, 2, 250.0, -1.75, 10.0);
        scene.vehicles[1].best_speed = 10.0;
        let before = scene.clone();

        let safe = supervise(&scene, EgoAction::Maintain, &params(), &cfg, -2000.0);
        assert_eq!(safe.executed, EgoAction::Maintain);
        assert!(safe.vetoed.is_none() && safe.unsafe_experience.is_none());

        let vetoed = supervise(&scene, EgoAction::LaneRight, &params(), &cfg, -2000.0);
        assert_eq!(vetoed.executed, EgoAction::Maintain);
        let e = vetoed.unsafe_experience.unwrap();
        assert_eq!((e.action, e.reward, e.next), (EgoAction::LaneRight, -2000.0, None));
        assert_eq!(e.state, extract_affordances(&scene));
        assert!(vetoed.vetoed.is_some());
        assert_eq!(scene, before);

        cfg.enabled = false;
        let off = supervise(&scene, EgoAction::LaneRight, &params(), &cfg, -2000.0);
        assert_eq!(off.executed, EgoAction::LaneRight);
        assert!(off.vetoed.is_none());
    }

    #[test]
    fn veto_log_line() {
        let mut buf = Vec::new();
        let event = VetoEvent {
            epoch: 3,
            step: 40,
            original: EgoAction::LaneRight,
            verdict: SafetyVerdict::UnsafeCollision { vehicle: 1, step: 4 },
            replacement: EgoAction::Maintain,
        };
        write_veto_line(&mut buf, &event).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with('\n'));
        assert_eq!(serde_json::from_str::<VetoEvent>(text.trim()).unwrap(), event);
    }
}
