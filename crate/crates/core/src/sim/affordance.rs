//! Normalized ego-centric observation.

use serde::{Deserialize, Serialize};

use super::{Lane, Scene, Vehicle, EGO};

pub const AFFORDANCE_DIM: usize = 12;

// Fixed normalization ranges.
const DISTANCE_RANGE: f64 = 100.0;
const SPEED_RANGE: f64 = 16.67;
const LATERAL_RANGE: f64 = 3.5;

/// Twelve indicators in `[-1, 1]`, in the order
/// `d_fr, v_fr, d_fl, v_fl, d_rr, v_rr, d_rl, v_rl, y, v_x, v_y, prev_a_x`.
/// Front/rear come first, lane second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffordanceVector(pub [f64; AFFORDANCE_DIM]);

impl AffordanceVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn d_fr(&self) -> f64 {
        self.0[0]
    }
    pub fn v_fr(&self) -> f64 {
        self.0[1]
    }
    pub fn d_fl(&self) -> f64 {
        self.0[2]
    }
    pub fn v_fl(&self) -> f64 {
        self.0[3]
    }
    pub fn d_rr(&self) -> f64 {
        self.0[4]
    }
    pub fn v_rr(&self) -> f64 {
        self.0[5]
    }
    pub fn d_rl(&self) -> f64 {
        self.0[6]
    }
    pub fn v_rl(&self) -> f64 {
        self.0[7]
    }
    pub fn y(&self) -> f64 {
        self.0[8]
    }
    pub fn v_x(&self) -> f64 {
        self.0[9]
    }
    pub fn v_y(&self) -> f64 {
        self.0[10]
    }
    pub fn prev_a_x(&self) -> f64 {
        self.0[11]
    }
}

fn unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-1.0, 1.0)
    }
}

fn neighbor_pair(ego: &Vehicle, other: Option<(&Vehicle, f64)>) -> (f64, f64) {
    match other {
        None => (1.0, 0.0),
        Some((v, gap)) => {
            let d = gap.clamp(0.0, DISTANCE_RANGE);
            let dv = (v.state.v_x - ego.state.v_x).clamp(-SPEED_RANGE, SPEED_RANGE);
            (unit(2.0 * d / DISTANCE_RANGE - 1.0), unit(dv / SPEED_RANGE))
        }
    }
}

pub fn extract_affordances(scene: &Scene) -> AffordanceVector {
    let road = scene.road();
    let ego = &scene.vehicles[EGO];
    let ex = ego.state.x;

    // Nearest vehicle per quadrant within sensing range, keyed by bumper gap.
    let mut nearest: [Option<(&Vehicle, f64)>; 4] = [None; 4];
    for v in scene.vehicles.iter().skip(1) {
        let front = v.state.x > ex;
        let gap = (v.state.x - ex).abs() - road.vehicle_length;
        if gap > road.sensing_range {
            continue;
        }
        let slot = match (front, Lane::nearest(v.state.y)) {
            (true, Lane::Right) => 0,
            (true, Lane::Left) => 1,
            (false, Lane::Right) => 2,
            (false, Lane::Left) => 3,
        };
        if nearest[slot].is_none_or(|(_, g)| gap < g) {
            nearest[slot] = Some((v, gap));
        }
    }

    let mut out = [0.0; AFFORDANCE_DIM];
    for (slot, entry) in nearest.iter().enumerate() {
        let (d, dv) = neighbor_pair(ego, *entry);
        out[2 * slot] = d;
        out[2 * slot + 1] = dv;
    }
    let s = ego.state;
    out[8] = unit(s.y / LATERAL_RANGE);
    out[9] = unit(2.0 * s.v_x / SPEED_RANGE - 1.0);
    out[10] = unit(s.v_y / road.lateral_speed);
    out[11] = unit(s.a_x / road.max_accel);
    AffordanceVector(out)
}
