//! Linear per-step reward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Lane, Scene, EGO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub w_s: f64,
    pub w_v: f64,
    pub w_c: f64,
    pub w_h: f64,
    pub v_min: f64,
    pub v_target: f64,
    pub v_max: f64,
    /// Largest tolerated offset from the lane center.
    pub d_c: f64,
    /// Smallest tolerated gap to the front vehicle.
    pub d_s: f64,
    /// Smallest tolerated time headway.
    pub t_min: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_s: 2000.0,
            w_v: 10.0,
            w_c: 3.0,
            w_h: 15.0,
            v_min: 5.56,
            v_target: 12.5,
            v_max: 16.67,
            d_c: 0.5,
            d_s: 18.0,
            t_min: 2.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_min < self.v_target && self.v_target < self.v_max) {
            return Err(Error::Config("reward speeds must satisfy v_min < v_target < v_max".into()));
        }
        let all = [self.w_s, self.w_v, self.w_c, self.w_h, self.d_c, self.d_s, self.t_min];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("reward weights and thresholds must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Speed term: a tent that peaks at the target speed.
    pub fn speed_reward(&self, v_x: f64) -> f64 {
        if v_x <= self.v_min || v_x > self.v_max {
            0.0
        } else if v_x <= self.v_target {
            (v_x - self.v_min) / (self.v_target - self.v_min)
        } else {
            (self.v_max - v_x) / (self.v_max - self.v_target)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_s: f64,
    pub r_v: f64,
    pub r_c: f64,
    pub r_h: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(r_s: f64, r_v: f64, r_c: f64, r_h: f64, cfg: &RewardConfig) -> Self {
        let total = cfg.w_s * r_s + cfg.w_v * r_v + cfg.w_c * r_c + cfg.w_h * r_h;
        Self { r_s, r_v, r_c, r_h, total }
    }
}

/// Reward for arriving in `scene`.
pub fn reward_components(scene: &Scene, collision: bool, cfg: &RewardConfig) -> RewardBreakdown {
    let road = scene.road();
    let ego = &scene.vehicles[EGO];
    let s = ego.state;

    let r_s = if collision { -1.0 } else { 0.0 };
    let r_v = cfg.speed_reward(s.v_x);
    let lane = Lane::nearest(s.y);
    let r_c = if (s.y - road.lane_center(lane)).abs() >= cfg.d_c { -1.0 } else { 0.0 };

    let front = scene
        .vehicles
        .iter()
        .skip(1)
        .filter(|v| Lane::nearest(v.state.y) == lane && v.state.x > s.x)
        .min_by(|a, b| a.state.x.total_cmp(&b.state.x));
    let r_h = match front {
        None => 0.0,
        Some(v) => {
            let d = (v.state.x - s.x - road.vehicle_length).max(0.0);
            let dv = (v.state.v_x - s.v_x).abs();
            let headway = if dv < 0.01 { f64::INFINITY } else { d / dv };
            if headway < cfg.t_min || d < cfg.d_s {
                -1.0
            } else {
                0.0
            }
        }
    };
    RewardBreakdown::new(r_s, r_v, r_c, r_h, cfg)
}
