//! Regret-theoretic model of a human driver's lane-change decision.
//!
//! A driver stuck behind a slower leader weighs changing lanes (option C)
//! against keeping the lane and yielding (option K). Utilities are normalized
//! by the collision cost, so the collision outcome of option C has utility
//! `-1` and the slow-down outcome of option K is expressed through the
//! observed speeds. The net advantage mixes the regret-transformed utility
//! differences with subjectively weighted probabilities:
//!
//! ```text
//! e_ck = w(p̂) q(-u_keep) + (1 - w(p̂)) q(-1)
//! ```
//!
//! and the driver changes lanes only when `e_ck > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest leader speed accepted by [`LaneChangeObservation::new`], in m/s.
pub const MIN_LEADER_SPEED: f64 = 0.05;

/// Per-driver constants of the decision model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretParams<T> {
    pub sigma1: T,
    pub sigma2: T,
    pub sigma3: T,
    /// Slow-down cost scale in m²/s².
    pub eta1: T,
    pub beta1: T,
    pub beta2: T,
    /// Duration of a safe and comfortable lane change, in seconds.
    pub tau_s: T,
}

impl<T: Real> RegretParams<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sigma1: T,
        sigma2: T,
        sigma3: T,
        eta1: T,
        beta1: T,
        beta2: T,
        tau_s: T,
    ) -> Result<Self> {
        let params = Self {
            sigma1,
            sigma2,
            sigma3,
            eta1,
            beta1,
            beta2,
            tau_s,
        };
        params.validate()?;
        Ok(params)
    }

    /// Constants fitted to the pilot driver in the original lane-change study.
    pub fn pilot_driver() -> Self {
        Self {
            sigma1: T::lit(10.1795),
            sigma2: T::lit(0.1130),
            sigma3: T::lit(0.5108),
            eta1: T::lit(152.5796),
            beta1: T::lit(9.9170),
            beta2: T::lit(2.3812),
            tau_s: T::lit(3.5193),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("sigma3", self.sigma3),
            ("eta1", self.eta1),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ];
        for (name, value) in nonneg {
            if !value.is_finite() || value < T::zero() {
                return Err(Error::Domain(format!("{name} must be finite and >= 0, got {value}")));
            }
        }
        if !self.tau_s.is_finite() || self.tau_s <= T::zero() {
            return Err(Error::Domain(format!("tau_s must be finite and > 0, got {}", self.tau_s)));
        }
        Ok(())
    }
}

/// What a deciding driver observes about the lane-change situation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeObservation<T> {
    /// Speed of the blocking leader.
    pub v_s: T,
    /// Current speed of the deciding vehicle.
    pub v_c: T,
    /// Speed of the approaching vehicle in the target lane.
    pub v_f: T,
    /// Best speed the driver has in mind.
    pub v_b: T,
    /// Gap to the approaching vehicle.
    pub d: T,
}

impl<T: Real> LaneChangeObservation<T> {
    pub fn new(v_s: T, v_c: T, v_f: T, v_b: T, d: T) -> Result<Self> {
        for (name, value) in [("v_s", v_s), ("v_c", v_c), ("v_f", v_f), ("v_b", v_b), ("d", d)] {
            if !value.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite, got {value}")));
            }
            if value < T::zero() {
                return Err(Error::Domain(format!("{name} must be >= 0, got {value}")));
            }
        }
        if v_s <= T::lit(MIN_LEADER_SPEED) {
            return Err(Error::Domain(format!(
                "leader speed v_s must exceed {MIN_LEADER_SPEED} m/s, got {v_s}"
            )));
        }
        if v_s > v_b {
            return Err(Error::Domain(format!("v_s ({v_s}) must not exceed v_b ({v_b})")));
        }
        Ok(Self { v_s, v_c, v_f, v_b, d })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LaneDecision {
    ChangeLane,
    KeepLane,
}

impl LaneDecision {
    pub fn from_advantage<T: Real>(e_ck: T) -> Self {
        if e_ck > T::zero() {
            LaneDecision::ChangeLane
        } else {
            LaneDecision::KeepLane
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            LaneDecision::ChangeLane => LaneDecision::KeepLane,
            LaneDecision::KeepLane => LaneDecision::ChangeLane,
        }
    }

    /// Single-letter code used by the dataset files.
    pub fn code(self) -> char {
        match self {
            LaneDecision::ChangeLane => 'C',
            LaneDecision::KeepLane => 'K',
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code.trim() {
            "C" | "c" => Some(LaneDecision::ChangeLane),
            "K" | "k" => Some(LaneDecision::KeepLane),
            _ => None,
        }
    }
}

/// Time-to-collision with the approaching vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeToCollision<T> {
    Finite(T),
    /// The approaching vehicle is not closing in.
    Never,
}

/// Every intermediate quantity of one decision evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecisionTrace<T> {
    pub t_c: TimeToCollision<T>,
    pub p_hat: T,
    pub u_keep: T,
    pub w_val: T,
    pub e_ck: T,
    pub decision: LaneDecision,
}

/// Regret transform `q(Δu) = σ1 sinh(σ2 Δu) + σ3 Δu`.
pub fn regret_transform<T: Real>(delta_u: T, params: &RegretParams<T>) -> Result<T> {
    if !delta_u.is_finite() {
        return Err(Error::Domain(format!("utility difference must be finite, got {delta_u}")));
    }
    Ok(params.sigma1 * (params.sigma2 * delta_u).sinh() + params.sigma3 * delta_u)
}

/// Prelec weighting `w(p) = exp(-β1 (-ln p)^β2)`, with `w(0) = 0` and `w(1) = 1`.
pub fn probability_weight<T: Real>(p_obj: T, params: &RegretParams<T>) -> Result<T> {
    if !(p_obj >= T::zero() && p_obj <= T::one()) {
        return Err(Error::Domain(format!("probability must lie in [0, 1], got {p_obj}")));
    }
    if p_obj == T::zero() {
        return Ok(T::zero());
    }
    if p_obj == T::one() {
        return Ok(T::one());
    }
    let w = (-params.beta1 * (-p_obj.ln()).powf(params.beta2)).exp();
    Ok(w.max(T::zero()).min(T::one()))
}

pub fn time_to_collision<T: Real>(d: T, v_f: T, v_c: T) -> Result<TimeToCollision<T>> {
    if !(d >= T::zero()) {
        return Err(Error::Domain(format!("gap must be >= 0, got {d}")));
    }
    if v_c < v_f {
        Ok(TimeToCollision::Finite(d / (v_f - v_c)))
    } else {
        Ok(TimeToCollision::Never)
    }
}

/// Driver's estimate `p̂ = t_c / τs`, clipped at one.
pub fn estimate_success_probability<T: Real>(t_c: TimeToCollision<T>, params: &RegretParams<T>) -> T {
    match t_c {
        TimeToCollision::Never => T::one(),
        TimeToCollision::Finite(t) if t >= params.tau_s => T::one(),
        TimeToCollision::Finite(t) => (t / params.tau_s).max(T::zero()),
    }
}

/// Normalized utility of keeping the lane when changing would have succeeded:
/// `η1 (1/v_f² - v_b / (v_s v_f²))`.
pub fn keep_lane_utility<T: Real>(obs: &LaneChangeObservation<T>, params: &RegretParams<T>) -> Result<T> {
    if obs.v_s == T::zero() {
        return Err(Error::Singular("leader speed v_s is zero".into()));
    }
    if obs.v_f == T::zero() {
        return Err(Error::Singular("approaching speed v_f is zero".into()));
    }
    let vf2 = obs.v_f * obs.v_f;
    Ok(params.eta1 * (T::one() / vf2 - obs.v_b / (obs.v_s * vf2)))
}

/// Mixes the two outcome columns for a given keep-lane utility and success
/// estimate.
pub fn advantage_from_parts<T: Real>(u_keep: T, p_hat: T, params: &RegretParams<T>) -> Result<(T, T)> {
    let w = probability_weight(p_hat, params)?;
    let success = regret_transform(-u_keep, params)?;
    let failure = regret_transform(-T::one(), params)?;
    Ok((w, w * success + (T::one() - w) * failure))
}

pub fn net_advantage<T: Real>(obs: &LaneChangeObservation<T>, params: &RegretParams<T>) -> Result<DecisionTrace<T>> {
    let t_c = time_to_collision(obs.d, obs.v_f, obs.v_c)?;
    let p_hat = estimate_success_probability(t_c, params);
    let u_keep = keep_lane_utility(obs, params)?;
    let (w_val, e_ck) = advantage_from_parts(u_keep, p_hat, params)?;
    if !e_ck.is_finite() {
        return Err(Error::Domain(format!("net advantage is not finite for {obs:?}")));
    }
    Ok(DecisionTrace {
        t_c,
        p_hat,
        u_keep,
        w_val,
        e_ck,
        decision: LaneDecision::from_advantage(e_ck),
    })
}

pub fn decide<T: Real>(obs: &LaneChangeObservation<T>, params: &RegretParams<T>) -> Result<LaneDecision> {
    net_advantage(obs, params).map(|trace| trace.decision)
}
