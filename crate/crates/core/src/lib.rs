//! Safe reinforcement learning for two-lane highway driving.
//!
//! A double-DQN agent controls an ego vehicle among manually driven vehicles
//! whose lane changes follow a regret-theoretic decision model. A safety
//! supervisor predicts those decisions, rolls the scene forward over a short
//! horizon and replaces actions that would lead to a conflict.
//!
//! The numeric core ([`regret`], [`calibration`], [`neural`]) is generic over
//! [`Real`]; the simulator, supervisor and agent run in `f64`.

pub mod agent;
pub mod calibration;
pub mod error;
pub mod harness;
pub mod neural;
pub mod regret;
pub mod scalar;
pub mod sim;
pub mod supervisor;

pub use error::{Error, Result};
pub use scalar::Real;

pub type RegretParams64 = regret::RegretParams<f64>;
pub type RegretParams32 = regret::RegretParams<f32>;
pub type Observation64 = regret::LaneChangeObservation<f64>;
pub type Observation32 = regret::LaneChangeObservation<f32>;
pub type DecisionRecord64 = calibration::DecisionRecord<f64>;
pub type Mlp64 = neural::Mlp<f64>;
pub type Mlp32 = neural::Mlp<f32>;
