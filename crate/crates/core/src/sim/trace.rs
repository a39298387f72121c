//! JSON-lines scene trace.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::{Role, Scene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleSnapshot {
    pub id: usize,
    pub role: Role,
    pub x: f64,
    pub y: f64,
    pub v_x: f64,
    pub v_y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub step: u32,
    pub vehicles: Vec<VehicleSnapshot>,
}

impl From<&Scene> for SceneSnapshot {
    fn from(scene: &Scene) -> Self {
        Self {
            step: scene.step,
            vehicles: scene
                .vehicles
                .iter()
                .map(|v| VehicleSnapshot {
                    id: v.id,
                    role: v.role,
                    x: v.state.x,
                    y: v.state.y,
                    v_x: v.state.v_x,
                    v_y: v.state.v_y,
                })
                .collect(),
        }
    }
}

pub fn write_trace_line<W: Write>(out: &mut W, scene: &Scene) -> Result<()> {
    serde_json::to_writer(&mut *out, &SceneSnapshot::from(scene))?;
    out.write_all(b"\n").map_err(|e| crate::Error::io("trace", e))?;
    Ok(())
}
