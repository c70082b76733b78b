//! Steering messages drained from rank 0's inbox.
//!
//! A steering line is `{"type":"steer","payload":{"action":..., ...}}`. Actions and
//! their fields:
//!
//! | action                  | fields                                              |
//! |-------------------------|-----------------------------------------------------|
//! | `pause`, `resume`, `step`, `exit` | —                                         |
//! | `set_period`            | `period` (≥ 1)                                      |
//! | `set_active_sources`    | `sources`: names or ids                             |
//! | `set_functor_chain`     | `source`, `chain`                                   |
//! | `set_transfer_function` | `source`, `points`: `[[t, r, g, b, a], ...]`        |
//! | `set_range`             | `source`, `min`, `max`                              |
//! | `set_camera`            | `position`, `look_at`, `up`, `fov?` (radians)       |
//! | `set_clip_planes`       | `planes`: `[{point, normal}, ...]`                  |
//! | `set_mode`              | `source`, `mode` (`volume`/`iso`), `iso_threshold?` |
//! | `set_interpolation`     | `enabled`                                           |
//! | `set_step_length`       | `step_length`                                       |
//!
//! `source` is a registered name or a numeric id.

use super::scene::{ClipSpec, ControlPoint, SceneState};
use crate::protocol::{message_type, SourceInfo};
use crate::render::RenderMode;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Simulation control requested by steering; routed to the harness, not the scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Control {
    pub paused: bool,
    pub exit: bool,
    /// Single steps requested while paused.
    pub step_requests: u32,
    pub period: u64,
}

impl Default for Control {
    fn default() -> Self {
        Self {
            paused: false,
            exit: false,
            step_requests: 0,
            period: 1,
        }
    }
}

impl Control {
    /// Whether the simulation may advance one step now; consumes a step request.
    pub fn take_step(&mut self) -> bool {
        if self.exit {
            return false;
        }
        if !self.paused {
            return true;
        }
        if self.step_requests > 0 {
            self.step_requests -= 1;
            return true;
        }
        false
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SteeringReport {
    pub applied: u64,
    /// Well-formed JSON that is not a steering line or names an unknown action.
    pub unknown: u64,
    /// Invalid JSON or a known action with missing or invalid fields.
    pub malformed: u64,
}

impl SteeringReport {
    pub fn absorb(&mut self, other: SteeringReport) {
        self.applied += other.applied;
        self.unknown += other.unknown;
        self.malformed += other.malformed;
    }
}

enum Outcome {
    Applied,
    Unknown,
    Malformed,
}

/// Applies `messages` in arrival order; later messages win per field.
///
/// The returned scene has its version bumped once if anything in it changed.
pub fn apply_steering(
    scene: &SceneState,
    control: &mut Control,
    sources: &[SourceInfo],
    messages: &[String],
) -> (SceneState, SteeringReport) {
    let mut next = scene.clone();
    let mut report = SteeringReport::default();
    for line in messages {
        let outcome = match serde_json::from_str::<Value>(line) {
            Err(_) => Outcome::Malformed,
            Ok(value) => apply_one(&value, &mut next, control, sources),
        };
        match outcome {
            Outcome::Applied => report.applied += 1,
            Outcome::Unknown => {
                report.unknown += 1;
                tracing::warn!(line = %line, "ignoring unknown steering message");
            }
            Outcome::Malformed => {
                report.malformed += 1;
                tracing::warn!(line = %line, "dropping malformed steering message");
            }
        }
    }
    let mut unversioned = next.clone();
    unversioned.version = scene.version;
    if unversioned != *scene {
        next.version = scene.version + 1;
    }
    (next, report)
}

fn apply_one(value: &Value, scene: &mut SceneState, control: &mut Control, sources: &[SourceInfo]) -> Outcome {
    if message_type(value) != Some("steer") {
        return Outcome::Unknown;
    }
    let Some(payload) = value.get("payload").filter(|p| p.is_object()) else {
        return Outcome::Malformed;
    };
    let Some(action) = payload.get("action").and_then(Value::as_str) else {
        return Outcome::Malformed;
    };
    let result = match action {
        "pause" => {
            control.paused = true;
            Some(())
        }
        "resume" => {
            control.paused = false;
            control.step_requests = 0;
            Some(())
        }
        "step" => {
            control.step_requests = control.step_requests.saturating_add(1);
            Some(())
        }
        "exit" => {
            control.exit = true;
            Some(())
        }
        "set_period" => payload
            .get("period")
            .and_then(Value::as_u64)
            .filter(|&p| p >= 1)
            .map(|p| {
                control.period = p;
                scene.period = p;
            }),
        "set_active_sources" => payload.get("sources").and_then(Value::as_array).and_then(|list| {
            let mut ids = list
                .iter()
                .map(|s| source_id(s, sources))
                .collect::<Option<Vec<_>>>()?;
            ids.sort_unstable();
            ids.dedup();
            scene.active = ids;
            Some(())
        }),
        "set_functor_chain" => {
            let id = payload.get("source").and_then(|s| source_id(s, sources));
            let chain = payload.get("chain").and_then(Value::as_str);
            id.zip(chain).map(|(id, chain)| scene.sources[id].chain = chain.to_string())
        }
        "set_transfer_function" => {
            let id = payload.get("source").and_then(|s| source_id(s, sources));
            let points = payload.get("points").and_then(parse_points);
            id.zip(points).map(|(id, points)| scene.sources[id].points = points)
        }
        "set_range" => {
            let id = payload.get("source").and_then(|s| source_id(s, sources));
            let min = payload.get("min").and_then(Value::as_f64);
            let max = payload.get("max").and_then(Value::as_f64);
            match (id, min, max) {
                (Some(id), Some(min), Some(max)) if min < max => {
                    scene.sources[id].min = min;
                    scene.sources[id].max = max;
                    Some(())
                }
                _ => None,
            }
        }
        "set_camera" => {
            let position = payload.get("position").and_then(vec3);
            let look_at = payload.get("look_at").and_then(vec3);
            let up = payload.get("up").and_then(vec3);
            let fov = match payload.get("fov") {
                None => Some(scene.camera.vertical_fov),
                Some(v) => v.as_f64(),
            };
            match (position, look_at, up, fov) {
                (Some(position), Some(look_at), Some(up), Some(fov)) => {
                    let mut camera = scene.camera.clone();
                    camera.position = position;
                    camera.look_at = look_at;
                    camera.up = up;
                    camera.vertical_fov = fov;
                    camera.validate().ok().map(|_| scene.camera = camera)
                }
                _ => None,
            }
        }
        "set_clip_planes" => payload.get("planes").and_then(Value::as_array).and_then(|planes| {
            let parsed = planes
                .iter()
                .map(|p| {
                    let point = p.get("point").and_then(vec3)?;
                    let normal = p.get("normal").and_then(vec3)?;
                    Some(ClipSpec { point, normal })
                })
                .collect::<Option<Vec<_>>>()?;
            scene.clip_planes = parsed;
            Some(())
        }),
        "set_mode" => {
            let id = payload.get("source").and_then(|s| source_id(s, sources));
            let mode = payload
                .get("mode")
                .and_then(|m| serde_json::from_value::<RenderMode>(m.clone()).ok());
            let threshold = match payload.get("iso_threshold") {
                None => Some(None),
                Some(v) => v.as_f64().map(Some),
            };
            match (id, mode, threshold) {
                (Some(id), Some(mode), Some(threshold)) => {
                    scene.sources[id].mode = mode;
                    if let Some(t) = threshold {
                        scene.sources[id].iso_threshold = t;
                    }
                    Some(())
                }
                _ => None,
            }
        }
        "set_interpolation" => payload
            .get("enabled")
            .and_then(Value::as_bool)
            .map(|on| scene.interpolation = on),
        "set_step_length" => payload
            .get("step_length")
            .and_then(Value::as_f64)
            .filter(|&s| s > 0.0 && s.is_finite())
            .map(|s| scene.step_length = s),
        _ => return Outcome::Unknown,
    };
    match result {
        Some(()) => Outcome::Applied,
        None => Outcome::Malformed,
    }
}

fn source_id(value: &Value, sources: &[SourceInfo]) -> Option<usize> {
    match value {
        Value::String(name) => sources.iter().position(|s| &s.name == name),
        Value::Number(n) => n.as_u64().map(|id| id as usize).filter(|&id| id < sources.len()),
        _ => None,
    }
}

fn vec3(value: &Value) -> Option<[f64; 3]> {
    let arr = value.as_array()?;
    if arr.len() != 3 {
        return None;
    }
    let mut out = [0.0; 3];
    for (o, v) in out.iter_mut().zip(arr) {
        *o = v.as_f64().filter(|x| x.is_finite())?;
    }
    Some(out)
}

fn parse_points(value: &Value) -> Option<Vec<ControlPoint>> {
    let points = value
        .as_array()?
        .iter()
        .map(|p| {
            let arr = p.as_array().filter(|a| a.len() == 5)?;
            let mut v = [0.0; 5];
            for (o, x) in v.iter_mut().zip(arr) {
                *o = x.as_f64()?;
            }
            Some(ControlPoint {
                t: v[0],
                rgba: [v[1], v[2], v[3], v[4]],
            })
        })
        .collect::<Option<Vec<_>>>()?;
    (!points.is_empty()).then_some(points)
}
