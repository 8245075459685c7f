//! JSON messages exchanged with the browser UI.
//!
//! The UI works in a left-handed frame: every position and orientation is
//! passed through [`handedness_convert`] on the way out and on the way in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Command, Input, InputSource, Phase, SessionState};
use crate::arm::{JointConfig, Skeleton};
use crate::geom::{handedness_convert, RigidTransform, UnitQuaternion, Vector3};
use crate::task::{collision_threshold_mm, TrialSummary, Wire};

/// Points per meter of centerline in the scene polyline.
const POLYLINE_DENSITY: f64 = 500.0;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMsg {
    pub p: [f64; 3],
    pub q: [f64; 4],
}

impl PoseMsg {
    pub fn to_ui(pose: &RigidTransform) -> Self {
        let (p, q) = handedness_convert(&pose.translation, &pose.rotation);
        Self {
            p: p.to_array(),
            q: q.to_array(),
        }
    }

    pub fn from_ui(&self) -> Result<RigidTransform, BridgeError> {
        if self.p.iter().chain(&self.q).any(|v| !v.is_finite()) {
            return Err(BridgeError::InvalidPose("non-finite value".into()));
        }
        let q = UnitQuaternion::from_array(self.q).map_err(|e| BridgeError::InvalidPose(e.to_string()))?;
        let (p, q) = handedness_convert(&Vector3::from(self.p), &q);
        Ok(RigidTransform::new(q, p))
    }
}

fn ui_point(p: &Vector3) -> [f64; 3] {
    [p.x, p.y, -p.z]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmMsg {
    pub shoulder: [f64; 3],
    pub elbow: [f64; 3],
    pub wrist: [f64; 3],
    pub fingertip: [f64; 3],
}

impl From<&Skeleton> for ArmMsg {
    fn from(s: &Skeleton) -> Self {
        Self {
            shoulder: ui_point(&s.shoulder),
            elbow: ui_point(&s.elbow),
            wrist: ui_point(&s.wrist),
            fingertip: ui_point(&s.fingertip),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMsg {
    pub phase: Phase,
    pub elapsed_s: f64,
    pub progress_s: f64,
    pub summary: Option<TrialSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub t: f64,
    pub source: InputSource,
    pub ring: PoseMsg,
    pub arm: Option<ArmMsg>,
    pub pos_err_mm: f64,
    pub ori_err_deg: f64,
    pub collision: bool,
    pub trial: TrialMsg,
    pub clutch: bool,
    pub stale: bool,
}

impl From<&SessionState> for StateMessage {
    fn from(s: &SessionState) -> Self {
        Self {
            t: s.t,
            source: s.source,
            ring: PoseMsg::to_ui(&s.ring),
            arm: s.skeleton.as_ref().map(ArmMsg::from),
            pos_err_mm: s.metrics.position_error * 1e3,
            ori_err_deg: s.metrics.orientation_error,
            collision: s.metrics.collision,
            trial: TrialMsg {
                phase: s.phase,
                elapsed_s: s.elapsed_s,
                progress_s: s.progress_s,
                summary: s.summary,
            },
            clutch: s.clutch,
            stale: s.stale,
        }
    }
}

/// Static scene description sent once per connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMessage {
    pub wire_id: String,
    pub length: f64,
    pub tube_radius: f64,
    pub ring_inner_radius: f64,
    pub ring_outer_radius: f64,
    pub threshold_mm: f64,
    pub polyline: Vec<[f64; 3]>,
}

impl SceneMessage {
    pub fn new(wire: &Wire, ring_inner_radius: f64, ring_outer_radius: f64) -> Self {
        let n = ((wire.length() * POLYLINE_DENSITY).ceil() as usize).max(1);
        let polyline = (0..=n)
            .map(|k| ui_point(&wire.point_at(wire.length() * k as f64 / n as f64).0))
            .collect();
        Self {
            wire_id: wire.id().to_string(),
            length: wire.length(),
            tube_radius: wire.tube_radius(),
            ring_inner_radius,
            ring_outer_radius,
            threshold_mm: collision_threshold_mm(ring_inner_radius, wire.tube_radius()),
            polyline,
        }
    }
}

/// Server-to-UI message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    Scene(SceneMessage),
    State(StateMessage),
}

impl Outbound {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("outbound messages serialize")
    }
}

/// UI-to-server message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlMessage {
    Start,
    Stop,
    Clutch { engaged: bool },
    InputPose { p: [f64; 3], q: [f64; 4] },
    /// Absolute joint angles, radians.
    InputJoints { q: [f64; 5] },
}

/// What a control message asks the session to do.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Command(Command),
    Input(Input),
}

impl ControlMessage {
    pub fn parse(text: &str) -> Result<Self, BridgeError> {
        serde_json::from_str(text).map_err(|e| BridgeError::Malformed(e.to_string()))
    }

    pub fn into_action(self) -> Result<Action, BridgeError> {
        Ok(match self {
            ControlMessage::Start => Action::Command(Command::Start),
            ControlMessage::Stop => Action::Command(Command::Stop),
            ControlMessage::Clutch { engaged } => Action::Command(Command::Clutch { engaged }),
            ControlMessage::InputPose { p, q } => Action::Input(Input::Pose {
                pose: PoseMsg { p, q }.from_ui()?,
            }),
            ControlMessage::InputJoints { q } => {
                if q.iter().any(|v| !v.is_finite()) {
                    return Err(BridgeError::InvalidPose("non-finite joint".into()));
                }
                Action::Input(Input::Joints {
                    q: JointConfig::new(q[0], q[1], q[2], q[3], q[4]),
                })
            }
        })
    }
}
