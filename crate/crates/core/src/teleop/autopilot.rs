//! Scripted operator that moves the wrist along the wire, optionally
//! correcting with visual feedback.
//!
//! The operator intends the ring to follow the centerline at constant speed.
//! The arm is posed so the true wrist reaches the intended point, the IMUs
//! report that posture through the drift model, and the session maps the
//! drifted readings to the ring. With feedback, the operator shifts the
//! intended point against the observed ring error: `du/dt = -k (ring - desired)`.

use serde::{Deserialize, Serialize};

use super::offline::InputFeed;
use super::{Input, Mapping, SessionConfig, SessionState, TeleopError};
use crate::arm::{ArmModel, ImuPair};
use crate::geom::{RigidTransform, Vector3};
use crate::imusim::reach::wrist_reach;
use crate::imusim::{check_rate, sample_count, sample_time, DriftModel, ImuSimulator, DEFAULT_RATE_HZ};
use crate::task::Wire;

pub const DEFAULT_FEEDBACK_GAIN: f64 = 2.0;
/// Intended wrist targets are kept inside this fraction of full reach.
const REACH_FRACTION: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutopilotConfig {
    /// Time to traverse the wire, seconds.
    pub duration_s: f64,
    pub sensor_rate_hz: u32,
    pub drift: DriftModel,
    /// Visual-feedback gain, 1/s; `None` runs open loop.
    pub feedback_gain: Option<f64>,
    /// Elbow swivel, radians.
    pub swivel: f64,
}

impl Default for AutopilotConfig {
    fn default() -> Self {
        Self {
            duration_s: 20.0,
            sensor_rate_hz: DEFAULT_RATE_HZ,
            drift: DriftModel::zero(),
            feedback_gain: None,
            swivel: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Autopilot {
    wire: Wire,
    arm: ArmModel,
    to_shoulder: RigidTransform,
    mapping: Mapping,
    config: AutopilotConfig,
    sim: ImuSimulator,
    samples: usize,
    correction: Vector3,
    last_observed: Option<f64>,
    last_truth: ImuPair,
}

impl Autopilot {
    pub fn new(session: &SessionConfig, config: AutopilotConfig) -> Result<Self, TeleopError> {
        check_rate(config.sensor_rate_hz)?;
        if !(config.duration_s > 0.0 && config.duration_s.is_finite()) {
            return Err(TeleopError::InvalidConfig(format!("duration {}", config.duration_s)));
        }
        if config.feedback_gain.is_some_and(|k| !(k >= 0.0 && k.is_finite())) {
            return Err(TeleopError::InvalidConfig("feedback gain".into()));
        }
        let mapping = Mapping::new(session.scale, session.offset).ok_or(TeleopError::InvalidScale(session.scale))?;
        Ok(Self {
            wire: session.wire.clone(),
            arm: session.arm,
            to_shoulder: session.arm_base.inverse(),
            mapping,
            sim: ImuSimulator::new(&config.drift, config.sensor_rate_hz)?,
            samples: sample_count(config.duration_s, config.sensor_rate_hz),
            config,
            correction: Vector3::ZERO,
            last_observed: None,
            last_truth: ImuPair::identity(0.0),
        })
    }

    /// Intended ring center at time `t`, before correction.
    pub fn desired(&self, t: f64) -> Vector3 {
        let u = (t / self.config.duration_s).clamp(0.0, 1.0);
        self.wire.point_at(u * self.wire.length()).0
    }

    pub fn sensor_rate_hz(&self) -> u32 {
        self.config.sensor_rate_hz
    }

    pub fn correction(&self) -> Vector3 {
        self.correction
    }

    fn wrist_target(&self, t: f64) -> Vector3 {
        let task = self.desired(t) + self.correction;
        let p = self.to_shoulder.transform_point(&self.mapping.input_point(&task));
        let max = REACH_FRACTION * (self.arm.upper_arm() + self.arm.forearm());
        let r = p.norm();
        if r > max {
            p * (max / r)
        } else {
            p
        }
    }

    /// True (drift-free) IMU readings for time `t`.
    pub fn truth(&mut self, t: f64) -> ImuPair {
        if let Ok(imus) = wrist_reach(&self.arm, &self.wrist_target(t), self.config.swivel) {
            self.last_truth = imus;
        }
        self.last_truth.at(t)
    }
}

impl InputFeed for Autopilot {
    fn len(&self) -> usize {
        self.samples
    }

    fn input(&mut self, k: usize) -> Result<(f64, Input), TeleopError> {
        let t = sample_time(k, self.config.sensor_rate_hz);
        let truth = self.truth(t);
        Ok((t, Input::Imus(self.sim.corrupt(&truth))))
    }

    fn observe(&mut self, state: &SessionState) {
        let dt = self.last_observed.map_or(0.0, |last| state.t - last);
        self.last_observed = Some(state.t);
        if let Some(k) = self.config.feedback_gain {
            let error = state.ring.translation - self.desired(state.t);
            self.correction = self.correction - error * (k * dt);
        }
    }
}
