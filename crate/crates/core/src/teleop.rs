//! Teleoperation session: maps input poses to the ring, tracks trial state,
//! and produces per-tick state snapshots.
//!
//! [`Session`] is a deterministic engine driven by explicit timestamps, so the
//! same inputs always give bit-identical records. The network front end and
//! the offline simulate/replay driver both feed it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{arm_skeleton, joints_to_imus, wrist_pose, ArmError, ArmModel, ImuPair, JointConfig, Skeleton};
use crate::geom::{RigidTransform, UnitQuaternion, Vector3};
use crate::imusim::SimError;
use crate::task::{
    evaluate, ring_pose_on, summarize, Metrics, RecorderPhase, Ring, TaskError, TrialConfig, TrialRecord,
    TrialRecorder, TrialSummary, Wire,
};

pub mod autopilot;
pub mod bridge;
pub mod datagram;
pub mod mapping;
pub mod offline;

pub use mapping::Mapping;

pub const DEFAULT_LOOP_RATE_HZ: u32 = 50;
pub const MIN_LOOP_RATE_HZ: u32 = 1;
pub const MAX_LOOP_RATE_HZ: u32 = 1000;
pub const DEFAULT_STALE_AFTER_S: f64 = 1.0;

#[derive(Debug, Error)]
pub enum TeleopError {
    #[error("mapping scale {0} outside [0.1, 10]")]
    InvalidScale(f64),
    #[error("loop rate {0} Hz outside [{MIN_LOOP_RATE_HZ}, {MAX_LOOP_RATE_HZ}]")]
    InvalidRate(u32),
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("{got:?} input offered to a {expected:?} session")]
    WrongSource { expected: InputSource, got: InputSource },
    #[error("tick at {now} s does not follow {last} s")]
    ClockWentBackwards { now: f64, last: f64 },
    #[error(transparent)]
    Arm(#[from] ArmError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputSource {
    Imusim,
    Datagram,
    Ui,
}

impl std::str::FromStr for InputSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "imusim" => Ok(Self::Imusim),
            "datagram" => Ok(Self::Datagram),
            "ui" => Ok(Self::Ui),
            other => Err(format!("unknown input source {other:?}")),
        }
    }
}

/// One input reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Input {
    Imus(ImuPair),
    /// Wrist pose in the input frame.
    Pose { pose: RigidTransform },
    Joints { q: JointConfig },
}

impl Input {
    fn allowed_for(&self, source: InputSource) -> bool {
        matches!(
            (self, source),
            (Input::Imus(_), InputSource::Imusim)
                | (Input::Pose { .. }, InputSource::Datagram)
                | (Input::Pose { .. }, InputSource::Ui)
                | (Input::Joints { .. }, InputSource::Ui)
        )
    }

    fn source(&self) -> InputSource {
        match self {
            Input::Imus(_) => InputSource::Imusim,
            Input::Pose { .. } => InputSource::Datagram,
            Input::Joints { .. } => InputSource::Ui,
        }
    }
}

/// Shoulder frame to input frame for arm-driven inputs: the wire origin sits
/// 0.35 m ahead of and 0.10 m below the shoulder, with the wire's x axis
/// running to the operator's right.
pub fn default_arm_base() -> RigidTransform {
    RigidTransform::new(UnitQuaternion::from_rot_z(-std::f64::consts::FRAC_PI_2), Vector3::new(0.35, 0.0, -0.10))
        .inverse()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub wire: Wire,
    pub arm: ArmModel,
    pub source: InputSource,
    pub loop_rate_hz: u32,
    /// Shoulder frame to input frame, applied to IMU and joint inputs.
    pub arm_base: RigidTransform,
    pub scale: f64,
    /// Input frame to task frame.
    pub offset: RigidTransform,
    pub trial: TrialConfig,
    pub stale_after_s: f64,
}

impl SessionConfig {
    pub fn new(wire: Wire, source: InputSource) -> Self {
        Self {
            wire,
            arm: ArmModel::with_default_hand(0.28, 0.24).expect("valid default arm"),
            source,
            loop_rate_hz: DEFAULT_LOOP_RATE_HZ,
            arm_base: default_arm_base(),
            scale: 1.0,
            offset: RigidTransform::IDENTITY,
            trial: TrialConfig::default(),
            stale_after_s: DEFAULT_STALE_AFTER_S,
        }
    }

    pub fn validate(&self) -> Result<(), TeleopError> {
        if !(MIN_LOOP_RATE_HZ..=MAX_LOOP_RATE_HZ).contains(&self.loop_rate_hz) {
            return Err(TeleopError::InvalidRate(self.loop_rate_hz));
        }
        Mapping::new(self.scale, self.offset).ok_or(TeleopError::InvalidScale(self.scale))?;
        self.trial.ring.validate()?;
        if !(self.stale_after_s > 0.0) {
            return Err(TeleopError::InvalidConfig(format!("stale_after_s {}", self.stale_after_s)));
        }
        if !(self.trial.start_margin >= 0.0 && self.trial.end_margin >= 0.0) {
            return Err(TeleopError::InvalidConfig("negative trial margin".into()));
        }
        Ok(())
    }

    pub fn tick_time(&self, tick: u64) -> f64 {
        tick as f64 / self.loop_rate_hz as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Running,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Command {
    Start,
    Stop,
    Clutch { engaged: bool },
}

/// Everything the session knows after a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub t: f64,
    pub source: InputSource,
    pub wire_id: String,
    pub ring: RigidTransform,
    /// Arm joints in the task frame, when the input carries an arm.
    pub skeleton: Option<Skeleton>,
    pub metrics: Metrics,
    pub phase: Phase,
    /// Seconds since recording began.
    pub elapsed_s: f64,
    /// Arclength of the ring along the wire.
    pub progress_s: f64,
    pub clutch: bool,
    pub stale: bool,
    pub summary: Option<TrialSummary>,
}

/// A finished or stopped trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinishedTrial {
    pub record: TrialRecord,
    pub summary: Option<TrialSummary>,
}

#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    mapping: Mapping,
    ring: RigidTransform,
    latest: Option<(Input, f64)>,
    input_pose: Option<RigidTransform>,
    skeleton: Option<Skeleton>,
    last_tick: Option<f64>,
    phase: Phase,
    recorder: Option<TrialRecorder>,
    summary: Option<TrialSummary>,
    finished: Vec<FinishedTrial>,
    state: SessionState,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self, TeleopError> {
        config.validate()?;
        let mapping = Mapping::new(config.scale, config.offset).ok_or(TeleopError::InvalidScale(config.scale))?;
        let (p, t) = config.wire.point_at(0.0);
        let ring = ring_pose_on(p, &t);
        let metrics = evaluate(&config.wire, &Ring::from_pose(&ring, config.trial.ring));
        let state = SessionState {
            t: 0.0,
            source: config.source,
            wire_id: config.wire.id().to_string(),
            ring,
            skeleton: None,
            metrics,
            phase: Phase::Idle,
            elapsed_s: 0.0,
            progress_s: metrics.s,
            clutch: false,
            stale: true,
            summary: None,
        };
        Ok(Self {
            config,
            mapping,
            ring,
            latest: None,
            input_pose: None,
            skeleton: None,
            last_tick: None,
            phase: Phase::Idle,
            recorder: None,
            summary: None,
            finished: Vec::new(),
            state,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn mapping(&self) -> &Mapping {
        &self.mapping
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    /// Offer a new input received at `received_at` seconds. Inputs older than
    /// the freshest one already held are dropped and `false` is returned.
    pub fn offer(&mut self, input: Input, received_at: f64) -> Result<bool, TeleopError> {
        if !input.allowed_for(self.config.source) {
            return Err(TeleopError::WrongSource {
                expected: self.config.source,
                got: input.source(),
            });
        }
        if let Input::Joints { q } = &input {
            q.validate()?;
        }
        if self.latest.as_ref().is_some_and(|(_, t)| received_at < *t) {
            return Ok(false);
        }
        self.latest = Some((input, received_at));
        Ok(true)
    }

    pub fn command(&mut self, cmd: Command) {
        match cmd {
            Command::Start => {
                if self.phase != Phase::Running {
                    self.phase = Phase::Running;
                    self.summary = None;
                    self.recorder = Some(TrialRecorder::new(&self.config.wire, self.config.trial));
                }
            }
            Command::Stop => {
                if self.phase == Phase::Running {
                    self.finish();
                }
            }
            Command::Clutch { engaged: true } => self.mapping.engage_clutch(self.ring),
            Command::Clutch { engaged: false } => match self.input_pose {
                Some(pose) => self.mapping.release_clutch(&pose),
                None => self.mapping.release_clutch_in_place(),
            },
        }
    }

    fn finish(&mut self) {
        if let Some(rec) = self.recorder.take() {
            let record = rec.into_record();
            self.summary = summarize(&record).ok();
            self.finished.push(FinishedTrial {
                record,
                summary: self.summary,
            });
        }
        self.phase = Phase::Done;
    }

    /// Trials finished since the last call, oldest first.
    pub fn take_finished(&mut self) -> Vec<FinishedTrial> {
        std::mem::take(&mut self.finished)
    }

    fn input_to_pose(&self, input: &Input) -> (RigidTransform, Option<Skeleton>) {
        let arm = &self.config.arm;
        let base = self.config.arm_base;
        let with_arm = |imus: &ImuPair| {
            let skel = arm_skeleton(arm, imus).transformed(&(self.mapping.frame() * base));
            (base * wrist_pose(arm, imus), Some(skel))
        };
        match input {
            Input::Imus(imus) => with_arm(imus),
            Input::Pose { pose } => (*pose, None),
            Input::Joints { q } => with_arm(&joints_to_imus(q).expect("validated on offer")),
        }
    }

    /// Advance the session clock to `now` and recompute the ring and metrics.
    pub fn tick(&mut self, now: f64) -> Result<&SessionState, TeleopError> {
        if let Some(last) = self.last_tick {
            if !(now > last) {
                return Err(TeleopError::ClockWentBackwards { now, last });
            }
        }
        self.last_tick = Some(now);

        let stale = match &self.latest {
            Some((_, at)) => now - at > self.config.stale_after_s,
            None => true,
        };
        if !stale {
            let (input, _) = self.latest.expect("present when not stale");
            let (pose, skeleton) = self.input_to_pose(&input);
            self.input_pose = Some(pose);
            self.skeleton = skeleton;
            self.ring = self.mapping.apply(&pose);
        }
        let metrics = evaluate(&self.config.wire, &Ring::from_pose(&self.ring, self.config.trial.ring));

        let mut elapsed = 0.0;
        if let Some(rec) = self.recorder.as_mut() {
            let phase = rec.push(now, self.ring, metrics)?;
            elapsed = rec.elapsed();
            if phase == RecorderPhase::Completed {
                self.finish();
            }
        }
        if self.phase == Phase::Done {
            elapsed = self.summary.map_or(0.0, |s| s.completion_time);
        }

        self.state = SessionState {
            t: now,
            source: self.config.source,
            wire_id: self.config.wire.id().to_string(),
            ring: self.ring,
            skeleton: self.skeleton,
            metrics,
            phase: self.phase,
            elapsed_s: elapsed,
            progress_s: metrics.s,
            clutch: self.mapping.clutch_engaged(),
            stale,
            summary: self.summary,
        };
        Ok(&self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::make_straight_wire;

    fn ui_session() -> Session {
        Session::new(SessionConfig::new(make_straight_wire(0.4).unwrap(), InputSource::Ui)).unwrap()
    }

    fn at(x: f64, z: f64) -> Input {
        Input::Pose {
            pose: RigidTransform::from_translation(Vector3::new(x, 0.0, z)),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SessionConfig::new(make_straight_wire(0.4).unwrap(), InputSource::Ui);
        cfg.scale = 20.0;
        assert!(matches!(Session::new(cfg.clone()), Err(TeleopError::InvalidScale(_))));
        cfg.scale = 1.0;
        cfg.loop_rate_hz = 0;
        assert!(matches!(Session::new(cfg), Err(TeleopError::InvalidRate(0))));
    }

    #[test]
    fn default_workspace_puts_wire_in_reach() {
        let cfg = SessionConfig::new(make_straight_wire(0.4).unwrap(), InputSource::Imusim);
        let m = Mapping::new(1.0, cfg.arm_base).unwrap();
        for s in [0.0, 0.2, 0.4] {
            let p = m.input_point(&cfg.wire.point_at(s).0);
            assert!(p.norm() < cfg.arm.upper_arm() + cfg.arm.forearm() - 0.05);
        }
        // wire runs to the operator's right
        let a = m.input_point(&cfg.wire.point_at(0.0).0);
        let b = m.input_point(&cfg.wire.point_at(0.4).0);
        assert!(b.y < a.y);
        assert!((a.x - 0.35).abs() < 1e-12 && (a.z + 0.1).abs() < 1e-12);
    }

    #[test]
    fn source_mismatch_is_rejected() {
        let mut s = ui_session();
        assert!(matches!(
            s.offer(Input::Imus(ImuPair::identity(0.0)), 0.0),
            Err(TeleopError::WrongSource { .. })
        ));
        assert!(s.offer(Input::Joints { q: JointConfig::new(0.0, 0.0, 0.0, 0.3, 0.0) }, 0.0).unwrap());
        assert!(s.offer(Input::Joints { q: JointConfig::new(0.0, 0.0, 0.0, 3.0, 0.0) }, 0.1).is_err());
    }

    #[test]
    fn older_inputs_are_never_applied() {
        let mut s = ui_session();
        assert!(s.offer(at(0.05, 0.0), 1.0).unwrap());
        assert!(!s.offer(at(-0.1, 0.0), 0.5).unwrap());
        let st = s.tick(1.0).unwrap();
        assert_eq!(st.ring.translation.x, 0.05);
    }

    #[test]
    fn stale_input_holds_ring() {
        let mut s = ui_session();
        assert!(s.tick(0.0).unwrap().stale);
        s.offer(at(0.05, 0.0), 0.1).unwrap();
        let st = s.tick(0.2).unwrap();
        assert!(!st.stale);
        assert_eq!(st.ring.translation.x, 0.05);
        let st = s.tick(1.1).unwrap().clone();
        assert!(!st.stale);
        let st = s.tick(1.2).unwrap();
        assert!(st.stale);
        assert_eq!(st.ring.translation.x, 0.05);
    }

    #[test]
    fn clock_must_advance() {
        let mut s = ui_session();
        s.tick(1.0).unwrap();
        assert!(matches!(s.tick(1.0), Err(TeleopError::ClockWentBackwards { .. })));
    }

    #[test]
    fn phases_and_stop_mid_trial() {
        let mut s = ui_session();
        assert_eq!(s.phase(), Phase::Idle);
        s.command(Command::Stop);
        assert_eq!(s.phase(), Phase::Idle);
        s.command(Command::Start);
        for k in 0..20 {
            let t = k as f64 * 0.02;
            s.offer(at(-0.2 + 0.01 * k as f64, 0.0), t).unwrap();
            s.tick(t).unwrap();
        }
        assert_eq!(s.state().phase, Phase::Running);
        assert!(s.state().elapsed_s > 0.0);
        s.command(Command::Stop);
        assert_eq!(s.phase(), Phase::Done);
        let done = s.take_finished();
        assert_eq!(done.len(), 1);
        assert!(!done[0].record.completed);
        assert_eq!(done[0].record.samples.len(), 20);
        assert!(done[0].summary.is_some());
        s.command(Command::Start);
        assert_eq!(s.phase(), Phase::Running);
    }

    #[test]
    fn traversal_completes_and_reports() {
        let mut s = ui_session();
        s.command(Command::Start);
        for k in 0..=100 {
            let t = k as f64 * 0.02;
            s.offer(at(-0.2 + 0.004 * k as f64, 0.0), t).unwrap();
            s.tick(t).unwrap();
        }
        let st = s.state();
        assert_eq!(st.phase, Phase::Done);
        let sum = st.summary.unwrap();
        assert!(sum.completed);
        assert_eq!(sum.non_collision_pct, 100.0);
        assert_eq!(st.elapsed_s, sum.completion_time);
    }

    #[test]
    fn clutch_freezes_and_resumes_without_jump() {
        let mut s = ui_session();
        s.offer(at(0.0, 0.0), 0.0).unwrap();
        s.tick(0.0).unwrap();
        s.command(Command::Clutch { engaged: true });
        s.offer(at(0.3, 0.1), 0.02).unwrap();
        let st = s.tick(0.02).unwrap();
        assert!(st.clutch);
        assert_eq!(st.ring.translation, Vector3::ZERO);
        s.command(Command::Clutch { engaged: false });
        let st = s.tick(0.04).unwrap();
        assert!(st.ring.translation.norm() <= 1e-9);
        s.offer(at(0.31, 0.1), 0.06).unwrap();
        let st = s.tick(0.06).unwrap();
        assert!((st.ring.translation.x - 0.01).abs() < 1e-12);
    }

    #[test]
    fn imu_input_carries_skeleton() {
        let cfg = SessionConfig::new(make_straight_wire(0.4).unwrap(), InputSource::Imusim);
        let mut s = Session::new(cfg).unwrap();
        s.offer(Input::Imus(ImuPair::identity(0.0)), 0.0).unwrap();
        let st = s.tick(0.0).unwrap();
        let sk = st.skeleton.unwrap();
        assert!((sk.wrist - st.ring.translation).norm() < 1e-12);
    }
}
