//! Synthetic stand-in for the two wireless IMUs.
//!
//! Ground-truth orientations come from a scripted joint trajectory pushed
//! through [`joints_to_imus`]. Each sensor then gets its own post-fusion error
//! process: a gyro bias that random-walks and is integrated into an error
//! rotation, plus white orientation noise per sample. The corrupted reading is
//! `noise_k ∘ error_k ∘ truth_k`, with the error rotation applied in the world
//! frame.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{joints_to_imus, ArmError, ImuPair, JointConfig};
use crate::geom::{UnitQuaternion, Vector3};

pub mod reach;

pub const MIN_RATE_HZ: u32 = 10;
pub const MAX_RATE_HZ: u32 = 400;
/// Stand-in sensor output rate; the physical sensor's rate is not known.
pub const DEFAULT_RATE_HZ: u32 = 100;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("sample rate {0} Hz outside [{MIN_RATE_HZ}, {MAX_RATE_HZ}]")]
    InvalidRate(u32),
    #[error("time {t} s outside trajectory span [0, {total}]")]
    TimeOutOfRange { t: f64, total: f64 },
    #[error("segment {index}: duration must be positive, got {duration}")]
    BadDuration { index: usize, duration: f64 },
    #[error("trajectory has no segments")]
    EmptyTrajectory,
    #[error("segment {index}: {source}")]
    BadTarget { index: usize, source: ArmError },
    #[error("drift model: {0}")]
    BadDrift(String),
    #[error("stream lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("could not read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("could not parse {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Jump to the target and stay there.
    Hold,
    Linear,
    /// Cosine ease-in/ease-out between the previous and next target.
    Sinusoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub target: JointConfig,
    pub interpolation: Interpolation,
}

/// Piecewise joint-space motion starting from `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    start: JointConfig,
    segments: Vec<Segment>,
}

impl Trajectory {
    pub fn new(start: JointConfig, segments: Vec<Segment>) -> Result<Self, SimError> {
        if segments.is_empty() {
            return Err(SimError::EmptyTrajectory);
        }
        start
            .validate()
            .map_err(|source| SimError::BadTarget { index: 0, source })?;
        for (index, seg) in segments.iter().enumerate() {
            if !(seg.duration > 0.0 && seg.duration.is_finite()) {
                return Err(SimError::BadDuration {
                    index,
                    duration: seg.duration,
                });
            }
            seg.target
                .validate()
                .map_err(|source| SimError::BadTarget { index, source })?;
        }
        Ok(Self { start, segments })
    }

    pub fn start(&self) -> &JointConfig {
        &self.start
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn sample(&self, t: f64) -> Result<JointConfig, SimError> {
        sample_trajectory(self, t)
    }

    pub fn from_json_str(text: &str, path: &str) -> Result<Self, SimError> {
        let file: TrajectoryFile = serde_json::from_str(text).map_err(|source| SimError::Parse {
            path: path.to_string(),
            source,
        })?;
        file.into_trajectory()
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn to_file_format(&self) -> TrajectoryFile {
        TrajectoryFile {
            start_deg: Some(self.start.to_array().map(f64::to_degrees)),
            segments: self
                .segments
                .iter()
                .map(|s| SegmentFile {
                    duration: s.duration,
                    target_deg: s.target.to_array().map(f64::to_degrees),
                    interpolation: s.interpolation,
                })
                .collect(),
        }
    }
}

/// On-disk trajectory: joint angles in degrees. A missing `start_deg` means
/// the motion begins at the first segment's target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_deg: Option<[f64; 5]>,
    pub segments: Vec<SegmentFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFile {
    pub duration: f64,
    pub target_deg: [f64; 5],
    pub interpolation: Interpolation,
}

impl TrajectoryFile {
    pub fn into_trajectory(self) -> Result<Trajectory, SimError> {
        let first = self.segments.first().ok_or(SimError::EmptyTrajectory)?;
        let start = JointConfig::from_degrees(self.start_deg.unwrap_or(first.target_deg));
        let segments = self
            .segments
            .iter()
            .map(|s| Segment {
                duration: s.duration,
                target: JointConfig::from_degrees(s.target_deg),
                interpolation: s.interpolation,
            })
            .collect();
        Trajectory::new(start, segments)
    }
}

fn blend(a: &JointConfig, b: &JointConfig, u: f64) -> JointConfig {
    let (a, b) = (a.to_array(), b.to_array());
    JointConfig::from(std::array::from_fn::<f64, 5, _>(|i| a[i] * (1.0 - u) + b[i] * u))
}

/// Joint configuration at time `t`, for `0 ≤ t ≤ total duration`.
pub fn sample_trajectory(traj: &Trajectory, t: f64) -> Result<JointConfig, SimError> {
    let total = traj.total_duration();
    if !(t >= 0.0 && t <= total) {
        return Err(SimError::TimeOutOfRange { t, total });
    }
    let mut from = traj.start;
    let mut t0 = 0.0;
    let last = traj.segments.len() - 1;
    for (i, seg) in traj.segments.iter().enumerate() {
        let t1 = t0 + seg.duration;
        if t <= t1 || i == last {
            let u = ((t - t0) / seg.duration).clamp(0.0, 1.0);
            return Ok(match seg.interpolation {
                Interpolation::Hold => seg.target,
                Interpolation::Linear => blend(&from, &seg.target, u),
                Interpolation::Sinusoid => {
                    let s = 0.5 * (1.0 - (std::f64::consts::PI * u).cos());
                    blend(&from, &seg.target, s)
                }
            });
        }
        from = seg.target;
        t0 = t1;
    }
    unreachable!("segments are non-empty")
}

/// Post-fusion error model shared by both sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    /// Gyro-bias random-walk intensity, rad/s per √s, per axis.
    pub bias_rw_sigma: f64,
    /// White orientation noise per sample, rad, per axis.
    pub noise_sigma: f64,
    /// Bias at t = 0, rad/s.
    pub initial_bias: Vector3,
    pub seed: u64,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self {
            bias_rw_sigma: 0.001,
            noise_sigma: 0.002,
            initial_bias: Vector3::new(0.005, 0.005, 0.005),
            seed: 0,
        }
    }
}

impl DriftModel {
    pub fn zero() -> Self {
        Self {
            bias_rw_sigma: 0.0,
            noise_sigma: 0.0,
            initial_bias: Vector3::ZERO,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.bias_rw_sigma == 0.0 && self.noise_sigma == 0.0 && self.initial_bias == Vector3::ZERO
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.bias_rw_sigma) || !ok(self.noise_sigma) {
            return Err(SimError::BadDrift("sigmas must be finite and non-negative".into()));
        }
        if !self.initial_bias.is_finite() {
            return Err(SimError::BadDrift("initial bias must be finite".into()));
        }
        Ok(())
    }
}

/// Error process of one sensor.
#[derive(Debug, Clone)]
pub struct DriftProcess {
    bias: Vector3,
    error: UnitQuaternion,
    bias_step: Option<Normal<f64>>,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    dt: f64,
}

impl DriftProcess {
    fn new(model: &DriftModel, stream: u64, dt: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        rng.set_stream(stream);
        let normal = |sigma: f64| (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
        Self {
            bias: model.initial_bias,
            error: UnitQuaternion::IDENTITY,
            bias_step: normal(model.bias_rw_sigma * dt.sqrt()),
            noise: normal(model.noise_sigma),
            rng,
            dt,
        }
    }

    fn gaussian_vector(dist: &Normal<f64>, rng: &mut ChaCha8Rng) -> Vector3 {
        Vector3::new(dist.sample(rng), dist.sample(rng), dist.sample(rng))
    }

    /// Corrupt one reading, then advance the error state by one sample period.
    pub fn corrupt(&mut self, truth: &UnitQuaternion) -> UnitQuaternion {
        let mut out = self.error * *truth;
        if let Some(noise) = &self.noise {
            let n = Self::gaussian_vector(noise, &mut self.rng);
            out = UnitQuaternion::from_rotation_vector(&n) * out;
        }
        let step = UnitQuaternion::from_rotation_vector(&(self.bias * self.dt));
        self.error = step * self.error;
        if let Some(walk) = &self.bias_step {
            self.bias += Self::gaussian_vector(walk, &mut self.rng);
        }
        out
    }

    /// Accumulated bias-induced error rotation (noise excluded).
    pub fn error(&self) -> UnitQuaternion {
        self.error
    }

    pub fn bias(&self) -> Vector3 {
        self.bias
    }
}

/// Drift generator for the upper-arm and forearm sensors, stepped once per
/// sample at a fixed rate. The two sensors draw from independent substreams
/// of the model's seed.
#[derive(Debug, Clone)]
pub struct ImuSimulator {
    upper: DriftProcess,
    fore: DriftProcess,
    passthrough: bool,
    rate_hz: u32,
}

impl ImuSimulator {
    pub fn new(model: &DriftModel, rate_hz: u32) -> Result<Self, SimError> {
        check_rate(rate_hz)?;
        model.validate()?;
        let dt = 1.0 / rate_hz as f64;
        Ok(Self {
            upper: DriftProcess::new(model, 1, dt),
            fore: DriftProcess::new(model, 2, dt),
            passthrough: model.is_zero(),
            rate_hz,
        })
    }

    pub fn rate_hz(&self) -> u32 {
        self.rate_hz
    }

    /// Corrupted counterpart of `truth`; timestamps pass through unchanged.
    pub fn corrupt(&mut self, truth: &ImuPair) -> ImuPair {
        if self.passthrough {
            return *truth;
        }
        ImuPair::new(truth.t, self.upper.corrupt(&truth.r1), self.fore.corrupt(&truth.r2))
    }

    pub fn upper(&self) -> &DriftProcess {
        &self.upper
    }

    pub fn fore(&self) -> &DriftProcess {
        &self.fore
    }
}

pub fn check_rate(rate_hz: u32) -> Result<(), SimError> {
    if (MIN_RATE_HZ..=MAX_RATE_HZ).contains(&rate_hz) {
        Ok(())
    } else {
        Err(SimError::InvalidRate(rate_hz))
    }
}

/// Timestamp of sample `k` at `rate_hz`.
pub fn sample_time(k: usize, rate_hz: u32) -> f64 {
    k as f64 / rate_hz as f64
}

/// Number of samples covering `[0, duration]` at `rate_hz`, both ends inclusive.
pub fn sample_count(duration: f64, rate_hz: u32) -> usize {
    (duration * rate_hz as f64 + 1e-9).floor() as usize + 1
}

/// Drift-corrupted IMU stream for a scripted trajectory.
pub fn stream(traj: &Trajectory, drift: &DriftModel, rate_hz: u32) -> Result<Vec<ImuPair>, SimError> {
    let mut sim = ImuSimulator::new(drift, rate_hz)?;
    let truth = ground_truth(traj, rate_hz)?;
    Ok(truth.iter().map(|p| sim.corrupt(p)).collect())
}

/// Uncorrupted IMU stream for a scripted trajectory.
pub fn ground_truth(traj: &Trajectory, rate_hz: u32) -> Result<Vec<ImuPair>, SimError> {
    check_rate(rate_hz)?;
    let total = traj.total_duration();
    (0..sample_count(total, rate_hz))
        .map(|k| {
            let t = sample_time(k, rate_hz).min(total);
            let j = sample_trajectory(traj, t)?;
            let pair = joints_to_imus(&j).map_err(|source| SimError::BadTarget { index: 0, source })?;
            Ok(pair.at(t))
        })
        .collect()
}

/// Per-sample geodesic error angles `[upper, fore]` in radians.
pub fn drift_angles(corrupted: &[ImuPair], truth: &[ImuPair]) -> Result<Vec<[f64; 2]>, SimError> {
    if corrupted.len() != truth.len() {
        return Err(SimError::LengthMismatch(corrupted.len(), truth.len()));
    }
    Ok(corrupted
        .iter()
        .zip(truth)
        .map(|(c, t)| [c.r1.angle_to(&t.r1), c.r2.angle_to(&t.r2)])
        .collect())
}
