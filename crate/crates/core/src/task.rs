//! Ring-on-wire steady-hand task: wire geometry, closest-point queries,
//! accuracy metrics, collision, and trial recording.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{RigidTransform, UnitQuaternion, Vector3};

/// Wire tube radius, 25 mm diameter.
pub const TUBE_RADIUS: f64 = 0.0125;
/// Ring inner radius, 60 mm inner diameter.
pub const RING_INNER_RADIUS: f64 = 0.030;
/// Ring outer radius, 100 mm outer diameter.
pub const RING_OUTER_RADIUS: f64 = 0.050;
pub const DEFAULT_STRAIGHT_LENGTH: f64 = 0.4;
pub const DEFAULT_S_RADIUS: f64 = 0.15;
pub const DEFAULT_S_ANGLE_DEG: f64 = 120.0;
pub const DEFAULT_MARGIN: f64 = 0.010;
/// Endpoint and tangent mismatch allowed between consecutive segments.
pub const G1_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid wire: {0}")]
    InvalidWire(String),
    #[error("invalid ring: {0}")]
    InvalidRing(String),
    #[error("arc radius {radius} m leaves no clearance for a ring of inner radius {inner} m")]
    RadiusTooTight { radius: f64, inner: f64 },
    #[error("sample time {t} does not follow {previous}")]
    NonMonotonicTime { t: f64, previous: f64 },
    #[error("trial record is empty")]
    EmptyRecord,
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("could not read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One piece of a wire centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum WireSegment {
    Line {
        start: Vector3,
        end: Vector3,
    },
    /// Circular arc swept from `start` to `end` by right-hand rotation about
    /// `axis` through `center`.
    Arc {
        center: Vector3,
        start: Vector3,
        end: Vector3,
        axis: Vector3,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Line {
        start: Vector3,
        dir: Vector3,
        length: f64,
    },
    Arc {
        center: Vector3,
        axis: Vector3,
        /// Unit vector from center to start.
        u: Vector3,
        /// `axis × u`.
        v: Vector3,
        radius: f64,
        sweep: f64,
    },
}

impl Piece {
    fn build(seg: &WireSegment) -> Result<Self, TaskError> {
        match *seg {
            WireSegment::Line { start, end } => {
                let length = start.distance(&end);
                let dir = (end - start)
                    .normalized()
                    .filter(|_| length > G1_TOLERANCE)
                    .ok_or_else(|| TaskError::InvalidWire("zero-length line".into()))?;
                Ok(Piece::Line { start, dir, length })
            }
            WireSegment::Arc {
                center,
                start,
                end,
                axis,
            } => {
                let axis = axis
                    .normalized()
                    .ok_or_else(|| TaskError::InvalidWire("zero arc axis".into()))?;
                let a = start - center;
                let b = end - center;
                let radius = a.norm();
                if radius <= G1_TOLERANCE {
                    return Err(TaskError::InvalidWire("zero arc radius".into()));
                }
                if (b.norm() - radius).abs() > G1_TOLERANCE * radius.max(1.0) {
                    return Err(TaskError::InvalidWire("arc end is off the circle".into()));
                }
                if a.dot(&axis).abs() > G1_TOLERANCE || b.dot(&axis).abs() > G1_TOLERANCE {
                    return Err(TaskError::InvalidWire("arc axis is not normal to its plane".into()));
                }
                let u = a * (1.0 / radius);
                let v = axis.cross(&u);
                let mut sweep = axis.dot(&a.cross(&b)).atan2(a.dot(&b));
                if sweep <= 0.0 {
                    sweep += TAU;
                }
                Ok(Piece::Arc {
                    center,
                    axis,
                    u,
                    v,
                    radius,
                    sweep,
                })
            }
        }
    }

    fn length(&self) -> f64 {
        match *self {
            Piece::Line { length, .. } => length,
            Piece::Arc { radius, sweep, .. } => radius * sweep,
        }
    }

    /// Point and unit tangent at arclength `s` from the piece start.
    fn at(&self, s: f64) -> (Vector3, Vector3) {
        match *self {
            Piece::Line { start, dir, .. } => (start + dir * s, dir),
            Piece::Arc {
                center,
                u,
                v,
                radius,
                ..
            } => {
                let (sn, cs) = (s / radius).sin_cos();
                (center + (u * cs + v * sn) * radius, v * cs - u * sn)
            }
        }
    }

    /// Local arclength of the point nearest `p`.
    fn project(&self, p: &Vector3) -> f64 {
        match *self {
            Piece::Line { start, dir, length } => (*p - start).dot(&dir).clamp(0.0, length),
            Piece::Arc {
                center,
                axis,
                u,
                v,
                radius,
                sweep,
            } => {
                let w = *p - center;
                let planar = w - axis * w.dot(&axis);
                if planar.norm() <= 1e-15 {
                    return 0.0;
                }
                let mut phi = planar.dot(&v).atan2(planar.dot(&u));
                if phi < 0.0 {
                    phi += TAU;
                }
                if phi <= sweep {
                    return phi * radius;
                }
                let (a, _) = self.at(0.0);
                let (b, _) = self.at(sweep * radius);
                if p.distance(&a) <= p.distance(&b) {
                    0.0
                } else {
                    sweep * radius
                }
            }
        }
    }

    fn curvature(&self) -> f64 {
        match *self {
            Piece::Line { .. } => 0.0,
            Piece::Arc { radius, .. } => 1.0 / radius,
        }
    }
}

/// Result of a closest-point query on a wire centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireProjection {
    pub point: Vector3,
    pub tangent: Vector3,
    /// Arclength from the wire start, meters.
    pub s: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WireFile {
    id: String,
    #[serde(default = "default_tube")]
    tube_radius: f64,
    segments: Vec<WireSegment>,
}

fn default_tube() -> f64 {
    TUBE_RADIUS
}

/// G1-continuous centerline built from lines and arcs, with a tube radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WireFile", into = "WireFile")]
pub struct Wire {
    id: String,
    tube_radius: f64,
    segments: Vec<WireSegment>,
    pieces: Vec<Piece>,
    /// Arclength at the start of each piece.
    offsets: Vec<f64>,
    length: f64,
}

impl TryFrom<WireFile> for Wire {
    type Error = TaskError;
    fn try_from(f: WireFile) -> Result<Self, TaskError> {
        Wire::new(f.id, f.segments, f.tube_radius)
    }
}

impl From<Wire> for WireFile {
    fn from(w: Wire) -> Self {
        WireFile {
            id: w.id,
            tube_radius: w.tube_radius,
            segments: w.segments,
        }
    }
}

impl Wire {
    pub fn new(id: impl Into<String>, segments: Vec<WireSegment>, tube_radius: f64) -> Result<Self, TaskError> {
        if segments.is_empty() {
            return Err(TaskError::InvalidWire("no segments".into()));
        }
        if !(tube_radius > 0.0 && tube_radius.is_finite()) {
            return Err(TaskError::InvalidWire(format!("tube radius {tube_radius}")));
        }
        let pieces = segments.iter().map(Piece::build).collect::<Result<Vec<_>, _>>()?;
        for (k, pair) in pieces.windows(2).enumerate() {
            let (end, t_end) = pair[0].at(pair[0].length());
            let (start, t_start) = pair[1].at(0.0);
            if end.distance(&start) > G1_TOLERANCE {
                return Err(TaskError::InvalidWire(format!("gap after segment {k}")));
            }
            if t_end.distance(&t_start) > G1_TOLERANCE {
                return Err(TaskError::InvalidWire(format!("tangent break after segment {k}")));
            }
        }
        let mut offsets = Vec::with_capacity(pieces.len());
        let mut length = 0.0;
        for p in &pieces {
            offsets.push(length);
            length += p.length();
        }
        Ok(Self {
            id: id.into(),
            tube_radius,
            segments,
            pieces,
            offsets,
            length,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tube_radius(&self) -> f64 {
        self.tube_radius
    }

    pub fn segments(&self) -> &[WireSegment] {
        &self.segments
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Point and unit tangent at arclength `s`, clamped to the wire.
    pub fn point_at(&self, s: f64) -> (Vector3, Vector3) {
        let s = s.clamp(0.0, self.length);
        let k = self.offsets.partition_point(|&o| o <= s).saturating_sub(1);
        let local = (s - self.offsets[k]).min(self.pieces[k].length());
        self.pieces[k].at(local)
    }

    /// Curvature at arclength `s`, 1/meters.
    pub fn curvature_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length);
        let k = self.offsets.partition_point(|&o| o <= s).saturating_sub(1);
        self.pieces[k].curvature()
    }

    /// Nearest centerline point to `p`. Ties go to the earlier segment.
    pub fn closest_point(&self, p: &Vector3) -> WireProjection {
        let mut best: Option<WireProjection> = None;
        for (piece, offset) in self.pieces.iter().zip(&self.offsets) {
            let local = piece.project(p);
            let (point, tangent) = piece.at(local);
            let distance = p.distance(&point);
            if best.is_none_or(|b| distance < b.distance) {
                best = Some(WireProjection {
                    point,
                    tangent,
                    s: (offset + local).min(self.length),
                    distance,
                });
            }
        }
        best.expect("wire has segments")
    }

    /// Same wire with every segment moved by `t`.
    pub fn transformed(&self, t: &RigidTransform) -> Wire {
        let segments = self
            .segments
            .iter()
            .map(|s| match *s {
                WireSegment::Line { start, end } => WireSegment::Line {
                    start: t.transform_point(&start),
                    end: t.transform_point(&end),
                },
                WireSegment::Arc {
                    center,
                    start,
                    end,
                    axis,
                } => WireSegment::Arc {
                    center: t.transform_point(&center),
                    start: t.transform_point(&start),
                    end: t.transform_point(&end),
                    axis: t.transform_vector(&axis),
                },
            })
            .collect();
        Wire::new(self.id.clone(), segments, self.tube_radius).expect("rigid motion preserves continuity")
    }

    pub fn from_json_str(text: &str, path: &str) -> Result<Self, TaskError> {
        serde_json::from_str(text).map_err(|e| TaskError::Parse {
            path: path.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("wire serializes")
    }
}

/// Horizontal straight wire along x, centered at the origin.
pub fn make_straight_wire(length: f64) -> Result<Wire, TaskError> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(TaskError::InvalidWire(format!("length {length}")));
    }
    let h = length / 2.0;
    Wire::new(
        "straight",
        vec![WireSegment::Line {
            start: Vector3::new(-h, 0.0, 0.0),
            end: Vector3::new(h, 0.0, 0.0),
        }],
        TUBE_RADIUS,
    )
}

/// Two mirrored arcs in the vertical x–z plane, joined at the origin where
/// the tangent points up at half the arc angle.
pub fn make_s_wire(arc_radius: f64, arc_angle: f64) -> Result<Wire, TaskError> {
    if !(arc_radius > RING_INNER_RADIUS) || !arc_radius.is_finite() {
        return Err(TaskError::RadiusTooTight {
            radius: arc_radius,
            inner: RING_INNER_RADIUS,
        });
    }
    if !(arc_angle > 0.0 && arc_angle < TAU) {
        return Err(TaskError::InvalidWire(format!("arc angle {arc_angle}")));
    }
    let (sn, cs) = (arc_angle / 2.0).sin_cos();
    let tangent = Vector3::new(cs, 0.0, sn);
    let arc = |axis: Vector3, sweep: f64, forward: bool| {
        let center = axis.cross(&tangent) * arc_radius;
        let spin = UnitQuaternion::from_axis_angle(&axis, sweep).expect("unit axis");
        let other = center + spin.rotate(&(Vector3::ZERO - center));
        let (start, end) = if forward { (Vector3::ZERO, other) } else { (other, Vector3::ZERO) };
        WireSegment::Arc {
            center,
            start,
            end,
            axis,
        }
    };
    Wire::new(
        "s",
        vec![
            arc(-Vector3::Y, -arc_angle, false),
            arc(Vector3::Y, arc_angle, true),
        ],
        TUBE_RADIUS,
    )
}

/// Ring with its symmetry axis and radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub center: Vector3,
    pub axis: Vector3,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

/// Ring radii, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingSize {
    pub inner_radius: f64,
    pub outer_radius: f64,
}

impl Default for RingSize {
    fn default() -> Self {
        Self {
            inner_radius: RING_INNER_RADIUS,
            outer_radius: RING_OUTER_RADIUS,
        }
    }
}

impl RingSize {
    pub fn validate(&self) -> Result<(), TaskError> {
        if !(self.inner_radius > 0.0 && self.outer_radius > self.inner_radius && self.outer_radius.is_finite()) {
            return Err(TaskError::InvalidRing(format!(
                "radii {} / {}",
                self.inner_radius, self.outer_radius
            )));
        }
        Ok(())
    }
}

impl Ring {
    pub fn new(center: Vector3, axis: Vector3, size: RingSize) -> Result<Self, TaskError> {
        size.validate()?;
        let axis = axis
            .normalized()
            .ok_or_else(|| TaskError::InvalidRing("zero axis".into()))?;
        Ok(Self {
            center,
            axis,
            inner_radius: size.inner_radius,
            outer_radius: size.outer_radius,
        })
    }

    /// Ring whose center is the pose origin and whose axis is the pose's local x.
    pub fn from_pose(pose: &RigidTransform, size: RingSize) -> Self {
        Self {
            center: pose.translation,
            axis: pose.rotation.rotate(&Vector3::X),
            inner_radius: size.inner_radius,
            outer_radius: size.outer_radius,
        }
    }
}

/// Pose placing a ring centered at `point` with its axis along `tangent`.
pub fn ring_pose_on(point: Vector3, tangent: &Vector3) -> RigidTransform {
    let rotation = UnitQuaternion::rotation_between(&Vector3::X, tangent).unwrap_or(UnitQuaternion::IDENTITY);
    RigidTransform::new(rotation, point)
}

/// Distance from the ring center to the nearest centerline point, meters.
pub fn position_error(wire: &Wire, ring: &Ring) -> f64 {
    wire.closest_point(&ring.center).distance
}

/// Angle between the ring axis and the wire tangent, folded into [0°, 90°].
pub fn orientation_error(wire: &Wire, ring: &Ring) -> f64 {
    let tangent = wire.closest_point(&ring.center).tangent;
    axis_angle_deg(&tangent, &ring.axis)
}

fn axis_angle_deg(tangent: &Vector3, axis: &Vector3) -> f64 {
    tangent.dot(axis).abs().min(1.0).acos().to_degrees()
}

/// Clearance between ring and wire, millimeters.
pub fn collision_threshold_mm(ring_inner_radius: f64, tube_radius: f64) -> f64 {
    ring_inner_radius * 1e3 - tube_radius * 1e3
}

fn collides(position_error: f64, threshold_mm: f64) -> bool {
    position_error * 1e3 > threshold_mm
}

pub fn collision(wire: &Wire, ring: &Ring) -> bool {
    collides(
        position_error(wire, ring),
        collision_threshold_mm(ring.inner_radius, wire.tube_radius),
    )
}

/// All per-sample quantities for one ring placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub c_wire: Vector3,
    pub v_wire: Vector3,
    pub s: f64,
    /// Meters.
    pub position_error: f64,
    /// Degrees.
    pub orientation_error: f64,
    pub collision: bool,
}

pub fn evaluate(wire: &Wire, ring: &Ring) -> Metrics {
    let proj = wire.closest_point(&ring.center);
    Metrics {
        c_wire: proj.point,
        v_wire: proj.tangent,
        s: proj.s,
        position_error: proj.distance,
        orientation_error: axis_angle_deg(&proj.tangent, &ring.axis),
        collision: collides(
            proj.distance,
            collision_threshold_mm(ring.inner_radius, wire.tube_radius),
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub ring: RingSize,
    /// Recording starts once the ring is within this arclength of the start.
    pub start_margin: f64,
    /// The trial completes within this arclength of the end.
    pub end_margin: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            ring: RingSize::default(),
            start_margin: DEFAULT_MARGIN,
            end_margin: DEFAULT_MARGIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSample {
    pub t: f64,
    pub ring: RigidTransform,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub wire_id: String,
    pub samples: Vec<TrialSample>,
    pub completed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecorderPhase {
    /// Waiting for the ring to enter the start zone.
    Armed,
    Recording,
    Completed,
}

/// Records one trial from a stream of ring poses.
#[derive(Debug, Clone)]
pub struct TrialRecorder {
    wire_length: f64,
    config: TrialConfig,
    phase: RecorderPhase,
    record: TrialRecord,
    last_t: Option<f64>,
}

impl TrialRecorder {
    pub fn new(wire: &Wire, config: TrialConfig) -> Self {
        Self {
            wire_length: wire.length(),
            config,
            phase: RecorderPhase::Armed,
            record: TrialRecord {
                wire_id: wire.id().to_string(),
                samples: Vec::new(),
                completed: false,
            },
            last_t: None,
        }
    }

    pub fn phase(&self) -> RecorderPhase {
        self.phase
    }

    pub fn record(&self) -> &TrialRecord {
        &self.record
    }

    pub fn into_record(self) -> TrialRecord {
        self.record
    }

    /// Seconds since the first recorded sample.
    pub fn elapsed(&self) -> f64 {
        match (self.record.samples.first(), self.record.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn push(&mut self, t: f64, ring: RigidTransform, metrics: Metrics) -> Result<RecorderPhase, TaskError> {
        if let Some(previous) = self.last_t {
            if !(t > previous) {
                return Err(TaskError::NonMonotonicTime { t, previous });
            }
        }
        self.last_t = Some(t);
        if self.phase == RecorderPhase::Armed && metrics.s < self.config.start_margin {
            self.phase = RecorderPhase::Recording;
        }
        if self.phase == RecorderPhase::Recording {
            self.record.samples.push(TrialSample { t, ring, metrics });
            if metrics.s >= self.wire_length - self.config.end_margin {
                self.phase = RecorderPhase::Completed;
                self.record.completed = true;
            }
        }
        Ok(self.phase)
    }
}

/// Record a trial from `(t, ring pose)` pairs; an unfinished stream yields a
/// partial record.
pub fn run_trial(
    wire: &Wire,
    stream: impl IntoIterator<Item = (f64, RigidTransform)>,
    config: &TrialConfig,
) -> Result<TrialRecord, TaskError> {
    config.ring.validate()?;
    let mut rec = TrialRecorder::new(wire, *config);
    for (t, pose) in stream {
        let metrics = evaluate(wire, &Ring::from_pose(&pose, config.ring));
        if rec.push(t, pose, metrics)? == RecorderPhase::Completed {
            break;
        }
    }
    Ok(rec.into_record())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub completion_time: f64,
    pub mean_position_error_mm: f64,
    pub mean_orientation_error_deg: f64,
    pub non_collision_pct: f64,
    pub completed: bool,
}

pub fn summarize(rec: &TrialRecord) -> Result<TrialSummary, TaskError> {
    let (first, last) = match (rec.samples.first(), rec.samples.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(TaskError::EmptyRecord),
    };
    let n = rec.samples.len() as f64;
    let clear = rec.samples.iter().filter(|s| !s.metrics.collision).count() as f64;
    Ok(TrialSummary {
        completion_time: last.t - first.t,
        mean_position_error_mm: rec.samples.iter().map(|s| s.metrics.position_error * 1e3).sum::<f64>() / n,
        mean_orientation_error_deg: rec.samples.iter().map(|s| s.metrics.orientation_error).sum::<f64>() / n,
        non_collision_pct: 100.0 * clear / n,
        completed: rec.completed,
    })
}
