//! Link-length calibration from fingertip touches on a grid of known points.
//!
//! With the hand held straight, each touch gives the fingertip position as a
//! function of the unknown upper-arm and forearm lengths. The estimate is the
//! pair of lengths minimizing the summed absolute mismatch between pairwise
//! fingertip distances and the true pairwise grid distances.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{fingertip_position, ArmError, ArmModel, ImuPair, DEFAULT_HAND_LENGTH};
use crate::geom::{UnitQuaternion, Vector3};

pub mod report;
pub mod simplex;
pub mod synthetic;

pub use report::CalibrationReport;
use simplex::{minimize_bounded, SimplexOptions};

/// Fewest touches that pin down both lengths.
pub const MIN_SAMPLES: usize = 4;
pub const MIN_POINT_SPACING: f64 = 0.01;
pub const MAX_POINT_ID: u32 = 9;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("point {0} sampled more than once")]
    DuplicatePoint(u32),
    #[error("point {0} is not on the calibration grid")]
    UnknownPoint(u32),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Arm(#[from] ArmError),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("could not read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub id: u32,
    pub position: Vector3,
}

/// Touch targets with known positions, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    points: Vec<GridPoint>,
}

impl CalibrationGrid {
    pub fn new(mut points: Vec<GridPoint>) -> Result<Self, CalibError> {
        if points.len() < MIN_SAMPLES {
            return Err(CalibError::InvalidGrid(format!(
                "{} points, need at least {MIN_SAMPLES}",
                points.len()
            )));
        }
        points.sort_by_key(|p| p.id);
        for p in &points {
            if !(1..=MAX_POINT_ID).contains(&p.id) {
                return Err(CalibError::InvalidGrid(format!("id {} outside 1..={MAX_POINT_ID}", p.id)));
            }
            if !p.position.is_finite() {
                return Err(CalibError::InvalidGrid(format!("point {} is not finite", p.id)));
            }
        }
        for (i, a) in points.iter().enumerate() {
            for b in &points[i + 1..] {
                if a.id == b.id {
                    return Err(CalibError::InvalidGrid(format!("duplicate id {}", a.id)));
                }
                if a.position.distance(&b.position) <= MIN_POINT_SPACING {
                    return Err(CalibError::InvalidGrid(format!(
                        "points {} and {} are closer than {MIN_POINT_SPACING} m",
                        a.id, b.id
                    )));
                }
            }
        }
        Ok(Self { points })
    }

    /// 3×3 grid with 0.1 m spacing in the x–z plane, centered 0.45 m in
    /// front of the shoulder. Ids run row by row from the top-near corner.
    pub fn default_grid() -> Self {
        let points = (0..9)
            .map(|k| {
                let (row, col) = (k / 3, k % 3);
                GridPoint {
                    id: k as u32 + 1,
                    position: Vector3::new(
                        0.45 + 0.1 * (col as f64 - 1.0),
                        0.0,
                        0.1 * (1.0 - row as f64),
                    ),
                }
            })
            .collect();
        Self::new(points).expect("default grid is valid")
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn position(&self, id: u32) -> Option<Vector3> {
        self.points.iter().find(|p| p.id == id).map(|p| p.position)
    }

    /// Parse `id, x, y, z` lines (comma or whitespace separated, `#` comments,
    /// optional header).
    pub fn parse(reader: impl BufRead, path: &str) -> Result<Self, CalibError> {
        let mut points = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| CalibError::Io {
                path: path.to_string(),
                source,
            })?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if points.is_empty() && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("id")) {
                continue;
            }
            let err = |message: String| CalibError::Parse {
                path: path.to_string(),
                line: n + 1,
                message,
            };
            if fields.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", fields.len())));
            }
            let id: u32 = fields[0].parse().map_err(|e| err(format!("id: {e}")))?;
            let mut xyz = [0.0; 3];
            for (slot, text) in xyz.iter_mut().zip(&fields[1..]) {
                *slot = text.parse().map_err(|e| err(format!("coordinate: {e}")))?;
            }
            points.push(GridPoint {
                id,
                position: Vector3::from(xyz),
            });
        }
        Self::new(points)
    }

    pub fn load(path: &Path) -> Result<Self, CalibError> {
        let file = std::fs::File::open(path).map_err(|source| CalibError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(std::io::BufReader::new(file), &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("id,x,y,z\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.id, p.position.x, p.position.y, p.position.z
            ));
        }
        out
    }
}

/// IMU orientations recorded while the fingertip touches one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub point_id: u32,
    pub r1: UnitQuaternion,
    pub r2: UnitQuaternion,
}

impl CalibrationSample {
    pub fn imus(&self) -> ImuPair {
        ImuPair::new(0.0, self.r1, self.r2)
    }
}

/// Read one JSON sample per line; blank lines and `#` comments are skipped.
pub fn parse_samples(reader: impl BufRead, path: &str) -> Result<Vec<CalibrationSample>, CalibError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CalibError::Io {
            path: path.to_string(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let s = serde_json::from_str(trimmed).map_err(|e| CalibError::Parse {
            path: path.to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}

pub fn load_samples(path: &Path) -> Result<Vec<CalibrationSample>, CalibError> {
    let file = std::fs::File::open(path).map_err(|source| CalibError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_samples(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn samples_to_jsonl(samples: &[CalibrationSample]) -> String {
    samples
        .iter()
        .map(|s| serde_json::to_string(s).expect("samples serialize") + "\n")
        .collect()
}

/// Distances keyed by unordered point-id pair.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairDistances(BTreeMap<(u32, u32), f64>);

impl PairDistances {
    fn key(i: u32, j: u32) -> (u32, u32) {
        (i.min(j), i.max(j))
    }

    fn insert(&mut self, i: u32, j: u32, d: f64) {
        self.0.insert(Self::key(i, j), d);
    }

    pub fn get(&self, i: u32, j: u32) -> Option<f64> {
        self.0.get(&Self::key(i, j)).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Pairs in ascending `(i, j)` order with `i < j`.
    pub fn iter(&self) -> impl Iterator<Item = ((u32, u32), f64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }
}

fn pairwise(points: &[(u32, Vector3)]) -> PairDistances {
    let mut out = PairDistances::default();
    for (a, (i, pi)) in points.iter().enumerate() {
        for (j, pj) in &points[a + 1..] {
            out.insert(*i, *j, pi.distance(pj));
        }
    }
    out
}

fn check_distinct(samples: &[CalibrationSample]) -> Result<(), CalibError> {
    let mut seen = BTreeSet::new();
    for s in samples {
        if !seen.insert(s.point_id) {
            return Err(CalibError::DuplicatePoint(s.point_id));
        }
    }
    Ok(())
}

/// Fingertip position for candidate lengths, with the hand fixed at 0.2 m and
/// the wrist held straight.
pub fn predicted_fingertip(
    upper_arm: f64,
    forearm: f64,
    sample: &CalibrationSample,
) -> Result<Vector3, CalibError> {
    let arm = ArmModel::new(upper_arm, forearm, DEFAULT_HAND_LENGTH)?;
    Ok(fingertip_position(&arm, &sample.imus()))
}

/// Pairwise distances between predicted fingertip positions.
pub fn fk_distances(
    upper_arm: f64,
    forearm: f64,
    samples: &[CalibrationSample],
) -> Result<PairDistances, CalibError> {
    if samples.len() < 2 {
        return Err(CalibError::TooFewSamples {
            got: samples.len(),
            need: 2,
        });
    }
    check_distinct(samples)?;
    let tips = samples
        .iter()
        .map(|s| Ok((s.point_id, predicted_fingertip(upper_arm, forearm, s)?)))
        .collect::<Result<Vec<_>, CalibError>>()?;
    Ok(pairwise(&tips))
}

/// Pairwise distances between the listed grid points.
pub fn true_distances(grid: &CalibrationGrid, ids: &[u32]) -> Result<PairDistances, CalibError> {
    let points = ids
        .iter()
        .map(|&id| grid.position(id).map(|p| (id, p)).ok_or(CalibError::UnknownPoint(id)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(pairwise(&points))
}

fn check_samples(samples: &[CalibrationSample], grid: &CalibrationGrid) -> Result<(), CalibError> {
    if samples.len() < MIN_SAMPLES {
        return Err(CalibError::TooFewSamples {
            got: samples.len(),
            need: MIN_SAMPLES,
        });
    }
    check_distinct(samples)?;
    if let Some(s) = samples.iter().find(|s| grid.position(s.point_id).is_none()) {
        return Err(CalibError::UnknownPoint(s.point_id));
    }
    Ok(())
}

fn mismatch(fk: &PairDistances, truth: &PairDistances) -> f64 {
    truth
        .iter()
        .map(|((i, j), d)| (fk.get(i, j).expect("same pair set") - d).abs())
        .sum()
}

/// Summed absolute difference between fingertip and true pairwise distances.
pub fn objective(
    upper_arm: f64,
    forearm: f64,
    samples: &[CalibrationSample],
    grid: &CalibrationGrid,
) -> Result<f64, CalibError> {
    check_samples(samples, grid)?;
    let ids: Vec<u32> = samples.iter().map(|s| s.point_id).collect();
    let truth = true_distances(grid, &ids)?;
    Ok(mismatch(&fk_distances(upper_arm, forearm, samples)?, &truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Starting `(upper_arm, forearm)`, meters.
    pub init: (f64, f64),
    /// Box bounds applied to both lengths, meters.
    pub bounds: (f64, f64),
    /// Simplex-size tolerance, meters.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            init: (0.30, 0.25),
            bounds: (0.15, 0.45),
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

impl CalibrationOptions {
    fn validate(&self) -> Result<(), CalibError> {
        let (lo, hi) = self.bounds;
        if !(lo > 0.0 && hi > lo && hi < crate::arm::MAX_LINK_LENGTH) {
            return Err(CalibError::InvalidOptions(format!("bounds ({lo}, {hi})")));
        }
        if !(self.tol > 0.0) {
            return Err(CalibError::InvalidOptions(format!("tol {}", self.tol)));
        }
        if !(self.init.0.is_finite() && self.init.1.is_finite()) {
            return Err(CalibError::InvalidOptions("non-finite initial guess".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationWarning {
    /// Sampled points are coincident or collinear to within 1 cm; the two
    /// lengths may not be separately identifiable.
    IllConditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub upper_arm: f64,
    pub forearm: f64,
    /// Objective value at the estimate, meters.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<CalibrationWarning>,
    /// `[upper, fore]` errors as percentages of the true lengths, when known.
    pub percent_errors: Option<[f64; 2]>,
}

impl CalibrationResult {
    pub fn with_ground_truth(mut self, true_upper: f64, true_fore: f64) -> Self {
        let (u, f) = percent_error(&self, true_upper, true_fore);
        self.percent_errors = Some([u, f]);
        self
    }
}

/// Link-length errors as percentages of the true lengths.
pub fn percent_error(result: &CalibrationResult, true_upper: f64, true_fore: f64) -> (f64, f64) {
    (
        100.0 * (result.upper_arm - true_upper).abs() / true_upper,
        100.0 * (result.forearm - true_fore).abs() / true_fore,
    )
}

fn nearly_collinear(points: &[Vector3]) -> bool {
    let mut far = (0, 0, 0.0);
    for (i, a) in points.iter().enumerate() {
        for (j, b) in points.iter().enumerate().skip(i + 1) {
            let d = a.distance(b);
            if d > far.2 {
                far = (i, j, d);
            }
        }
    }
    if far.2 < MIN_POINT_SPACING {
        return true;
    }
    let (a, b) = (points[far.0], points[far.1]);
    let dir = (b - a) * (1.0 / far.2);
    points.iter().all(|p| {
        let v = *p - a;
        (v - dir * v.dot(&dir)).norm() < MIN_POINT_SPACING
    })
}

/// Estimate upper-arm and forearm lengths from touch samples.
///
/// Samples are processed in point-id order, so the result does not depend on
/// the order they are given in.
pub fn calibrate(
    samples: &[CalibrationSample],
    grid: &CalibrationGrid,
    options: &CalibrationOptions,
) -> Result<CalibrationResult, CalibError> {
    options.validate()?;
    check_samples(samples, grid)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by_key(|s| s.point_id);
    let ids: Vec<u32> = sorted.iter().map(|s| s.point_id).collect();
    let truth = true_distances(grid, &ids)?;

    let mut warnings = Vec::new();
    let positions: Vec<Vector3> = ids.iter().filter_map(|&id| grid.position(id)).collect();
    if nearly_collinear(&positions) {
        warnings.push(CalibrationWarning::IllConditioned);
    }

    let f = |x: &[f64; 2]| match fk_distances(x[0], x[1], &sorted) {
        Ok(fk) => mismatch(&fk, &truth),
        Err(_) => f64::INFINITY,
    };
    let (lo, hi) = options.bounds;
    let out = minimize_bounded(
        f,
        [options.init.0, options.init.1],
        [lo, lo],
        [hi, hi],
        &SimplexOptions {
            max_iter: options.max_iter,
            tol: options.tol,
            ..SimplexOptions::default()
        },
    );
    Ok(CalibrationResult {
        upper_arm: out.x[0],
        forearm: out.x[1],
        residual: out.value,
        iterations: out.iterations,
        converged: out.converged,
        warnings,
        percent_errors: None,
    })
}
