//! Session archives, deterministic simulate/replay, and summary reports.
//!
//! An archive is line-delimited JSON: a header line carrying the format name,
//! version and metadata, then one record per line (inputs, trial records,
//! summaries), then an `end` line with record counts so truncation is caught.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imusim::{self, DriftModel, SimError, Trajectory, TrajectoryFile};
use crate::task::{TrialRecord, TrialSummary};
use crate::teleop::autopilot::{Autopilot, AutopilotConfig};
use crate::teleop::offline::{run_offline, InputFeed, OfflineRun, RecordedFeed};
use crate::teleop::{Input, InputSource, Session, SessionConfig, TeleopError};

pub mod report;

pub use report::{make_report, Metric, Report, ReportEntry};

pub const ARCHIVE_FORMAT: &str = "imu-teleop-archive";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("could not access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("corrupt archive at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u32),
    #[error("not an archive (format {0:?})")]
    UnknownFormat(String),
    #[error("archive is truncated: {0}")]
    Truncated(String),
    #[error("archive has no recorded inputs to replay")]
    NothingToReplay,
    #[error(transparent)]
    Teleop(#[from] TeleopError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Free-form labels used to group archives in reports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    pub user: Option<String>,
    pub device: Option<String>,
    pub task: Option<String>,
}

/// How the recorded inputs were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Driver {
    Autopilot(AutopilotConfig),
    Trajectory {
        trajectory: TrajectoryFile,
        drift: DriftModel,
        rate_hz: u32,
    },
    /// Inputs captured from a live session.
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config: SessionConfig,
    pub driver: Driver,
    pub seed: u64,
    pub wire_id: String,
    pub source: InputSource,
    /// Rate the inputs were offered at, Hz.
    pub input_rate_hz: u32,
    pub created_at: String,
    #[serde(default)]
    pub labels: Labels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionArchive {
    pub metadata: Metadata,
    /// `(receive time, input)` in offer order.
    pub inputs: Vec<(f64, Input)>,
    pub trials: Vec<TrialRecord>,
    pub summaries: Vec<TrialSummary>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    metadata: Metadata,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Input { t: f64, input: Input },
    Trial { trial: TrialRecord },
    Summary { summary: TrialSummary },
    End { inputs: usize, trials: usize, summaries: usize },
}

/// Borrowing twin of [`Line`] for writing without cloning.
#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LineRef<'a> {
    Input { t: f64, input: &'a Input },
    Trial { trial: &'a TrialRecord },
    Summary { summary: &'a TrialSummary },
    End { inputs: usize, trials: usize, summaries: usize },
}

#[derive(Serialize)]
struct HeaderRef<'a> {
    format: &'a str,
    version: u32,
    metadata: &'a Metadata,
}

fn to_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("archive records serialize")
}

impl SessionArchive {
    pub fn new(metadata: Metadata) -> Self {
        Self {
            metadata,
            inputs: Vec::new(),
            trials: Vec::new(),
            summaries: Vec::new(),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = HeaderRef {
            format: ARCHIVE_FORMAT,
            version: ARCHIVE_VERSION,
            metadata: &self.metadata,
        };
        writeln!(w, "{}", to_line(&header))?;
        for (t, input) in &self.inputs {
            writeln!(w, "{}", to_line(&LineRef::Input { t: *t, input }))?;
        }
        for trial in &self.trials {
            writeln!(w, "{}", to_line(&LineRef::Trial { trial }))?;
        }
        for summary in &self.summaries {
            writeln!(w, "{}", to_line(&LineRef::Summary { summary }))?;
        }
        let end = LineRef::End {
            inputs: self.inputs.len(),
            trials: self.trials.len(),
            summaries: self.summaries.len(),
        };
        writeln!(w, "{}", to_line(&end))
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, SessionError> {
        let io = |source| SessionError::Io {
            path: "<archive>".into(),
            source,
        };
        let mut lines = r.lines().enumerate();
        let (_, first) = lines
            .next()
            .ok_or_else(|| SessionError::Truncated("empty file".into()))?;
        let first = first.map_err(io)?;
        let probe: serde_json::Value = serde_json::from_str(&first).map_err(|e| SessionError::Corrupt {
            line: 1,
            message: e.to_string(),
        })?;
        match probe.get("format").and_then(|v| v.as_str()) {
            Some(ARCHIVE_FORMAT) => {}
            other => return Err(SessionError::UnknownFormat(other.unwrap_or("").to_string())),
        }
        match probe.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == ARCHIVE_VERSION as u64 => {}
            Some(v) => return Err(SessionError::UnsupportedVersion(v as u32)),
            None => {
                return Err(SessionError::Corrupt {
                    line: 1,
                    message: "missing version".into(),
                })
            }
        }
        let header: Header = serde_json::from_str(&first).map_err(|e| SessionError::Corrupt {
            line: 1,
            message: e.to_string(),
        })?;
        let mut archive = SessionArchive::new(header.metadata);
        let mut ended = false;
        for (n, line) in lines {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            if ended {
                return Err(SessionError::Corrupt {
                    line: n + 1,
                    message: "data after end record".into(),
                });
            }
            let rec: Line = serde_json::from_str(&line).map_err(|e| SessionError::Corrupt {
                line: n + 1,
                message: e.to_string(),
            })?;
            match rec {
                Line::Input { t, input } => archive.inputs.push((t, input)),
                Line::Trial { trial } => archive.trials.push(trial),
                Line::Summary { summary } => archive.summaries.push(summary),
                Line::End {
                    inputs,
                    trials,
                    summaries,
                } => {
                    let got = (archive.inputs.len(), archive.trials.len(), archive.summaries.len());
                    if got != (inputs, trials, summaries) {
                        return Err(SessionError::Truncated(format!(
                            "end record counts {:?} but found {:?}",
                            (inputs, trials, summaries),
                            got
                        )));
                    }
                    ended = true;
                }
            }
        }
        if !ended {
            return Err(SessionError::Truncated("missing end record".into()));
        }
        Ok(archive)
    }

    pub fn parse(text: &str) -> Result<Self, SessionError> {
        Self::read_from(text.as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<(), SessionError> {
        let io = |source| SessionError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let file = std::fs::File::open(path).map_err(|source| SessionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_from(std::io::BufReader::new(file)).map_err(|e| match e {
            SessionError::Io { source, .. } => SessionError::Io {
                path: path.display().to_string(),
                source,
            },
            other => other,
        })
    }
}

/// Inputs for an offline simulated session.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSpec {
    pub config: SessionConfig,
    pub driver: Driver,
    pub labels: Labels,
    pub created_at: String,
}

fn archive_from_run(metadata: Metadata, run: OfflineRun) -> SessionArchive {
    SessionArchive {
        metadata,
        inputs: run.inputs,
        summaries: run.trials.iter().filter_map(|t| t.summary).collect(),
        trials: run.trials.into_iter().map(|t| t.record).collect(),
    }
}

/// Run a session offline and archive everything needed to replay it.
pub fn simulate(spec: &SimulateSpec) -> Result<SessionArchive, SessionError> {
    let mut session = Session::new(spec.config.clone())?;
    let (run, seed, rate) = match &spec.driver {
        Driver::Autopilot(cfg) => {
            if spec.config.source != InputSource::Imusim {
                return Err(TeleopError::InvalidConfig("autopilot drives an imusim session".into()).into());
            }
            let mut pilot = Autopilot::new(&spec.config, *cfg)?;
            (run_offline(&mut session, &mut pilot, cfg.sensor_rate_hz)?, cfg.drift.seed, cfg.sensor_rate_hz)
        }
        Driver::Trajectory {
            trajectory,
            drift,
            rate_hz,
        } => {
            let traj: Trajectory = trajectory.clone().into_trajectory()?;
            let items = imusim::stream(&traj, drift, *rate_hz)?
                .into_iter()
                .map(|p| (p.t, Input::Imus(p)))
                .collect();
            let mut feed = RecordedFeed::new(items);
            (run_offline(&mut session, &mut feed, *rate_hz)?, drift.seed, *rate_hz)
        }
        Driver::Live => {
            return Err(TeleopError::InvalidConfig("a live driver cannot be simulated".into()).into());
        }
    };
    let metadata = Metadata {
        wire_id: spec.config.wire.id().to_string(),
        source: spec.config.source,
        config: spec.config.clone(),
        driver: spec.driver.clone(),
        seed,
        input_rate_hz: rate,
        created_at: spec.created_at.clone(),
        labels: spec.labels.clone(),
    };
    Ok(archive_from_run(metadata, run))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub trials: Vec<TrialRecord>,
    pub summaries: Vec<TrialSummary>,
    /// Recomputed trials serialize identically to the archived ones.
    pub matches: bool,
}

/// Feed the archived inputs through a fresh session built from the archived
/// config and compare the resulting trials with the archived ones.
pub fn replay(archive: &SessionArchive) -> Result<ReplayOutcome, SessionError> {
    if archive.inputs.is_empty() && !archive.trials.is_empty() {
        return Err(SessionError::NothingToReplay);
    }
    let mut session = Session::new(archive.metadata.config.clone())?;
    let mut feed = RecordedFeed::new(archive.inputs.clone());
    let run = run_offline(&mut session, &mut feed, archive.metadata.input_rate_hz)?;
    let trials: Vec<TrialRecord> = run.trials.iter().map(|t| t.record.clone()).collect();
    let summaries: Vec<TrialSummary> = run.trials.iter().filter_map(|t| t.summary).collect();
    let matches = to_line(&trials) == to_line(&archive.trials) && to_line(&summaries) == to_line(&archive.summaries);
    Ok(ReplayOutcome {
        trials,
        summaries,
        matches,
    })
}

/// Replays `feed` at `rate_hz`, for callers holding inputs outside an archive.
pub fn run_feed(
    config: &SessionConfig,
    feed: &mut dyn InputFeed,
    rate_hz: u32,
) -> Result<OfflineRun, SessionError> {
    let mut session = Session::new(config.clone())?;
    Ok(run_offline(&mut session, feed, rate_hz)?)
}
