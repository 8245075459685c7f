//! Trial summary tables: one section per task, one row per device, and per
//! user a column for each trial followed by their mean.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::TrialSummary;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("no trial summaries to report")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CompletionTime,
    PositionError,
    OrientationError,
    NonCollision,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::CompletionTime,
        Metric::PositionError,
        Metric::OrientationError,
        Metric::NonCollision,
    ];

    pub fn value(self, s: &TrialSummary) -> f64 {
        match self {
            Metric::CompletionTime => s.completion_time,
            Metric::PositionError => s.mean_position_error_mm,
            Metric::OrientationError => s.mean_orientation_error_deg,
            Metric::NonCollision => s.non_collision_pct,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::CompletionTime => "Completion times for tasks, in seconds",
            Metric::PositionError => "Mean position errors for tasks, in millimeters",
            Metric::OrientationError => "Mean orientation errors for tasks, in degrees",
            Metric::NonCollision => "Non-collision percentage for tasks",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "time" | "completion_time" => Ok(Metric::CompletionTime),
            "position" | "position_error" => Ok(Metric::PositionError),
            "orientation" | "orientation_error" => Ok(Metric::OrientationError),
            "collision" | "non_collision" => Ok(Metric::NonCollision),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

/// A trial summary with the labels it is grouped by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub task: String,
    pub device: String,
    pub user: String,
    pub summary: TrialSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub user: String,
    pub trials: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub device: String,
    /// One cell per report user, `None` where the user has no trials.
    pub cells: Vec<Option<Cell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub task: String,
    pub rows: Vec<Row>,
}

/// One machine-readable record per trial and per mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub metric: Metric,
    pub task: String,
    pub device: String,
    pub user: String,
    /// 1-based trial number, or `None` for the mean.
    pub trial: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metric: Metric,
    pub users: Vec<String>,
    /// Trial columns per user; the widest group sets it.
    pub trial_columns: usize,
    pub sections: Vec<Section>,
}

fn push_unique(list: &mut Vec<String>, s: &str) {
    if !list.iter().any(|x| x == s) {
        list.push(s.to_string());
    }
}

/// Group entries by task, device and user, keeping first-seen order, and
/// average each group's trials.
pub fn make_report(entries: &[ReportEntry], metric: Metric) -> Result<Report, ReportError> {
    if entries.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut tasks = Vec::new();
    let mut devices = Vec::new();
    let mut users = Vec::new();
    for e in entries {
        push_unique(&mut tasks, &e.task);
        push_unique(&mut devices, &e.device);
        push_unique(&mut users, &e.user);
    }
    let mut trial_columns = 0;
    let mut sections = Vec::new();
    for task in &tasks {
        let mut rows = Vec::new();
        for device in &devices {
            let cells: Vec<Option<Cell>> = users
                .iter()
                .map(|user| {
                    let trials: Vec<f64> = entries
                        .iter()
                        .filter(|e| &e.task == task && &e.device == device && &e.user == user)
                        .map(|e| metric.value(&e.summary))
                        .collect();
                    if trials.is_empty() {
                        return None;
                    }
                    trial_columns = trial_columns.max(trials.len());
                    let mean = trials.iter().sum::<f64>() / trials.len() as f64;
                    Some(Cell {
                        user: user.clone(),
                        trials,
                        mean,
                    })
                })
                .collect();
            if cells.iter().any(Option::is_some) {
                rows.push(Row {
                    device: device.clone(),
                    cells,
                });
            }
        }
        sections.push(Section {
            task: task.clone(),
            rows,
        });
    }
    Ok(Report {
        metric,
        users,
        trial_columns,
        sections,
    })
}

const WIDTH: usize = 7;

impl Report {
    pub fn records(&self) -> Vec<ReportRecord> {
        let mut out = Vec::new();
        for section in &self.sections {
            for row in &section.rows {
                for cell in row.cells.iter().flatten() {
                    let rec = |trial, value| ReportRecord {
                        metric: self.metric,
                        task: section.task.clone(),
                        device: row.device.clone(),
                        user: cell.user.clone(),
                        trial,
                        value,
                    };
                    out.extend(cell.trials.iter().enumerate().map(|(i, v)| rec(Some(i + 1), *v)));
                    out.push(rec(None, cell.mean));
                }
            }
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        self.records()
            .iter()
            .map(|r| serde_json::to_string(r).expect("report records serialize") + "\n")
            .collect()
    }

    /// Aligned plain-text table, values to one decimal.
    pub fn to_text(&self) -> String {
        let label_width = self
            .sections
            .iter()
            .flat_map(|s| s.rows.iter().map(|r| r.device.len()))
            .max()
            .unwrap_or(0)
            .max(6);
        let per_user = self.trial_columns + 1;
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.metric.title());

        let mut header = format!("{:label_width$}", "");
        for user in &self.users {
            let span = per_user * WIDTH;
            let _ = write!(header, " |{:>span$}", format!("{user} Trials"));
        }
        let mut columns = format!("{:label_width$}", "");
        for _ in &self.users {
            columns.push_str(" |");
            for i in 1..=self.trial_columns {
                let _ = write!(columns, "{i:>WIDTH$}");
            }
            let _ = write!(columns, "{:>WIDTH$}", "Mean");
        }
        let rule = "-".repeat(columns.len());
        let _ = writeln!(out, "{}", header.trim_end());
        let _ = writeln!(out, "{}", columns.trim_end());

        for section in &self.sections {
            let _ = writeln!(out, "{rule}");
            let _ = writeln!(out, "{}", section.task);
            for row in &section.rows {
                let mut line = format!("{:label_width$}", row.device);
                for cell in &row.cells {
                    line.push_str(" |");
                    for i in 0..self.trial_columns {
                        match cell.as_ref().and_then(|c| c.trials.get(i)) {
                            Some(v) => {
                                let _ = write!(line, "{v:>WIDTH$.1}");
                            }
                            None => {
                                let _ = write!(line, "{:>WIDTH$}", "");
                            }
                        }
                    }
                    match cell {
                        Some(c) => {
                            let _ = write!(line, "{:>WIDTH$.1}", c.mean);
                        }
                        None => {
                            let _ = write!(line, "{:>WIDTH$}", "");
                        }
                    }
                }
                let _ = writeln!(out, "{}", line.trim_end());
            }
        }
        out
    }

    /// Mean of a group, if present.
    pub fn mean(&self, task: &str, device: &str, user: &str) -> Option<f64> {
        let ui = self.users.iter().position(|u| u == user)?;
        self.sections
            .iter()
            .find(|s| s.task == task)?
            .rows
            .iter()
            .find(|r| r.device == device)?
            .cells[ui]
            .as_ref()
            .map(|c| c.mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn summary(time: f64) -> TrialSummary {
        TrialSummary {
            completion_time: time,
            mean_position_error_mm: time * 2.0,
            mean_orientation_error_deg: time / 2.0,
            non_collision_pct: 100.0 - time,
            completed: true,
        }
    }

    fn entry(task: &str, device: &str, user: &str, time: f64) -> ReportEntry {
        ReportEntry {
            task: task.into(),
            device: device.into(),
            user: user.into(),
            summary: summary(time),
        }
    }

    fn straight_wire_times() -> Vec<ReportEntry> {
        let mut v = Vec::new();
        for (device, user, times) in [
            ("MTM", "User1", [6.8, 6.6, 5.8]),
            ("MTM", "User2", [9.6, 11.1, 8.4]),
            ("IMU", "User1", [8.4, 7.9, 6.7]),
            ("IMU", "User2", [7.2, 9.6, 10.8]),
        ] {
            for t in times {
                v.push(entry("Straight Wire Task", device, user, t));
            }
        }
        v
    }

    #[test]
    fn straight_wire_means_match_published_table() {
        let r = make_report(&straight_wire_times(), Metric::CompletionTime).unwrap();
        assert_eq!(format!("{:.1}", r.mean("Straight Wire Task", "MTM", "User1").unwrap()), "6.4");
        let expect = [
            ("MTM", "User1", 6.4),
            ("MTM", "User2", 9.7),
            ("IMU", "User1", 7.6),
            ("IMU", "User2", 9.2),
        ];
        for (device, user, published) in expect {
            // Published trials and means are each rounded to 0.1.
            let m = r.mean("Straight Wire Task", device, user).unwrap();
            assert!((m - published).abs() <= 0.1 + 1e-12, "{device} {user}: {m}");
        }
    }

    #[test]
    fn text_layout() {
        let r = make_report(&straight_wire_times(), Metric::CompletionTime).unwrap();
        let text = r.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "Completion times for tasks, in seconds");
        assert!(lines[1].contains("User1 Trials") && lines[1].contains("User2 Trials"));
        let cols: Vec<&str> = lines[2].split_whitespace().filter(|s| *s != "|").collect();
        assert_eq!(cols, ["1", "2", "3", "Mean", "1", "2", "3", "Mean"]);
        assert_eq!(lines[4], "Straight Wire Task");
        let mtm: Vec<&str> = lines[5].split_whitespace().filter(|s| *s != "|").collect();
        assert_eq!(mtm, ["MTM", "6.8", "6.6", "5.8", "6.4", "9.6", "11.1", "8.4", "9.7"]);
        let imu: Vec<&str> = lines[6].split_whitespace().filter(|s| *s != "|").collect();
        assert_eq!(imu, ["IMU", "8.4", "7.9", "6.7", "7.7", "7.2", "9.6", "10.8", "9.2"]);
    }

    #[test]
    fn single_trial_mean_is_the_trial() {
        let r = make_report(&[entry("s", "IMU", "u", 12.34)], Metric::PositionError).unwrap();
        assert_eq!(r.trial_columns, 1);
        assert_eq!(r.mean("s", "IMU", "u"), Some(24.68));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(make_report(&[], Metric::CompletionTime), Err(ReportError::Empty));
    }

    #[test]
    fn missing_groups_leave_blank_cells() {
        let entries = [entry("a", "IMU", "u1", 1.0), entry("b", "MTM", "u2", 2.0)];
        let r = make_report(&entries, Metric::CompletionTime).unwrap();
        assert_eq!(r.sections[0].rows.len(), 1);
        assert!(r.sections[0].rows[0].cells[1].is_none());
        assert_eq!(r.mean("a", "IMU", "u2"), None);
        assert!(r.to_text().contains("IMU"));
    }

    #[test]
    fn records_round_trip_through_jsonl() {
        let r = make_report(&straight_wire_times(), Metric::NonCollision).unwrap();
        let parsed: Vec<ReportRecord> = r
            .to_jsonl()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(parsed, r.records());
        assert_eq!(parsed.len(), 16);
        assert_eq!(parsed.iter().filter(|p| p.trial.is_none()).count(), 4);
    }

    #[test]
    fn metric_names_parse() {
        for (s, m) in [
            ("time", Metric::CompletionTime),
            ("position", Metric::PositionError),
            ("orientation", Metric::OrientationError),
            ("collision", Metric::NonCollision),
        ] {
            assert_eq!(s.parse::<Metric>().unwrap(), m);
        }
        assert!("speed".parse::<Metric>().is_err());
    }

    proptest! {
        #[test]
        fn means_equal_independent_average(
            vals in prop::collection::vec((0usize..2, 0usize..3, 0.0f64..100.0), 1..40),
            metric in prop::sample::select(Metric::ALL.to_vec()),
        ) {
            let entries: Vec<ReportEntry> = vals
                .iter()
                .map(|(d, u, t)| entry("task", ["IMU", "MTM"][*d], ["a", "b", "c"][*u], *t))
                .collect();
            let r = make_report(&entries, metric).unwrap();
            for rec in r.records().iter().filter(|r| r.trial.is_none()) {
                let group: Vec<f64> = entries
                    .iter()
                    .filter(|e| e.device == rec.device && e.user == rec.user)
                    .map(|e| metric.value(&e.summary))
                    .collect();
                let expect = group.iter().sum::<f64>() / group.len() as f64;
                prop_assert!((rec.value - expect).abs() <= 1e-9);
            }
            let trials = r.records().iter().filter(|r| r.trial.is_some()).count();
            prop_assert_eq!(trials, entries.len());
        }
    }
}
