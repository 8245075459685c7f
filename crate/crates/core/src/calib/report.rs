//! Per-trial link-length error table with mean and standard deviation.

use serde::{Deserialize, Serialize};

use super::CalibrationResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    /// `Trial n` (1-based), `Mean` or `Std Dev.`.
    pub label: String,
    pub upper_arm_pct: f64,
    pub forearm_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    trials: Vec<[f64; 2]>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation, `n - 1` in the denominator.
fn std_dev(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

impl CalibrationReport {
    /// Rows of `[upper_arm, forearm]` percentage errors.
    pub fn new(trials: Vec<[f64; 2]>) -> Self {
        Self { trials }
    }

    /// Uses each result's percent errors; results without ground truth are skipped.
    pub fn from_results(results: &[CalibrationResult]) -> Self {
        Self::new(results.iter().filter_map(|r| r.percent_errors).collect())
    }

    pub fn trials(&self) -> &[[f64; 2]] {
        &self.trials
    }

    fn column(&self, k: usize) -> Vec<f64> {
        self.trials.iter().map(|t| t[k]).collect()
    }

    pub fn mean(&self) -> Option<[f64; 2]> {
        (!self.trials.is_empty()).then(|| [mean(&self.column(0)), mean(&self.column(1))])
    }

    pub fn std_dev(&self) -> Option<[f64; 2]> {
        Some([std_dev(&self.column(0))?, std_dev(&self.column(1))?])
    }

    pub fn rows(&self) -> Vec<CalibrationRow> {
        let row = |label: String, v: [f64; 2]| CalibrationRow {
            label,
            upper_arm_pct: v[0],
            forearm_pct: v[1],
        };
        let mut rows: Vec<CalibrationRow> = self
            .trials
            .iter()
            .enumerate()
            .map(|(i, t)| row(format!("Trial {}", i + 1), *t))
            .collect();
        if let Some(m) = self.mean() {
            rows.push(row("Mean".into(), m));
        }
        if let Some(s) = self.std_dev() {
            rows.push(row("Std Dev.".into(), s));
        }
        rows
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<10}{:>12}{:>12}\n", "", "Upper Arm", "Forearm");
        for r in self.rows() {
            out.push_str(&format!(
                "{:<10}{:>11.1}%{:>11.1}%\n",
                r.label, r.upper_arm_pct, r.forearm_pct
            ));
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        self.rows()
            .iter()
            .map(|r| serde_json::to_string(r).expect("rows serialize") + "\n")
            .collect()
    }
}
