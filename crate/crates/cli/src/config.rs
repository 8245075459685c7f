//! Optional TOML defaults, overridden by command-line flags.
//!
//! ```toml
//! wire = "s"              # "straight", "s" or a wire JSON path
//! source = "ui"
//! loop_rate_hz = 50
//! scale = 1.0
//! bind = "127.0.0.1"
//! ws_port = 8765
//! udp_port = 9870
//!
//! [arm]
//! upper_arm = 0.28
//! forearm = 0.24
//!
//! [drift]
//! bias_rw_sigma = 0.001
//! noise_sigma = 0.002
//!
//! [autopilot]
//! duration_s = 20.0
//! sensor_rate_hz = 100
//! feedback_gain = 2.0
//! ```

use std::net::IpAddr;
use std::path::Path;

use serde::Deserialize;

use imu_teleop::teleop::InputSource;

pub const CONFIG_ENV: &str = "IMU_TELEOP_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub wire: Option<String>,
    pub source: Option<InputSource>,
    pub loop_rate_hz: Option<u32>,
    pub scale: Option<f64>,
    pub bind: Option<IpAddr>,
    pub ws_port: Option<u16>,
    pub udp_port: Option<u16>,
    #[serde(default)]
    pub arm: ArmSection,
    #[serde(default)]
    pub drift: DriftSection,
    #[serde(default)]
    pub autopilot: AutopilotSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSection {
    pub upper_arm: Option<f64>,
    pub forearm: Option<f64>,
    pub hand: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    pub bias_rw_sigma: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub initial_bias: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutopilotSection {
    pub duration_s: Option<f64>,
    pub sensor_rate_hz: Option<u32>,
    pub feedback_gain: Option<f64>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
