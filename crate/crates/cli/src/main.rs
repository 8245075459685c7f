mod config;

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use imu_teleop::arm::{ArmModel, DEFAULT_HAND_LENGTH};
use imu_teleop::calib::report::CalibrationReport;
use imu_teleop::calib::synthetic::{noise_study, SyntheticSetup, CORNER_IDS};
use imu_teleop::calib::{calibrate, load_samples, CalibrationGrid, CalibrationOptions, CalibrationResult};
use imu_teleop::geom::Vector3;
use imu_teleop::imusim::{DriftModel, Trajectory, DEFAULT_RATE_HZ};
use imu_teleop::session::{
    make_report, replay, simulate, Driver, Labels, Metric, ReportEntry, SessionArchive, SimulateSpec,
};
use imu_teleop::task::{
    make_s_wire, make_straight_wire, TrialSummary, Wire, DEFAULT_S_ANGLE_DEG, DEFAULT_S_RADIUS,
    DEFAULT_STRAIGHT_LENGTH,
};
use imu_teleop::teleop::autopilot::{AutopilotConfig, DEFAULT_FEEDBACK_GAIN};
use imu_teleop::teleop::{InputSource, SessionConfig, DEFAULT_LOOP_RATE_HZ};
use imu_teleop_server::{Server, ServerConfig};

use config::{FileConfig, CONFIG_ENV};

const EXIT_FAILURE: u8 = 1;
const EXIT_BAD_INPUT: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;
const EXIT_REPLAY_MISMATCH: u8 = 5;

const DEFAULT_WS_PORT: u16 = 8765;
const DEFAULT_UDP_PORT: u16 = 9870;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn bad_input(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_BAD_INPUT,
            message: message.to_string(),
        }
    }

    fn runtime(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: message.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Arm calibration, drift simulation and ring-on-wire teleoperation.
///
/// Exit status: 0 success, 2 usage error, 3 bad input file or value,
/// 4 calibration did not converge, 5 replay mismatch.
#[derive(Debug, Parser)]
#[command(name = "imu-teleop", version)]
struct Cli {
    /// TOML file with default settings.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Estimate upper-arm and forearm lengths from touch samples.
    Calibrate(CalibrateArgs),
    /// Run an offline session and write an archive.
    Simulate(SimulateArgs),
    /// Recompute an archive's trials and check they match.
    Replay(ReplayArgs),
    /// Summarize archived trials as tables.
    Report(ReportArgs),
    /// Run the live session with UDP and websocket bridges.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Jsonl,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Generate samples from a known arm instead of reading a file.
    #[arg(long, conflicts_with = "samples")]
    synthetic: bool,
    /// Sample file, one JSON object per line: {"point_id", "r1", "r2"}.
    #[arg(long, required_unless_present = "synthetic")]
    samples: Option<PathBuf>,
    /// Grid file with `id,x,y,z` rows; the built-in 3x3 grid otherwise.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// True upper-arm length for synthetic samples, meters.
    #[arg(long, default_value_t = 0.28)]
    upper_arm: f64,
    /// True forearm length for synthetic samples, meters.
    #[arg(long, default_value_t = 0.24)]
    forearm: f64,
    /// RMS orientation noise added to synthetic samples, degrees.
    #[arg(long, default_value_t = 0.0)]
    noise_deg: f64,
    /// Number of synthetic trials, seeds `seed..seed+trials`.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Grid points touched in synthetic trials.
    #[arg(long, value_delimiter = ',', default_values_t = CORNER_IDS)]
    points: Vec<u32>,
    /// Known lengths `UPPER,FORE` for reporting errors on file samples.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    truth: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct WireArg {
    /// `straight`, `s`, or a wire JSON file.
    #[arg(long)]
    wire: Option<String>,
}

#[derive(Debug, Args)]
struct DriftArgs {
    /// Disable drift and noise.
    #[arg(long)]
    zero_drift: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    wire: WireArg,
    /// Joint trajectory JSON; the autopilot follows the wire otherwise.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Autopilot traversal time, seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Visual-feedback gain for the autopilot, 1/s.
    #[arg(long, num_args = 0..=1, default_missing_value = "2.0")]
    feedback_gain: Option<f64>,
    /// Sensor rate, Hz.
    #[arg(long)]
    rate: Option<u32>,
    #[command(flatten)]
    drift: DriftArgs,
    /// Archive to write.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    user: Option<String>,
    #[arg(long)]
    device: Option<String>,
    #[arg(long)]
    task: Option<String>,
    /// Creation stamp stored in the archive; the current UTC time otherwise.
    #[arg(long)]
    created_at: Option<String>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    archive: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    All,
    Time,
    Position,
    Orientation,
    Collision,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(required = true)]
    archives: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = MetricArg::All)]
    metric: MetricArg,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    wire: WireArg,
    #[arg(long, value_parser = parse_source)]
    source: Option<InputSource>,
    #[arg(long)]
    bind: Option<IpAddr>,
    #[arg(long)]
    ws_port: Option<u16>,
    #[arg(long)]
    udp_port: Option<u16>,
    #[arg(long)]
    loop_rate: Option<u32>,
    #[arg(long)]
    scale: Option<f64>,
    /// Drive the imusim source with the autopilot, restarted on each start.
    #[arg(long)]
    autopilot: bool,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "2.0")]
    feedback_gain: Option<f64>,
    #[command(flatten)]
    drift: DriftArgs,
}

fn parse_source(s: &str) -> Result<InputSource, String> {
    s.parse()
}

fn resolve_wire(name: Option<&str>) -> Result<Wire, Failure> {
    match name.unwrap_or("straight") {
        "straight" => make_straight_wire(DEFAULT_STRAIGHT_LENGTH).map_err(Failure::bad_input),
        "s" => make_s_wire(DEFAULT_S_RADIUS, DEFAULT_S_ANGLE_DEG.to_radians()).map_err(Failure::bad_input),
        path => Wire::load(Path::new(path)).map_err(Failure::bad_input),
    }
}

fn arm_from(cfg: &FileConfig) -> Result<ArmModel, Failure> {
    ArmModel::new(
        cfg.arm.upper_arm.unwrap_or(0.28),
        cfg.arm.forearm.unwrap_or(0.24),
        cfg.arm.hand.unwrap_or(DEFAULT_HAND_LENGTH),
    )
    .map_err(Failure::bad_input)
}

fn drift_from(cfg: &FileConfig, args: &DriftArgs) -> DriftModel {
    if args.zero_drift {
        return DriftModel::zero().with_seed(args.seed);
    }
    let d = DriftModel::default();
    DriftModel {
        bias_rw_sigma: cfg.drift.bias_rw_sigma.unwrap_or(d.bias_rw_sigma),
        noise_sigma: cfg.drift.noise_sigma.unwrap_or(d.noise_sigma),
        initial_bias: cfg.drift.initial_bias.map_or(d.initial_bias, Vector3::from),
        seed: args.seed,
    }
}

fn session_config(cfg: &FileConfig, wire: Option<&str>, source: InputSource) -> Result<SessionConfig, Failure> {
    let mut sc = SessionConfig::new(resolve_wire(wire.or(cfg.wire.as_deref()))?, source);
    sc.arm = arm_from(cfg)?;
    sc.loop_rate_hz = cfg.loop_rate_hz.unwrap_or(DEFAULT_LOOP_RATE_HZ);
    sc.scale = cfg.scale.unwrap_or(1.0);
    sc.validate().map_err(Failure::bad_input)?;
    Ok(sc)
}

fn print_summary(s: &TrialSummary) {
    println!(
        "completed {}  time {:.2} s  position error {:.2} mm  orientation error {:.2} deg  non-collision {:.1}%",
        s.completed, s.completion_time, s.mean_position_error_mm, s.mean_orientation_error_deg, s.non_collision_pct
    );
}

fn print_result(r: &CalibrationResult) {
    print!(
        "upper arm {:.4} m  forearm {:.4} m  residual {:.3e} m  iterations {}  converged {}",
        r.upper_arm, r.forearm, r.residual, r.iterations, r.converged
    );
    if let Some([u, f]) = r.percent_errors {
        print!("  error {u:.2}% / {f:.2}%");
    }
    println!();
    for w in &r.warnings {
        println!("warning: {w:?}");
    }
}

fn run_calibrate(args: &CalibrateArgs) -> Outcome {
    let grid = match &args.grid {
        Some(p) => CalibrationGrid::load(p).map_err(Failure::bad_input)?,
        None => CalibrationGrid::default_grid(),
    };
    let options = CalibrationOptions::default();
    let results = if args.synthetic {
        if args.trials == 0 {
            return Err(Failure::bad_input("--trials must be at least 1"));
        }
        let setup = SyntheticSetup {
            grid,
            point_ids: args.points.clone(),
            noise_rms_deg: args.noise_deg,
            seed: args.seed,
            ..SyntheticSetup::new(args.upper_arm, args.forearm).map_err(Failure::bad_input)?
        };
        noise_study(&setup, args.trials, &options).map_err(Failure::bad_input)?
    } else {
        let path = args.samples.as_ref().expect("required unless synthetic");
        let samples = load_samples(path).map_err(Failure::bad_input)?;
        let r = calibrate(&samples, &grid, &options).map_err(Failure::bad_input)?;
        vec![match args.truth.as_deref() {
            Some([u, f]) => r.with_ground_truth(*u, *f),
            _ => r,
        }]
    };

    let report = CalibrationReport::from_results(&results);
    match args.format {
        Format::Text => {
            for r in &results {
                print_result(r);
            }
            if !report.trials().is_empty() {
                println!();
                print!("{}", report.to_text());
            }
        }
        Format::Jsonl => {
            for r in &results {
                println!("{}", serde_json::to_string(r).expect("results serialize"));
            }
            print!("{}", report.to_jsonl());
        }
    }
    let failed = results.iter().filter(|r| !r.converged).count();
    if failed > 0 {
        return Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: format!("{failed} calibration(s) did not converge"),
        });
    }
    Ok(())
}

fn run_simulate(cfg: &FileConfig, args: &SimulateArgs) -> Outcome {
    let config = session_config(cfg, args.wire.wire.as_deref(), InputSource::Imusim)?;
    let drift = drift_from(cfg, &args.drift);
    let rate = args.rate.or(cfg.autopilot.sensor_rate_hz).unwrap_or(DEFAULT_RATE_HZ);
    let driver = match &args.trajectory {
        Some(path) => Driver::Trajectory {
            trajectory: Trajectory::load(path).map_err(Failure::bad_input)?.to_file_format(),
            drift,
            rate_hz: rate,
        },
        None => Driver::Autopilot(AutopilotConfig {
            duration_s: args.duration.or(cfg.autopilot.duration_s).unwrap_or(20.0),
            sensor_rate_hz: rate,
            drift,
            feedback_gain: args.feedback_gain.or(cfg.autopilot.feedback_gain),
            ..Default::default()
        }),
    };
    let spec = SimulateSpec {
        labels: Labels {
            user: args.user.clone(),
            device: Some(args.device.clone().unwrap_or_else(|| "IMU".into())),
            task: Some(args.task.clone().unwrap_or_else(|| config.wire.id().to_string())),
        },
        created_at: args
            .created_at
            .clone()
            .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
        config,
        driver,
    };
    let archive = simulate(&spec).map_err(Failure::bad_input)?;
    archive.save(&args.out).map_err(Failure::runtime)?;
    println!(
        "wrote {} ({} inputs, {} trial(s))",
        args.out.display(),
        archive.inputs.len(),
        archive.trials.len()
    );
    for s in &archive.summaries {
        print_summary(s);
    }
    Ok(())
}

fn run_replay(args: &ReplayArgs) -> Outcome {
    let archive = SessionArchive::load(&args.archive).map_err(Failure::bad_input)?;
    let out = replay(&archive).map_err(Failure::bad_input)?;
    for s in &out.summaries {
        print_summary(s);
    }
    if !out.matches {
        return Err(Failure {
            code: EXIT_REPLAY_MISMATCH,
            message: format!("{}: recomputed trials differ from the archive", args.archive.display()),
        });
    }
    println!("replay matches archive ({} trial(s))", out.trials.len());
    Ok(())
}

fn device_label(source: InputSource) -> &'static str {
    match source {
        InputSource::Imusim => "IMU",
        InputSource::Datagram => "MTM",
        InputSource::Ui => "UI",
    }
}

fn run_report(args: &ReportArgs) -> Outcome {
    let mut entries = Vec::new();
    for path in &args.archives {
        let a = SessionArchive::load(path).map_err(Failure::bad_input)?;
        let m = &a.metadata;
        for s in &a.summaries {
            entries.push(ReportEntry {
                task: m.labels.task.clone().unwrap_or_else(|| m.wire_id.clone()),
                device: m.labels.device.clone().unwrap_or_else(|| device_label(m.source).into()),
                user: m.labels.user.clone().unwrap_or_else(|| "User".into()),
                summary: *s,
            });
        }
    }
    let metrics = match args.metric {
        MetricArg::All => Metric::ALL.to_vec(),
        MetricArg::Time => vec![Metric::CompletionTime],
        MetricArg::Position => vec![Metric::PositionError],
        MetricArg::Orientation => vec![Metric::OrientationError],
        MetricArg::Collision => vec![Metric::NonCollision],
    };
    for (k, metric) in metrics.into_iter().enumerate() {
        let report = make_report(&entries, metric).map_err(Failure::bad_input)?;
        match args.format {
            Format::Text => {
                if k > 0 {
                    println!();
                }
                print!("{}", report.to_text());
            }
            Format::Jsonl => print!("{}", report.to_jsonl()),
        }
    }
    Ok(())
}

fn run_serve(cfg: &FileConfig, args: &ServeArgs) -> Outcome {
    let source = args
        .source
        .or(cfg.source)
        .unwrap_or(if args.autopilot { InputSource::Imusim } else { InputSource::Ui });
    let mut file_cfg = cfg.clone();
    if let Some(r) = args.loop_rate {
        file_cfg.loop_rate_hz = Some(r);
    }
    if let Some(s) = args.scale {
        file_cfg.scale = Some(s);
    }
    let session = session_config(&file_cfg, args.wire.wire.as_deref(), source)?;
    let bind = args.bind.or(cfg.bind).unwrap_or(IpAddr::V4(Ipv4Addr::LOCALHOST));
    let ws_addr = SocketAddr::new(bind, args.ws_port.or(cfg.ws_port).unwrap_or(DEFAULT_WS_PORT));
    let udp_addr = (source == InputSource::Datagram)
        .then(|| SocketAddr::new(bind, args.udp_port.or(cfg.udp_port).unwrap_or(DEFAULT_UDP_PORT)));
    let autopilot = args.autopilot.then(|| AutopilotConfig {
        duration_s: args.duration.or(cfg.autopilot.duration_s).unwrap_or(20.0),
        sensor_rate_hz: cfg.autopilot.sensor_rate_hz.unwrap_or(DEFAULT_RATE_HZ),
        drift: drift_from(cfg, &args.drift),
        feedback_gain: args
            .feedback_gain
            .or(cfg.autopilot.feedback_gain)
            .or(Some(DEFAULT_FEEDBACK_GAIN)),
        ..Default::default()
    });

    let rt = tokio::runtime::Runtime::new().map_err(Failure::runtime)?;
    rt.block_on(async {
        let server = Server::bind(ServerConfig {
            session,
            ws_addr,
            udp_addr,
            autopilot,
        })
        .await
        .map_err(Failure::bad_input)?;
        println!("websocket ws://{}/ws", server.ws_addr().map_err(Failure::runtime)?);
        if let Some(udp) = server.udp_addr() {
            println!("udp {}", udp.map_err(Failure::runtime)?);
        }
        let outcome = server
            .run(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(Failure::runtime)?;
        for t in &outcome.trials {
            if let Some(s) = &t.summary {
                print_summary(s);
            }
        }
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let file_cfg = match &cli.config {
        Some(path) => match FileConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: config {e}");
                return ExitCode::from(EXIT_BAD_INPUT);
            }
        },
        None => FileConfig::default(),
    };
    let result = match &cli.command {
        Cmd::Calibrate(a) => run_calibrate(a),
        Cmd::Simulate(a) => run_simulate(&file_cfg, a),
        Cmd::Replay(a) => run_replay(a),
        Cmd::Report(a) => run_report(a),
        Cmd::Serve(a) => run_serve(&file_cfg, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
