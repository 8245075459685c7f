use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::{TcpStream, UdpSocket};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use imu_teleop::geom::{RigidTransform, Vector3};
use imu_teleop::imusim::DriftModel;
use imu_teleop::task::{make_straight_wire, ring_pose_on};
use imu_teleop::teleop::autopilot::AutopilotConfig;
use imu_teleop::teleop::bridge::PoseMsg;
use imu_teleop::teleop::datagram::PoseDatagram;
use imu_teleop::teleop::{InputSource, SessionConfig};
use imu_teleop_server::{Server, ServerConfig, ServerOutcome};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Running {
    ws_url: String,
    udp: Option<SocketAddr>,
    stop: oneshot::Sender<()>,
    handle: JoinHandle<ServerOutcome>,
}

impl Running {
    async fn shutdown(self) -> ServerOutcome {
        let _ = self.stop.send(());
        tokio::time::timeout(Duration::from_secs(5), self.handle)
            .await
            .expect("server stops")
            .unwrap()
    }
}

fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

async fn start(source: InputSource, autopilot: Option<AutopilotConfig>) -> Running {
    let session = SessionConfig::new(make_straight_wire(0.4).unwrap(), source);
    let config = ServerConfig {
        session,
        ws_addr: local(),
        udp_addr: (source == InputSource::Datagram).then(local),
        autopilot,
    };
    let server = Server::bind(config).await.unwrap();
    let ws_url = format!("ws://{}/ws", server.ws_addr().unwrap());
    let udp = server.udp_addr().map(|a| a.unwrap());
    let (stop, rx) = oneshot::channel::<()>();
    let handle = tokio::spawn(async move {
        server
            .run(async {
                let _ = rx.await;
            })
            .await
            .unwrap()
    });
    Running { ws_url, udp, stop, handle }
}

async fn connect(url: &str) -> (Ws, Value) {
    let (mut ws, _) = connect_async(url).await.unwrap();
    let scene = next_json(&mut ws).await;
    assert_eq!(scene["type"], "scene");
    (ws, scene)
}

async fn next_json(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("message within 5 s")
            .expect("open stream")
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

async fn state_where(ws: &mut Ws, pred: impl Fn(&Value) -> bool) -> Value {
    let deadline = tokio::time::Instant::now() + Duration::from_secs(10);
    loop {
        assert!(tokio::time::Instant::now() < deadline, "state condition not reached");
        let v = next_json(ws).await;
        if v["type"] == "state" && pred(&v) {
            return v;
        }
    }
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

fn ui_pose(pose: &RigidTransform) -> Value {
    let m = PoseMsg::to_ui(pose);
    json!({"type": "input_pose", "p": m.p, "q": m.q})
}

fn on_wire(s: f64, lateral: f64) -> RigidTransform {
    let wire = make_straight_wire(0.4).unwrap();
    let (p, t) = wire.point_at(s);
    ring_pose_on(p + Vector3::new(0.0, lateral, 0.0), &t)
}

fn ring_p(state: &Value) -> [f64; 3] {
    let p = &state["ring"]["p"];
    [0, 1, 2].map(|i| p[i].as_f64().unwrap())
}

fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[tokio::test]
async fn scene_describes_wire_and_threshold() {
    let srv = start(InputSource::Ui, None).await;
    let (_ws, scene) = connect(&srv.ws_url).await;
    assert_eq!(scene["wire_id"], "straight");
    assert_eq!(scene["threshold_mm"], 17.5);
    assert_eq!(scene["length"], 0.4);
    assert!(scene["polyline"].as_array().unwrap().len() > 100);
    srv.shutdown().await;
}

#[tokio::test]
async fn states_stream_at_loop_rate() {
    let srv = start(InputSource::Ui, None).await;
    let (mut ws, _) = connect(&srv.ws_url).await;
    let first = state_where(&mut ws, |_| true).await;
    let mut count = 0;
    let mut last = first["t"].as_f64().unwrap();
    let t0 = last;
    while last - t0 < 1.0 {
        let s = state_where(&mut ws, |_| true).await;
        last = s["t"].as_f64().unwrap();
        count += 1;
    }
    assert!(count >= 20, "{count} states in one second");
    assert_eq!(first["stale"], true);
    assert_eq!(first["trial"]["phase"], "idle");
    srv.shutdown().await;
}

#[tokio::test]
async fn collision_indicator_trips_at_threshold() {
    let srv = start(InputSource::Ui, None).await;
    let (mut ws, _) = connect(&srv.ws_url).await;
    send(&mut ws, ui_pose(&on_wire(0.2, 0.0174))).await;
    let s = state_where(&mut ws, |v| v["stale"] == false).await;
    assert!((s["pos_err_mm"].as_f64().unwrap() - 17.4).abs() < 1e-9);
    assert_eq!(s["collision"], false);
    send(&mut ws, ui_pose(&on_wire(0.2, 0.0176))).await;
    let s = state_where(&mut ws, |v| v["pos_err_mm"].as_f64().unwrap() > 17.5).await;
    assert_eq!(s["collision"], true);
    srv.shutdown().await;
}

#[tokio::test]
async fn ui_steered_trial_completes_and_matches_server_summary() {
    let srv = start(InputSource::Ui, None).await;
    let (mut ws, _) = connect(&srv.ws_url).await;
    send(&mut ws, ui_pose(&on_wire(0.0, 0.0))).await;
    send(&mut ws, json!({"type": "start"})).await;
    state_where(&mut ws, |v| v["trial"]["phase"] == "running" && v["stale"] == false).await;
    for k in 0..=40 {
        send(&mut ws, ui_pose(&on_wire(0.01 * k as f64, 0.0))).await;
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    let done = state_where(&mut ws, |v| v["trial"]["phase"] == "done").await;
    let ui_summary = done["trial"]["summary"].clone();
    assert_eq!(ui_summary["completed"], true);
    assert_eq!(ui_summary["non_collision_pct"], 100.0);
    let out = srv.shutdown().await;
    assert_eq!(out.trials.len(), 1);
    let server_summary = serde_json::to_value(out.trials[0].summary.unwrap()).unwrap();
    assert_eq!(ui_summary, server_summary);
}

#[tokio::test]
async fn stop_mid_trial_keeps_partial_record() {
    let srv = start(InputSource::Ui, None).await;
    let (mut ws, _) = connect(&srv.ws_url).await;
    send(&mut ws, ui_pose(&on_wire(0.0, 0.0))).await;
    state_where(&mut ws, |v| v["stale"] == false).await;
    send(&mut ws, json!({"type": "start"})).await;
    state_where(&mut ws, |v| v["trial"]["phase"] == "running").await;
    send(&mut ws, ui_pose(&on_wire(0.05, 0.0))).await;
    state_where(&mut ws, |v| v["trial"]["progress_s"].as_f64().unwrap() > 0.04).await;
    send(&mut ws, json!({"type": "stop"})).await;
    let s = state_where(&mut ws, |v| v["trial"]["phase"] == "done").await;
    assert_eq!(s["trial"]["summary"]["completed"], false);
    let out = srv.shutdown().await;
    assert_eq!(out.trials.len(), 1);
    assert!(!out.trials[0].record.completed);
}

#[tokio::test]
async fn clutch_freezes_and_releases_without_jump() {
    let srv = start(InputSource::Ui, None).await;
    let (mut ws, _) = connect(&srv.ws_url).await;
    send(&mut ws, ui_pose(&on_wire(0.1, 0.0))).await;
    let before = ring_p(&state_where(&mut ws, |v| v["stale"] == false).await);
    send(&mut ws, json!({"type": "clutch", "engaged": true})).await;
    state_where(&mut ws, |v| v["clutch"] == true).await;
    send(&mut ws, ui_pose(&on_wire(0.3, 0.05))).await;
    tokio::time::sleep(Duration::from_millis(100)).await;
    let held = ring_p(&state_where(&mut ws, |_| true).await);
    assert!(close(held, before, 1e-12));
    send(&mut ws, json!({"type": "clutch", "engaged": false})).await;
    let released = ring_p(&state_where(&mut ws, |v| v["clutch"] == false).await);
    assert!(close(released, before, 1e-9), "{released:?} vs {before:?}");
    send(&mut ws, ui_pose(&on_wire(0.35, 0.05))).await;
    let moved = state_where(&mut ws, |v| !close(ring_p(v), before, 1e-6)).await;
    let delta = [0, 1, 2].map(|i| ring_p(&moved)[i] - before[i]);
    assert!(close(delta, [0.05, 0.0, 0.0], 1e-9), "{delta:?}");
    srv.shutdown().await;
}

#[tokio::test]
async fn malformed_and_wrong_source_messages_are_counted() {
    let srv = start(InputSource::Datagram, None).await;
    let (mut ws, _) = connect(&srv.ws_url).await;
    ws.send(Message::Text("{not json".into())).await.unwrap();
    send(&mut ws, json!({"type": "input_pose", "p": [0, 0, 0], "q": [0, 0, 0, 0]})).await;
    send(&mut ws, ui_pose(&on_wire(0.1, 0.0))).await;
    send(&mut ws, json!({"type": "start"})).await;
    state_where(&mut ws, |v| v["trial"]["phase"] == "running").await;
    let out = srv.shutdown().await;
    assert_eq!(out.stats.ui_malformed, 2);
    assert_eq!(out.stats.inputs_rejected, 1);
}

#[tokio::test]
async fn datagrams_drive_the_ring_with_freshest_sequence() {
    let srv = start(InputSource::Datagram, None).await;
    let (mut ws, _) = connect(&srv.ws_url).await;
    let target = srv.udp.unwrap();
    let sock = UdpSocket::bind(local()).await.unwrap();

    let stale = state_where(&mut ws, |_| true).await;
    assert_eq!(stale["stale"], true);

    let a = on_wire(0.1, 0.0);
    let b = on_wire(0.3, 0.0);
    sock.send_to(&PoseDatagram::from_pose(5, 0.0, &a).encode(), target).await.unwrap();
    let s = state_where(&mut ws, |v| v["stale"] == false).await;
    let expect_a = PoseMsg::to_ui(&a).p;
    assert!(close(ring_p(&s), expect_a, 1e-12));

    sock.send_to(&PoseDatagram::from_pose(3, 0.1, &b).encode(), target).await.unwrap();
    let mut junk = PoseDatagram::from_pose(9, 0.2, &b).encode();
    junk[0] = b'X';
    sock.send_to(&junk, target).await.unwrap();
    sock.send_to(&[0u8; 10], target).await.unwrap();
    tokio::time::sleep(Duration::from_millis(150)).await;
    let s = state_where(&mut ws, |_| true).await;
    assert!(close(ring_p(&s), expect_a, 1e-12));

    sock.send_to(&PoseDatagram::from_pose(6, 0.3, &b).encode(), target).await.unwrap();
    let expect_b = PoseMsg::to_ui(&b).p;
    state_where(&mut ws, |v| close(ring_p(v), expect_b, 1e-12)).await;

    let out = srv.shutdown().await;
    assert_eq!(out.stats.udp_accepted, 2);
    assert_eq!(out.stats.udp_out_of_order, 1);
    assert_eq!(out.stats.udp_malformed, 2);
}

#[tokio::test]
async fn realtime_autopilot_completes_collision_free() {
    let pilot = AutopilotConfig {
        duration_s: 1.5,
        drift: DriftModel::zero(),
        ..Default::default()
    };
    let srv = start(InputSource::Imusim, Some(pilot)).await;
    let (mut ws, _) = connect(&srv.ws_url).await;
    send(&mut ws, json!({"type": "start"})).await;
    let running = state_where(&mut ws, |v| v["trial"]["phase"] == "running" && v["stale"] == false).await;
    assert!(running["arm"]["wrist"].is_array());
    let done = state_where(&mut ws, |v| v["trial"]["phase"] == "done").await;
    assert_eq!(done["trial"]["summary"]["completed"], true);
    assert_eq!(done["trial"]["summary"]["non_collision_pct"], 100.0);
    srv.shutdown().await;
}

#[tokio::test]
async fn autopilot_requires_imusim_source() {
    let config = ServerConfig {
        session: SessionConfig::new(make_straight_wire(0.4).unwrap(), InputSource::Ui),
        ws_addr: local(),
        udp_addr: None,
        autopilot: Some(AutopilotConfig::default()),
    };
    assert!(Server::bind(config).await.is_err());
}
