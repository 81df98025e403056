//! WebSocket front end for a live session at `/session`.
//!
//! One session loop owns the [`LiveSession`]; a reader task forwards client
//! text frames to it over a channel. Only one client may be connected at a
//! time. Disconnecting pauses the session clock, and a reconnecting client
//! resumes the same session.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::serve::ListenerExt;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use myotwin_core::live::{LiveFrame, LiveSession, Phase, TICK_S};
use myotwin_core::protocol::{isometric_calibration, SessionConfig, SessionError, TrialKind};
use myotwin_core::trajectory::{neutral_at_phase, target_at_phase, tolerance_curves, TrajectoryConfig};
use myotwin_core::{Point2, Vec2};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, Mutex};
use tokio::time::MissedTickBehavior;

/// Points per curve in the geometry message.
pub const GEOMETRY_SAMPLES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMsg {
    Pos { t: f64, x1: f64, x2: f64 },
    Start,
    Pause,
    NextTrial,
}

fn pair(p: Vec2) -> Value {
    json!([p.x1, p.x2])
}

pub fn error_json(code: &str, msg: &str) -> Value {
    json!({"type": "error", "code": code, "msg": msg})
}

pub fn state_json(f: &LiveFrame) -> Value {
    json!({
        "type": "state",
        "tick": f.tick,
        "t": f.t,
        "trial": f.trial,
        "target": pair(f.target),
        "neutral": pair(f.neutral),
        "actual": pair(f.actual),
        "torque": pair(f.torque),
        "dist": f.dist.m,
        "degenerate": f.dist.degenerate,
        "fatigue": f.fatigue,
        "stale": f.stale,
        "rest": f.rest,
        "phase": match f.phase {
            Phase::Paused => "paused",
            Phase::Running => "running",
            Phase::Finished => "finished",
        },
    })
}

/// Curves of the current trial. `tol` holds the inner curve followed by the outer one.
pub fn geometry_json(s: &LiveSession) -> Value {
    let traj = s.trajectory();
    let trial = s.current_trial();
    let n = GEOMETRY_SAMPLES;
    let phases = (0..n).map(|i| core::f64::consts::TAU * i as f64 / n as f64);
    let neutral: Vec<Value> = phases.clone().map(|p| pair(neutral_at_phase(traj, p))).collect();
    let target: Vec<Value> = phases.map(|p| pair(target_at_phase(traj, p))).collect();
    let tol = tolerance_curves(traj);
    let tol: Vec<Value> = tol.inner.sample(n).into_iter().chain(tol.outer.sample(n)).map(pair).collect();
    let (impedance, speed, stiffness) = match trial.kind {
        TrialKind::Tracking { impedance, speed, .. } => (
            impedance.name(),
            speed.name(),
            s.config().impedance_table().get(impedance).stiffness,
        ),
        TrialKind::Isometric => ("none", "none", 0.0),
    };
    json!({
        "type": "geometry",
        "trial": trial.index,
        "impedance": impedance,
        "speed": speed,
        "stiffness": stiffness,
        "orientation_deg": traj.orientation_deg,
        "period_s": traj.period_s,
        "center": pair(traj.center),
        "circle_radius": traj.circle_radius,
        "semi_major": traj.ellipse_semi_major,
        "semi_minor": traj.ellipse_semi_minor,
        "halfwidth": traj.tolerance_halfwidth,
        "view_half_extent": view_half_extent(traj),
        "samples": n,
        "neutral": neutral,
        "target": target,
        "tol": tol,
    })
}

/// Half side (rad) of a square view around `center` that holds every curve
/// with a 20% margin; clients map pixels to radians with it.
pub fn view_half_extent(traj: &TrajectoryConfig) -> f64 {
    let reach = traj.circle_radius.max(traj.ellipse_semi_major) + traj.tolerance_halfwidth;
    1.2 * reach
}

struct Shared {
    session: Mutex<LiveSession>,
    busy: AtomicBool,
}

pub struct LiveServer {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl LiveServer {
    /// Calibrates from a synthetic isometric trial and binds `addr`.
    pub async fn bind(cfg: SessionConfig, seed: u64, addr: SocketAddr) -> Result<Self, ServeError> {
        let calib = isometric_calibration(&cfg, seed)?;
        let session = LiveSession::new(cfg, seed, calib)?;
        let listener = TcpListener::bind(addr).await?;
        Ok(Self {
            listener,
            shared: Arc::new(Shared {
                session: Mutex::new(session),
                busy: AtomicBool::new(false),
            }),
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub async fn run(self) -> std::io::Result<()> {
        let app = Router::new().route("/session", get(upgrade)).with_state(self.shared);
        let listener = self.listener.tap_io(|tcp| {
            let _ = tcp.set_nodelay(true);
        });
        axum::serve(listener, app).await
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, shared))
}

fn text(v: &Value) -> Message {
    Message::Text(v.to_string().into())
}

async fn client(socket: WebSocket, shared: Arc<Shared>) {
    let (mut tx, mut rx) = socket.split();
    if shared.busy.swap(true, Ordering::AcqRel) {
        let _ = tx.send(text(&error_json("busy", "another client holds this session"))).await;
        let _ = tx.close().await;
        return;
    }

    let (in_tx, mut in_rx) = mpsc::unbounded_channel::<String>();
    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = rx.next().await {
            match msg {
                Message::Text(t) => {
                    if in_tx.send(t.to_string()).is_err() {
                        break;
                    }
                }
                Message::Close(_) => break,
                _ => {}
            }
        }
    });

    let hello = {
        let mut s = shared.session.lock().await;
        s.take_trial_changed();
        geometry_json(&s)
    };
    let mut connected = tx.send(text(&hello)).await.is_ok();
    let mut last_t = f64::NEG_INFINITY;
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(TICK_S));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);

    while connected {
        ticker.tick().await;
        let mut session = shared.session.lock().await;
        let mut reported: Option<Point2> = None;
        let mut outbound = Vec::new();
        loop {
            match in_rx.try_recv() {
                Ok(raw) => match serde_json::from_str::<ClientMsg>(&raw) {
                    Ok(ClientMsg::Pos { t, x1, x2 }) => {
                        if !(t.is_finite() && x1.is_finite() && x2.is_finite()) {
                            outbound.push(error_json("bad_position", "t, x1 and x2 must be finite"));
                        } else if t >= last_t {
                            last_t = t;
                            reported = Some(Point2::new(x1, x2));
                        }
                    }
                    Ok(ClientMsg::Start) => session.start(),
                    Ok(ClientMsg::Pause) => session.pause(),
                    Ok(ClientMsg::NextTrial) => session.next_trial(),
                    Err(e) => outbound.push(error_json("bad_message", &e.to_string())),
                },
                Err(mpsc::error::TryRecvError::Empty) => break,
                Err(mpsc::error::TryRecvError::Disconnected) => {
                    connected = false;
                    break;
                }
            }
        }
        if !connected {
            break;
        }
        let frame = session.tick(reported);
        if session.take_trial_changed() {
            outbound.push(geometry_json(&session));
        }
        drop(session);
        outbound.push(state_json(&frame));
        for v in &outbound {
            if tx.send(text(v)).await.is_err() {
                connected = false;
                break;
            }
        }
    }

    shared.session.lock().await.pause();
    reader.abort();
    shared.busy.store(false, Ordering::Release);
}
