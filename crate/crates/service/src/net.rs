//! Transports: length-prefixed TCP and an axum app with a websocket
//! endpoint. Both feed the same per-connection handler.

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::body::Body;
use axum::extract::ws::{self, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::serve::ListenerExt;
use axum::{Json, Router};
use futures::{Sink, SinkExt, Stream, StreamExt};
use poac_core::engine::Color;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc};
use tokio_util::codec::Framed;
use tower_http::services::ServeDir;

use crate::manager::{ManagerError, SessionHandle, SessionManager};
use crate::protocol::{
    decode_frame, encode_frame, replay_chunks, tcp_codec, Envelope, ErrorCode, Hello, Message, SessionCreated,
    SessionId, PROTOCOL_VERSION,
};
use crate::session::{Audience, Outbound};

/// Bytes of replay text per `replay_chunk` message.
pub const REPLAY_CHUNK_BYTES: usize = 64 * 1024;

struct Subscription {
    session: SessionHandle,
    sides: Vec<Color>,
}

/// Drives one client connection until either side closes it.
pub async fn serve_connection<S, K>(mgr: SessionManager, mut incoming: S, mut outgoing: K)
where
    S: Stream<Item = Result<Envelope, String>> + Unpin,
    K: Sink<Envelope> + Unpin,
{
    let (fwd_tx, mut fwd_rx) = mpsc::channel::<Envelope>(1024);
    let mut subs: Vec<Subscription> = Vec::new();
    loop {
        tokio::select! {
            msg = incoming.next() => {
                let Some(msg) = msg else { break };
                let replies = match msg {
                    Ok(env) => handle(&mgr, env, &mut subs, &fwd_tx).await,
                    Err(e) => vec![Envelope::error(ErrorCode::BadMessage, e)],
                };
                for r in replies {
                    if outgoing.send(r).await.is_err() {
                        release_all(&subs);
                        return;
                    }
                }
            }
            Some(env) = fwd_rx.recv() => {
                if outgoing.send(env).await.is_err() {
                    break;
                }
            }
        }
    }
    release_all(&subs);
}

fn release_all(subs: &[Subscription]) {
    for s in subs {
        for &side in &s.sides {
            s.session.release(side);
        }
    }
}

/// Forwards a session's broadcast to this connection, dropping messages
/// addressed to sides the connection does not control.
fn forward(mut rx: broadcast::Receiver<Outbound>, sides: Vec<Color>, tx: mpsc::Sender<Envelope>) {
    tokio::spawn(async move {
        loop {
            match rx.recv().await {
                Ok(o) => {
                    let wanted = match o.to {
                        Audience::All => true,
                        Audience::Side(c) => sides.contains(&c),
                    };
                    if wanted && tx.send(o.env).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    let e = Envelope::error(ErrorCode::Internal, format!("connection lagged, {n} messages dropped"));
                    if tx.send(e).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Closed) => break,
            }
        }
    });
}

fn err(e: ManagerError, session: Option<SessionId>) -> Envelope {
    let env = Envelope::error(e.code(), e.to_string());
    match session {
        Some(id) => env.session(id),
        None => env,
    }
}

async fn handle(
    mgr: &SessionManager,
    env: Envelope,
    subs: &mut Vec<Subscription>,
    fwd: &mpsc::Sender<Envelope>,
) -> Vec<Envelope> {
    match env.body {
        Message::Hello(h) => {
            if h.protocol_version != PROTOCOL_VERSION {
                return vec![Envelope::error(
                    ErrorCode::Version,
                    format!("server speaks protocol {PROTOCOL_VERSION}, client {}", h.protocol_version),
                )];
            }
            vec![Envelope::new(Message::Hello(Hello {
                protocol_version: PROTOCOL_VERSION,
                client: concat!("poac/", env!("CARGO_PKG_VERSION")).into(),
            }))]
        }
        Message::CreateSession(req) => {
            let (handle, desc, rx) = match mgr.create(&req) {
                Ok(v) => v,
                Err(e) => return vec![err(e, None)],
            };
            let wanted: Vec<Color> = req.claim.clone().unwrap_or_else(|| {
                [Color::Red, Color::Blue]
                    .into_iter()
                    .filter(|&c| handle.controller(c).is_remote())
                    .collect()
            });
            let mut sides = Vec::new();
            for side in wanted {
                if let Err(e) = handle.claim(side) {
                    return vec![err(e, Some(handle.id))];
                }
                sides.push(side);
            }
            let created = Envelope::new(Message::SessionCreated(SessionCreated {
                descriptor: desc,
                board: handle.board.clone(),
            }))
            .session(handle.id)
            .tick(0);
            // The creation reply must precede any forwarded traffic.
            if fwd.send(created).await.is_err() {
                return vec![];
            }
            forward(rx, sides.clone(), fwd.clone());
            for &side in &sides {
                if let Err(e) = handle.attach(side).await {
                    return vec![err(e, Some(handle.id))];
                }
            }
            subs.push(Subscription { session: handle, sides });
            vec![]
        }
        Message::Join(j) => {
            let Some(id) = env.session else {
                return vec![Envelope::error(ErrorCode::BadMessage, "join needs a session id")];
            };
            let handle = match mgr.get(id) {
                Ok(h) => h,
                Err(e) => return vec![err(e, Some(id))],
            };
            if let Err(e) = handle.claim(j.side) {
                return vec![err(e, Some(id))];
            }
            let desc = match handle.describe().await {
                Ok(d) => d,
                Err(e) => return vec![err(e, Some(id))],
            };
            let tick = desc.tick;
            let created = Envelope::new(Message::SessionCreated(SessionCreated {
                descriptor: desc,
                board: handle.board.clone(),
            }))
            .session(id)
            .tick(tick);
            let _ = fwd.send(created).await;
            forward(handle.subscribe(), vec![j.side], fwd.clone());
            if let Err(e) = handle.attach(j.side).await {
                return vec![err(e, Some(id))];
            }
            // Resuming mid-episode: the announcement for this tick may have
            // gone to an earlier connection, so send it again.
            if let Ok(Some(obs)) = handle.observation(j.side).await {
                let env = Envelope::new(Message::Observation(obs)).session(id);
                let t = handle.describe().await.map(|d| d.tick).unwrap_or(tick);
                let _ = fwd.send(env.tick(t)).await;
            }
            subs.push(Subscription {
                session: handle,
                sides: vec![j.side],
            });
            vec![]
        }
        Message::Act(act) => {
            let (Some(id), Some(tick)) = (env.session, env.tick) else {
                return vec![Envelope::error(ErrorCode::BadMessage, "act needs session and tick")];
            };
            let Some(sub) = subs.iter().find(|s| s.session.id == id) else {
                return vec![err(ManagerError::UnknownSession(id), Some(id))];
            };
            if !sub.sides.contains(&act.side) {
                return vec![Envelope::error(
                    ErrorCode::NotController,
                    format!("this connection does not control {}", act.side),
                )
                .session(id)
                .tick(tick)];
            }
            match sub.session.act(act.side, tick, act.actions).await {
                Ok(()) => vec![Envelope::new(Message::ActAck(crate::protocol::ActAck { side: act.side }))
                    .session(id)
                    .tick(tick)],
                Err(e) => vec![err(e, Some(id)).tick(tick)],
            }
        }
        Message::ReplayRequest => {
            let bytes = match env.session {
                Some(id) => match mgr.get(id) {
                    Ok(h) => match h.replay().await {
                        Ok(b) => b,
                        Err(e) => return vec![err(e, Some(id))],
                    },
                    Err(e) => return vec![err(e, Some(id))],
                },
                None => match mgr.served_replay() {
                    Some(b) => b.to_vec(),
                    None => return vec![Envelope::error(ErrorCode::UnknownSession, "no replay is being served")],
                },
            };
            replay_chunks(&bytes, REPLAY_CHUNK_BYTES)
                .into_iter()
                .map(|c| {
                    let e = Envelope::new(Message::ReplayChunk(c));
                    match env.session {
                        Some(id) => e.session(id),
                        None => e,
                    }
                })
                .collect()
        }
        other => vec![Envelope::error(
            ErrorCode::BadMessage,
            format!("{} is a server-to-client message", other.kind()),
        )],
    }
}

/// Accepts length-prefixed TCP clients forever.
pub async fn serve_tcp(listener: TcpListener, mgr: SessionManager) -> std::io::Result<()> {
    loop {
        let (sock, _) = listener.accept().await?;
        let mgr = mgr.clone();
        tokio::spawn(async move { serve_tcp_stream(sock, mgr).await });
    }
}

pub async fn serve_tcp_stream(sock: TcpStream, mgr: SessionManager) {
    let _ = sock.set_nodelay(true);
    let (sink, stream) = Framed::new(sock, tcp_codec()).split();
    let incoming = stream
        .take_while(|r| futures::future::ready(r.is_ok()))
        .map(|r| decode_frame(&r.expect("filtered")).map_err(|e| e.to_string()));
    let outgoing = sink.with(|env: Envelope| futures::future::ok::<_, std::io::Error>(encode_frame(&env)));
    serve_connection(mgr, Box::pin(incoming), Box::pin(outgoing)).await;
}

#[derive(Clone)]
struct AppState {
    mgr: SessionManager,
}

/// HTTP + websocket app. `/ws` speaks the protocol; `/api/...` is read-only
/// JSON; anything else comes from `assets` when given.
pub fn app(mgr: SessionManager, assets: Option<PathBuf>) -> Router {
    let router = Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/health", get(|| async { "ok" }))
        .route("/api/sessions", get(list_sessions))
        .route("/api/sessions/{id}/replay", get(session_replay))
        .route("/api/replay", get(served_replay))
        .with_state(AppState { mgr });
    match assets {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

async fn ws_upgrade(State(st): State<AppState>, up: WebSocketUpgrade) -> Response {
    up.on_upgrade(move |socket| serve_ws(socket, st.mgr))
}

async fn serve_ws(socket: WebSocket, mgr: SessionManager) {
    let (sink, stream) = socket.split();
    let incoming = stream
        .take_while(|r| futures::future::ready(matches!(r, Ok(m) if !matches!(m, ws::Message::Close(_)))))
        .filter_map(|r| {
            futures::future::ready(match r.expect("filtered") {
                ws::Message::Text(t) => Some(Envelope::from_json(t.as_str()).map_err(|e| e.to_string())),
                ws::Message::Binary(b) => Some(decode_frame(&b).map_err(|e| e.to_string())),
                _ => None,
            })
        });
    let outgoing = sink.with(|env: Envelope| futures::future::ok::<_, axum::Error>(ws::Message::Text(env.to_json().into())));
    serve_connection(mgr, Box::pin(incoming), Box::pin(outgoing)).await;
}

async fn list_sessions(State(st): State<AppState>) -> Response {
    let mut out = Vec::new();
    for id in st.mgr.ids() {
        if let Ok(h) = st.mgr.get(id) {
            if let Ok(d) = h.describe().await {
                out.push(d);
            }
        }
    }
    Json(out).into_response()
}

fn jsonl(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from(bytes)).into_response()
}

async fn session_replay(State(st): State<AppState>, Path(id): Path<SessionId>) -> Response {
    match st.mgr.get(id) {
        Ok(h) => match h.replay().await {
            Ok(b) => jsonl(b),
            Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        },
        Err(e) => (StatusCode::NOT_FOUND, e.to_string()).into_response(),
    }
}

async fn served_replay(State(st): State<AppState>) -> Response {
    match st.mgr.served_replay() {
        Some(b) => jsonl(b.to_vec()),
        None => (StatusCode::NOT_FOUND, "no replay is being served").into_response(),
    }
}

/// Runs the HTTP/websocket app and, if given, the TCP listener.
pub async fn serve(
    mgr: SessionManager,
    http: TcpListener,
    tcp: Option<TcpListener>,
    assets: Option<PathBuf>,
) -> std::io::Result<()> {
    if let Some(t) = tcp {
        let m = mgr.clone();
        tokio::spawn(async move {
            if let Err(e) = serve_tcp(t, m).await {
                eprintln!("tcp listener stopped: {e}");
            }
        });
    }
    serve_http(http, mgr, assets).await
}

/// Serves [`app`] on `listener`. Nagle is disabled: the protocol is many
/// small request/response messages.
pub async fn serve_http(listener: TcpListener, mgr: SessionManager, assets: Option<PathBuf>) -> std::io::Result<()> {
    let listener = listener.tap_io(|tcp| {
        let _ = tcp.set_nodelay(true);
    });
    axum::serve(listener, app(mgr, assets)).await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}
