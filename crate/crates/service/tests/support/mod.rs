#![allow(dead_code)]

use std::net::SocketAddr;
use std::pin::Pin;
use std::time::Duration;

use futures::{future, Sink, SinkExt, Stream, StreamExt};
use poac::manager::SessionManager;
use poac::protocol::{
    decode_frame, encode_frame, tcp_codec, Act, CreateSession, EpisodeEnd, Envelope, ErrorCode, Message,
    SessionCreated,
};
use poac_core::engine::{Action, ActionMap, Color};
use poac_core::rng::XorShift64Star;
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message as WsMessage;
use tokio_util::codec::Framed;

pub const WAIT: Duration = Duration::from_secs(30);

type Incoming = Pin<Box<dyn Stream<Item = Envelope> + Send>>;
type Outgoing = Pin<Box<dyn Sink<Envelope, Error = String> + Send>>;

/// A protocol client over either transport.
pub struct Client {
    rx: Incoming,
    tx: Outgoing,
}

pub async fn start_http(mgr: SessionManager) -> SocketAddr {
    let l = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = l.local_addr().unwrap();
    tokio::spawn(poac::net::serve_http(l, mgr, None));
    addr
}

pub async fn start_tcp(mgr: SessionManager) -> SocketAddr {
    let l = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = l.local_addr().unwrap();
    tokio::spawn(poac::net::serve_tcp(l, mgr));
    addr
}

impl Client {
    pub async fn ws(addr: SocketAddr) -> Client {
        let (ws, _) = tokio_tungstenite::connect_async_with_config(format!("ws://{addr}/ws"), None, true)
            .await
            .unwrap();
        let (sink, stream) = ws.split();
        let tx = sink
            .sink_map_err(|e| e.to_string())
            .with(|env: Envelope| future::ready(Ok::<_, String>(WsMessage::Text(env.to_json().into()))));
        let rx = stream.filter_map(|m| {
            future::ready(match m {
                Ok(WsMessage::Text(t)) => Some(Envelope::from_json(&t).expect("server sends valid JSON")),
                _ => None,
            })
        });
        Client {
            rx: Box::pin(rx),
            tx: Box::pin(tx),
        }
    }

    pub async fn tcp(addr: SocketAddr) -> Client {
        let sock = TcpStream::connect(addr).await.unwrap();
        sock.set_nodelay(true).unwrap();
        let (sink, stream) = Framed::new(sock, tcp_codec()).split();
        let tx = sink
            .sink_map_err(|e: std::io::Error| e.to_string())
            .with(|env: Envelope| future::ready(Ok::<_, String>(encode_frame(&env))));
        let rx = stream.map(|f| decode_frame(&f.expect("frame")).expect("server sends valid JSON"));
        Client {
            rx: Box::pin(rx),
            tx: Box::pin(tx),
        }
    }

    pub async fn send(&mut self, env: Envelope) {
        self.tx.send(env).await.unwrap();
    }

    pub async fn recv(&mut self) -> Envelope {
        tokio::time::timeout(WAIT, self.rx.next())
            .await
            .expect("timed out waiting for the server")
            .expect("connection closed")
    }

    /// Next message, or `None` if nothing arrives within `d`.
    pub async fn recv_within(&mut self, d: Duration) -> Option<Envelope> {
        tokio::time::timeout(d, self.rx.next()).await.ok().flatten()
    }

    /// Skips messages until one of kind `kind` arrives.
    pub async fn recv_kind(&mut self, kind: &str) -> Envelope {
        loop {
            let e = self.recv().await;
            if e.kind() == kind {
                return e;
            }
            if let Message::Error(p) = &e.body {
                panic!("unexpected error while waiting for {kind}: {p:?}");
            }
        }
    }

    pub async fn create(&mut self, req: CreateSession) -> (u64, SessionCreated) {
        self.send(Envelope::new(Message::CreateSession(req))).await;
        let e = self.recv_kind("session_created").await;
        match e.body {
            Message::SessionCreated(c) => (e.session.unwrap(), c),
            _ => unreachable!(),
        }
    }

    pub async fn expect_error(&mut self, code: ErrorCode) -> Envelope {
        loop {
            let e = self.recv().await;
            if let Message::Error(p) = &e.body {
                assert_eq!(p.code, code, "{}", p.message);
                return e;
            }
        }
    }

    /// Plays `side` with uniformly random legal actions until the episode
    /// ends. Returns the end message and the number of acts sent.
    pub async fn play_random(&mut self, session: u64, side: Color, seed: u64) -> (EpisodeEnd, u32) {
        let mut rng = XorShift64Star::new(seed);
        let mut last: Option<u32> = None;
        let mut acts = 0;
        loop {
            let e = self.recv().await;
            match e.body {
                Message::Observation(obs) if obs.side == side => {
                    let tick = e.tick.unwrap();
                    if last.is_some_and(|t| t >= tick) || obs.agents.is_empty() {
                        continue;
                    }
                    let actions: ActionMap = obs
                        .agents
                        .iter()
                        .map(|a| {
                            let legal: Vec<usize> = (0..a.mask.len()).filter(|&i| a.mask[i]).collect();
                            let i = legal[rng.below(legal.len())];
                            (a.uid, Action::from_index(i, side).unwrap())
                        })
                        .collect();
                    self.send(act(session, tick, side, actions)).await;
                    last = Some(tick);
                    acts += 1;
                }
                Message::EpisodeEnd(end) => return (end, acts),
                Message::Error(p) => panic!("server error: {p:?}"),
                _ => {}
            }
        }
    }

    /// Collects `replay_chunk` messages until the last one.
    pub async fn collect_replay(&mut self) -> String {
        let mut out = String::new();
        let mut seq = 0;
        loop {
            let e = self.recv_kind("replay_chunk").await;
            let Message::ReplayChunk(c) = e.body else { unreachable!() };
            assert_eq!(c.seq, seq, "chunks arrive in order");
            seq += 1;
            out.push_str(&c.data);
            if c.last {
                return out;
            }
        }
    }
}

pub fn act(session: u64, tick: u32, side: Color, actions: ActionMap) -> Envelope {
    Envelope::new(Message::Act(Act {
        side,
        actions: actions.into_iter().collect(),
    }))
    .session(session)
    .tick(tick)
}

pub fn request(scenario: &str, seed: u64, red: &str, blue: &str) -> CreateSession {
    CreateSession {
        scenario: scenario.into(),
        seed,
        red: red.into(),
        blue: blue.into(),
        claim: None,
    }
}

/// Minimal HTTP/1.0 GET; returns (status, body).
pub async fn http_get(addr: SocketAddr, path: &str) -> (u16, String) {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.0\r\nHost: {addr}\r\n\r\n").as_bytes())
        .await
        .unwrap();
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).await.unwrap();
    let text = String::from_utf8(buf).unwrap();
    let (head, body) = text.split_once("\r\n\r\n").unwrap();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    (status, body.to_string())
}
