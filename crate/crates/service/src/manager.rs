//! Many concurrent sessions. Each session lives in its own worker task and
//! is reached only through its command channel; outbound messages fan out
//! over a broadcast channel that connections subscribe to.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use poac_core::engine::{ActionMap, Color};
use poac_core::scenarios::{load_scenario, ScenarioError};
use thiserror::Error;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::Instant;

use crate::protocol::{Board, CreateSession, ErrorCode, SessionId, SideObservation};
use crate::session::{Controller, Deadline, Outbound, Session, SessionDescriptor, SessionError, UnknownController};

/// Outbound messages buffered per session before slow subscribers lag.
const BROADCAST_CAPACITY: usize = 8192;

#[derive(Debug, Clone)]
pub struct ManagerConfig {
    pub max_sessions: usize,
    pub deadline: Deadline,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        Self {
            max_sessions: 64,
            deadline: Deadline::Gated,
        }
    }
}

#[derive(Debug, Error)]
pub enum ManagerError {
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Controller(#[from] UnknownController),
    #[error("too many active sessions (limit {0})")]
    Capacity(usize),
    #[error("no session {0}")]
    UnknownSession(SessionId),
    #[error("{0} is already claimed")]
    Claimed(Color),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("session worker stopped")]
    WorkerGone,
}

impl ManagerError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ManagerError::Scenario(_) | ManagerError::Controller(_) => ErrorCode::InvalidConfig,
            ManagerError::Capacity(_) => ErrorCode::Capacity,
            ManagerError::UnknownSession(_) => ErrorCode::UnknownSession,
            ManagerError::Claimed(_) => ErrorCode::NotController,
            ManagerError::Session(e) => e.code(),
            ManagerError::WorkerGone => ErrorCode::Internal,
        }
    }
}

enum Command {
    Attach {
        side: Color,
        reply: oneshot::Sender<Result<(), SessionError>>,
    },
    Act {
        side: Color,
        tick: u32,
        actions: ActionMap,
        reply: oneshot::Sender<Result<(), SessionError>>,
    },
    Observation {
        side: Color,
        reply: oneshot::Sender<Option<SideObservation>>,
    },
    Describe {
        reply: oneshot::Sender<SessionDescriptor>,
    },
    Replay {
        reply: oneshot::Sender<Vec<u8>>,
    },
}

#[derive(Clone)]
pub struct SessionHandle {
    pub id: SessionId,
    pub board: Board,
    controllers: [Controller; 2],
    claimed: Arc<Mutex<[bool; 2]>>,
    cmd: mpsc::Sender<Command>,
    events: broadcast::Sender<Outbound>,
}

impl SessionHandle {
    pub fn subscribe(&self) -> broadcast::Receiver<Outbound> {
        self.events.subscribe()
    }

    pub fn controller(&self, side: Color) -> Controller {
        self.controllers[side.index()]
    }

    /// Reserves a remote side for one connection.
    pub fn claim(&self, side: Color) -> Result<(), ManagerError> {
        if !self.controller(side).is_remote() {
            return Err(SessionError::NotController {
                side,
                controller: self.controller(side),
            }
            .into());
        }
        let mut c = self.claimed.lock().expect("claim lock");
        if c[side.index()] {
            return Err(ManagerError::Claimed(side));
        }
        c[side.index()] = true;
        Ok(())
    }

    pub fn release(&self, side: Color) {
        self.claimed.lock().expect("claim lock")[side.index()] = false;
    }

    async fn call<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, ManagerError> {
        let (tx, rx) = oneshot::channel();
        self.cmd.send(make(tx)).await.map_err(|_| ManagerError::WorkerGone)?;
        rx.await.map_err(|_| ManagerError::WorkerGone)
    }

    pub async fn attach(&self, side: Color) -> Result<(), ManagerError> {
        Ok(self.call(|reply| Command::Attach { side, reply }).await??)
    }

    pub async fn act(&self, side: Color, tick: u32, actions: ActionMap) -> Result<(), ManagerError> {
        Ok(self
            .call(|reply| Command::Act {
                side,
                tick,
                actions,
                reply,
            })
            .await??)
    }

    /// Current observation for `side` if it owes an act.
    pub async fn observation(&self, side: Color) -> Result<Option<SideObservation>, ManagerError> {
        self.call(|reply| Command::Observation { side, reply }).await
    }

    pub async fn describe(&self) -> Result<SessionDescriptor, ManagerError> {
        self.call(|reply| Command::Describe { reply }).await
    }

    pub async fn replay(&self) -> Result<Vec<u8>, ManagerError> {
        self.call(|reply| Command::Replay { reply }).await
    }
}

struct Inner {
    config: ManagerConfig,
    next_id: AtomicU64,
    active: Arc<AtomicUsize>,
    sessions: Mutex<HashMap<SessionId, SessionHandle>>,
    served_replay: Option<Vec<u8>>,
}

#[derive(Clone)]
pub struct SessionManager {
    inner: Arc<Inner>,
}

impl SessionManager {
    pub fn new(config: ManagerConfig) -> Self {
        Self::build(config, None)
    }

    /// A manager that also answers session-less replay requests with `bytes`.
    pub fn with_served_replay(config: ManagerConfig, bytes: Vec<u8>) -> Self {
        Self::build(config, Some(bytes))
    }

    fn build(config: ManagerConfig, served_replay: Option<Vec<u8>>) -> Self {
        Self {
            inner: Arc::new(Inner {
                config,
                next_id: AtomicU64::new(1),
                active: Arc::new(AtomicUsize::new(0)),
                sessions: Mutex::new(HashMap::new()),
                served_replay,
            }),
        }
    }

    pub fn served_replay(&self) -> Option<&[u8]> {
        self.inner.served_replay.as_deref()
    }

    pub fn active_sessions(&self) -> usize {
        self.inner.active.load(Ordering::SeqCst)
    }

    pub fn get(&self, id: SessionId) -> Result<SessionHandle, ManagerError> {
        self.inner
            .sessions
            .lock()
            .expect("session table")
            .get(&id)
            .cloned()
            .ok_or(ManagerError::UnknownSession(id))
    }

    pub fn ids(&self) -> Vec<SessionId> {
        let mut v: Vec<SessionId> = self.inner.sessions.lock().expect("session table").keys().copied().collect();
        v.sort_unstable();
        v
    }

    /// Builds a session and starts its worker. The returned receiver is
    /// subscribed before the first tick so no message is missed.
    pub fn create(
        &self,
        req: &CreateSession,
    ) -> Result<(SessionHandle, SessionDescriptor, broadcast::Receiver<Outbound>), ManagerError> {
        let red: Controller = req.red.parse()?;
        let blue: Controller = req.blue.parse()?;
        let cfg = Arc::new(load_scenario(&req.scenario)?);
        let limit = self.inner.config.max_sessions;
        let reserved = self
            .inner
            .active
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| (n < limit).then_some(n + 1));
        if reserved.is_err() {
            return Err(ManagerError::Capacity(limit));
        }
        let id = self.inner.next_id.fetch_add(1, Ordering::SeqCst);
        let session = match Session::new(id, &req.scenario, cfg, req.seed, red, blue, self.inner.config.deadline) {
            Ok(s) => s,
            Err(e) => {
                self.inner.active.fetch_sub(1, Ordering::SeqCst);
                return Err(e.into());
            }
        };
        let desc = session.descriptor().clone();
        let (cmd_tx, cmd_rx) = mpsc::channel(64);
        let (ev_tx, ev_rx) = broadcast::channel(BROADCAST_CAPACITY);
        let handle = SessionHandle {
            id,
            board: session.board(),
            controllers: [red, blue],
            claimed: Arc::new(Mutex::new([false; 2])),
            cmd: cmd_tx,
            events: ev_tx.clone(),
        };
        self.inner
            .sessions
            .lock()
            .expect("session table")
            .insert(id, handle.clone());
        tokio::spawn(worker(session, cmd_rx, ev_tx, self.inner.active.clone()));
        Ok((handle, desc, ev_rx))
    }
}

fn publish(tx: &broadcast::Sender<Outbound>, out: Vec<Outbound>) {
    for o in out {
        // No subscribers is fine: the replay still records everything.
        let _ = tx.send(o);
    }
}

async fn worker(
    mut session: Session,
    mut rx: mpsc::Receiver<Command>,
    tx: broadcast::Sender<Outbound>,
    active: Arc<AtomicUsize>,
) {
    let realtime = match session.descriptor().deadline {
        Deadline::Realtime { ms } => Some(Duration::from_millis(ms)),
        Deadline::Gated => None,
    };
    let mut counted = true;
    let mut settle = |s: &Session| {
        if counted && s.is_finished() {
            counted = false;
            active.fetch_sub(1, Ordering::SeqCst);
        }
    };
    publish(&tx, session.advance());
    settle(&session);
    // Deadline for the current decision point, keyed by tick.
    let mut timer: Option<(u32, Instant)> = None;
    loop {
        if let Some(limit) = realtime {
            let waiting = !session.is_finished()
                && session.descriptor().state == crate::session::SessionState::Running
                && !session.awaiting().is_empty();
            let tick = session.engine().tick();
            timer = match timer {
                Some((t, at)) if waiting && t == tick => Some((t, at)),
                _ if waiting => Some((tick, Instant::now() + limit)),
                _ => None,
            };
        }
        let cmd = match timer {
            Some((_, at)) => tokio::select! {
                c = rx.recv() => c,
                _ = tokio::time::sleep_until(at) => {
                    publish(&tx, session.expire());
                    settle(&session);
                    timer = None;
                    continue;
                }
            },
            None => rx.recv().await,
        };
        let Some(cmd) = cmd else { break };
        match cmd {
            Command::Attach { side, reply } => match session.attach(side) {
                Ok(out) => {
                    let _ = reply.send(Ok(()));
                    publish(&tx, out);
                }
                Err(e) => {
                    let _ = reply.send(Err(e));
                }
            },
            Command::Act {
                side,
                tick,
                actions,
                reply,
            } => match session.submit(side, tick, actions) {
                Ok(out) => {
                    let _ = reply.send(Ok(()));
                    publish(&tx, out);
                }
                Err(e) => {
                    let _ = reply.send(Err(e));
                }
            },
            Command::Observation { side, reply } => {
                let obs = session.needs(side).then(|| session.observation(side));
                let _ = reply.send(obs);
            }
            Command::Describe { reply } => {
                let _ = reply.send(session.descriptor().clone());
            }
            Command::Replay { reply } => {
                let _ = reply.send(session.replay_bytes());
            }
        }
        settle(&session);
    }
    settle(&session);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Message;
    use crate::session::SessionState;

    fn request(red: &str, blue: &str) -> CreateSession {
        CreateSession {
            scenario: "0".into(),
            seed: 1,
            red: red.into(),
            blue: blue.into(),
            claim: None,
        }
    }

    #[tokio::test]
    async fn bot_session_finishes_unattended() {
        let mgr = SessionManager::new(ManagerConfig::default());
        let (h, _, mut rx) = mgr.create(&request("bot:KAI0", "bot:KAI1")).unwrap();
        loop {
            let o = rx.recv().await.unwrap();
            if let Message::EpisodeEnd(_) = o.env.body {
                break;
            }
        }
        assert_eq!(h.describe().await.unwrap().state, SessionState::Finished);
        assert_eq!(mgr.active_sessions(), 0);
    }

    #[tokio::test]
    async fn capacity_is_enforced() {
        let mgr = SessionManager::new(ManagerConfig {
            max_sessions: 1,
            ..Default::default()
        });
        let _first = mgr.create(&request("human", "bot:KAI0")).unwrap();
        assert!(matches!(
            mgr.create(&request("human", "bot:KAI0")),
            Err(ManagerError::Capacity(1))
        ));
    }

    #[tokio::test]
    async fn bad_controller_and_scenario_are_config_errors() {
        let mgr = SessionManager::new(ManagerConfig::default());
        let e = mgr.create(&request("bot:KAI9", "human")).err().unwrap();
        assert_eq!(e.code(), ErrorCode::InvalidConfig);
        let mut r = request("human", "human");
        r.scenario = "17".into();
        assert_eq!(mgr.create(&r).err().unwrap().code(), ErrorCode::InvalidConfig);
    }

    #[tokio::test]
    async fn sides_are_claimed_once() {
        let mgr = SessionManager::new(ManagerConfig::default());
        let (h, _, _rx) = mgr.create(&request("human", "bot:KAI0")).unwrap();
        h.claim(Color::Red).unwrap();
        assert!(matches!(h.claim(Color::Red), Err(ManagerError::Claimed(Color::Red))));
        assert!(h.claim(Color::Blue).is_err());
        h.release(Color::Red);
        h.claim(Color::Red).unwrap();
    }

    #[tokio::test(start_paused = true)]
    async fn realtime_deadline_holds_for_silent_side() {
        let mgr = SessionManager::new(ManagerConfig {
            deadline: Deadline::Realtime { ms: 50 },
            ..Default::default()
        });
        let (h, _, mut rx) = mgr.create(&request("external", "bot:KAI0")).unwrap();
        h.attach(Color::Red).await.unwrap();
        // Never act: the worker must keep stepping on its own.
        let mut steps = 0;
        while steps < 3 {
            if let Message::StepResult(_) = rx.recv().await.unwrap().env.body {
                steps += 1;
            }
        }
        assert!(h.describe().await.unwrap().tick >= 3);
    }
}
