//! One match: engine, bot controllers, pending submissions and the replay
//! being recorded. Purely synchronous; the manager drives it from a worker.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use poac_core::bots::{BotKind, BotPolicy, Policy};
use poac_core::engine::{color_of, Action, ActionMap, Color, EngineError, EngineState, Uid, ROSTER_SIZE};
use poac_core::episode::{make_bot, team_inputs};
use poac_core::observation::build_observation;
use poac_core::replay::{ReplayFooter, ReplayHeader, ReplayWriter, TickRecord};
use poac_core::scenarios::{ScenarioConfig, Teams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{
    AgentObservation, Board, EpisodeEnd, Envelope, ErrorCode, Message, OperatorView, RenderState, SessionId,
    SideObservation, StepSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Controller {
    Bot(BotKind),
    /// A program speaking the wire protocol (self-play / training).
    External,
    /// A person through a protocol client; same plumbing as External.
    Human,
}

impl Controller {
    pub fn is_remote(self) -> bool {
        !matches!(self, Controller::Bot(_))
    }
}

#[derive(Debug, Error)]
#[error("unknown controller {0:?} (expected bot:KAI0|bot:KAI1|bot:KAI2|random|external|human)")]
pub struct UnknownController(pub String);

impl FromStr for Controller {
    type Err = UnknownController;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "external" => return Ok(Controller::External),
            "human" => return Ok(Controller::Human),
            _ => {}
        }
        let name = lower.strip_prefix("bot:").unwrap_or(&lower);
        name.parse::<BotKind>()
            .map(Controller::Bot)
            .map_err(|_| UnknownController(s.to_string()))
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Controller::Bot(BotKind::Random) => f.write_str("random"),
            Controller::Bot(k) => write!(f, "bot:{k}"),
            Controller::External => f.write_str("external"),
            Controller::Human => f.write_str("human"),
        }
    }
}

impl Serialize for Controller {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Controller {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    /// A remote side has not been claimed by a connection yet.
    Waiting,
    Running,
    Finished,
}

/// When a remote side is slow to act.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Deadline {
    /// The clock waits for every required act.
    #[default]
    Gated,
    /// After `ms` of wall time the missing side holds (Stop, or Empty
    /// where Stop is unavailable).
    Realtime { ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub id: SessionId,
    pub scenario: String,
    pub seed: u64,
    pub red: Controller,
    pub blue: Controller,
    pub state: SessionState,
    pub deadline: Deadline,
    pub tick: u32,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{side} is controlled by {controller}, not by this connection")]
    NotController { side: Color, controller: Controller },
    #[error("act answers tick {got} but the session is at tick {current}")]
    StaleTick { got: u32, current: u32 },
    #[error("{0} has nothing to decide at this tick or already acted")]
    NotAwaiting(Color),
    #[error("operator {uid} does not belong to {side}")]
    WrongSide { uid: Uid, side: Color },
    #[error("operator {uid} needs an action")]
    MissingAction { uid: Uid },
    #[error("operator {uid} cannot take {action} now")]
    IllegalAction { uid: Uid, action: Action },
    #[error("session has finished")]
    Finished,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl SessionError {
    pub fn code(&self) -> ErrorCode {
        match self {
            SessionError::NotController { .. } => ErrorCode::NotController,
            SessionError::StaleTick { .. } | SessionError::NotAwaiting(_) => ErrorCode::StaleTick,
            SessionError::WrongSide { .. } | SessionError::MissingAction { .. } | SessionError::IllegalAction { .. } => {
                ErrorCode::IllegalAction
            }
            SessionError::Finished => ErrorCode::Finished,
            SessionError::Engine(_) => ErrorCode::Internal,
        }
    }
}

/// Who should receive an outbound message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Audience {
    All,
    Side(Color),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: Audience,
    pub env: Envelope,
}

pub struct Session {
    desc: SessionDescriptor,
    cfg: Arc<ScenarioConfig>,
    engine: EngineState,
    bots: [Option<BotPolicy>; 2],
    attached: [bool; 2],
    pending: [Option<ActionMap>; 2],
    announced: [Option<u32>; 2],
    writer: Option<ReplayWriter<Vec<u8>>>,
    finished_replay: Option<(Vec<u8>, ReplayFooter)>,
}

impl Session {
    pub fn new(
        id: SessionId,
        scenario: &str,
        cfg: Arc<ScenarioConfig>,
        seed: u64,
        red: Controller,
        blue: Controller,
        deadline: Deadline,
    ) -> Result<Self, SessionError> {
        let engine = EngineState::reset(cfg.clone(), seed)?;
        let controllers = [red, blue];
        let bots = [Color::Red, Color::Blue].map(|c| match controllers[c.index()] {
            Controller::Bot(k) => Some(make_bot(k, &cfg, c, seed)),
            _ => None,
        });
        let header = ReplayHeader::new(
            &cfg,
            seed,
            Teams {
                red: red.to_string(),
                blue: blue.to_string(),
            },
        );
        let writer = ReplayWriter::new(Vec::new(), &header).expect("in-memory write");
        let mut s = Self {
            desc: SessionDescriptor {
                id,
                scenario: scenario.to_string(),
                seed,
                red,
                blue,
                state: SessionState::Waiting,
                deadline,
                tick: 0,
            },
            cfg,
            engine,
            bots,
            attached: controllers.map(|c| !c.is_remote()),
            pending: [None, None],
            announced: [None, None],
            writer: Some(writer),
            finished_replay: None,
        };
        s.refresh_state();
        Ok(s)
    }

    pub fn id(&self) -> SessionId {
        self.desc.id
    }

    pub fn descriptor(&self) -> &SessionDescriptor {
        &self.desc
    }

    pub fn engine(&self) -> &EngineState {
        &self.engine
    }

    pub fn controller(&self, side: Color) -> Controller {
        match side {
            Color::Red => self.desc.red,
            Color::Blue => self.desc.blue,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.desc.state == SessionState::Finished
    }

    pub fn board(&self) -> Board {
        let map = self.cfg.map();
        Board {
            rows: map.rows(),
            cols: map.cols(),
            special: map.special_cells().collect(),
            max_ticks: self.cfg.max_ticks(),
        }
    }

    fn refresh_state(&mut self) {
        self.desc.tick = self.engine.tick();
        self.desc.state = if self.engine.terminated() {
            SessionState::Finished
        } else if self.attached.iter().all(|&a| a) {
            SessionState::Running
        } else {
            SessionState::Waiting
        };
        if self.engine.terminated() && self.finished_replay.is_none() {
            if let Some(w) = self.writer.take() {
                let (bytes, footer) = w.finish(&self.engine).expect("in-memory write");
                self.finished_replay = Some((bytes, footer));
            }
        }
    }

    /// Marks a remote side as claimed. Returns the outbound messages that
    /// become due (possibly the whole episode if the other side is a bot).
    pub fn attach(&mut self, side: Color) -> Result<Vec<Outbound>, SessionError> {
        if !self.controller(side).is_remote() {
            return Err(SessionError::NotController {
                side,
                controller: self.controller(side),
            });
        }
        self.attached[side.index()] = true;
        self.refresh_state();
        Ok(self.advance())
    }

    /// Whether `side` owes an act for the current tick.
    pub fn needs(&self, side: Color) -> bool {
        !self.engine.terminated()
            && self.controller(side).is_remote()
            && self.pending[side.index()].is_none()
            && self.engine.deciding_agents().iter().any(|&u| color_of(u) == side)
    }

    pub fn awaiting(&self) -> Vec<Color> {
        [Color::Red, Color::Blue].into_iter().filter(|&c| self.needs(c)).collect()
    }

    /// The current decision point as seen by `side` (fogged).
    pub fn observation(&self, side: Color) -> SideObservation {
        let st = &self.engine;
        let agents = st
            .deciding_agents()
            .into_iter()
            .filter(|&u| color_of(u) == side)
            .map(|uid| AgentObservation {
                uid,
                obs: build_observation(st, uid).expect("roster uid").0,
                mask: st.available_actions(uid).expect("roster uid").0,
            })
            .collect();
        let allies: Vec<Uid> = (0..ROSTER_SIZE)
            .filter(|&u| color_of(u) == side && st.operators()[u].alive)
            .collect();
        let operators = st
            .operators()
            .iter()
            .filter(|o| o.color == side || allies.iter().any(|&a| st.visibility(a, o.uid).unwrap_or(false)))
            .map(|o| OperatorView {
                uid: o.uid,
                color: o.color,
                op_type: o.op_type,
                pos: o.pos,
                blood: o.blood,
                alive: o.alive,
            })
            .collect();
        SideObservation {
            side,
            agents,
            render: RenderState { operators },
        }
    }

    fn envelope(&self, body: Message) -> Envelope {
        Envelope::new(body).session(self.desc.id).tick(self.engine.tick())
    }

    /// Records an act from a remote side, then advances as far as possible.
    pub fn submit(&mut self, side: Color, tick: u32, actions: ActionMap) -> Result<Vec<Outbound>, SessionError> {
        if self.engine.terminated() {
            return Err(SessionError::Finished);
        }
        let controller = self.controller(side);
        if !controller.is_remote() {
            return Err(SessionError::NotController { side, controller });
        }
        if tick != self.engine.tick() {
            return Err(SessionError::StaleTick {
                got: tick,
                current: self.engine.tick(),
            });
        }
        if !self.needs(side) {
            return Err(SessionError::NotAwaiting(side));
        }
        let deciding: Vec<Uid> = self
            .engine
            .deciding_agents()
            .into_iter()
            .filter(|&u| color_of(u) == side)
            .collect();
        let mut clean = ActionMap::new();
        for (&uid, &action) in &actions {
            if uid >= ROSTER_SIZE || color_of(uid) != side {
                return Err(SessionError::WrongSide { uid, side });
            }
            let mask = self.engine.available_actions(uid)?;
            if !mask.allows(action, uid) {
                return Err(SessionError::IllegalAction { uid, action });
            }
            clean.insert(uid, action);
        }
        if let Some(&uid) = deciding.iter().find(|u| !clean.contains_key(u)) {
            return Err(SessionError::MissingAction { uid });
        }
        self.pending[side.index()] = Some(clean);
        self.attached[side.index()] = true;
        self.refresh_state();
        Ok(self.advance())
    }

    /// Realtime deadline expired: every side still owing an act holds.
    pub fn expire(&mut self) -> Vec<Outbound> {
        for side in self.awaiting() {
            let hold: ActionMap = team_inputs(&self.engine, side)
                .into_iter()
                .map(|i| {
                    let a = if i.mask.allows(Action::Stop, i.uid) {
                        Action::Stop
                    } else {
                        Action::Empty
                    };
                    (i.uid, a)
                })
                .collect();
            self.pending[side.index()] = Some(hold);
        }
        self.advance()
    }

    /// Steps while nothing is owed, then announces the new decision point.
    pub fn advance(&mut self) -> Vec<Outbound> {
        let mut out = Vec::new();
        while self.desc.state == SessionState::Running && self.awaiting().is_empty() {
            let mut actions = ActionMap::new();
            for side in [Color::Red, Color::Blue] {
                if let Some(p) = self.pending[side.index()].take() {
                    actions.extend(p);
                } else if let Some(bot) = self.bots[side.index()].as_mut() {
                    let inputs = team_inputs(&self.engine, side);
                    if !inputs.is_empty() {
                        actions.extend(bot.decide(&inputs));
                    }
                }
            }
            for uid in 0..ROSTER_SIZE {
                actions.entry(uid).or_insert(Action::Empty);
            }
            let tick = self.engine.tick();
            let result = match self.engine.step(&actions) {
                Ok(r) => r,
                Err(e) => {
                    out.push(Outbound {
                        to: Audience::All,
                        env: self.envelope(Message::Error(crate::protocol::ErrorPayload {
                            code: ErrorCode::Internal,
                            message: e.to_string(),
                        })),
                    });
                    break;
                }
            };
            if let Some(w) = self.writer.as_mut() {
                w.push(&TickRecord::capture(&self.engine, &actions, &result))
                    .expect("in-memory write");
            }
            out.push(Outbound {
                to: Audience::All,
                env: Envelope::new(Message::StepResult(StepSummary {
                    actions,
                    events: result.events,
                    reward_red: result.reward_red,
                    reward_blue: result.reward_blue,
                }))
                .session(self.desc.id)
                .tick(tick),
            });
            self.refresh_state();
        }
        if self.engine.terminated() {
            if !out.is_empty() {
                out.push(Outbound {
                    to: Audience::All,
                    env: self.envelope(Message::EpisodeEnd(self.episode_end())),
                });
            }
        } else {
            out.extend(self.announce());
        }
        out
    }

    /// Observation pushes for sides owing an act that have not been told yet.
    fn announce(&mut self) -> Vec<Outbound> {
        let mut out = Vec::new();
        if self.desc.state != SessionState::Running {
            return out;
        }
        let tick = self.engine.tick();
        for side in self.awaiting() {
            if self.announced[side.index()] != Some(tick) {
                self.announced[side.index()] = Some(tick);
                out.push(Outbound {
                    to: Audience::Side(side),
                    env: self.envelope(Message::Observation(self.observation(side))),
                });
            }
        }
        out
    }

    pub fn episode_end(&self) -> EpisodeEnd {
        EpisodeEnd {
            winner: self.engine.winner(),
            final_blood: self.engine.operators().iter().map(|o| o.blood).collect(),
            ticks: self.engine.tick(),
            controllers: Teams {
                red: self.desc.red.to_string(),
                blue: self.desc.blue.to_string(),
            },
        }
    }

    /// Replay bytes recorded so far; complete with footer once finished.
    pub fn replay_bytes(&self) -> Vec<u8> {
        match (&self.finished_replay, &self.writer) {
            (Some((b, _)), _) => b.clone(),
            (None, Some(w)) => w.get_ref().clone(),
            (None, None) => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use poac_core::replay::{read_replay, verify};

    fn session(red: &str, blue: &str) -> Session {
        let cfg = Arc::new(ScenarioConfig::bundled(0).unwrap());
        Session::new(1, "0", cfg, 5, red.parse().unwrap(), blue.parse().unwrap(), Deadline::Gated).unwrap()
    }

    #[test]
    fn controller_names() {
        for s in ["bot:KAI0", "bot:KAI1", "bot:KAI2", "random", "external", "human"] {
            assert_eq!(s.parse::<Controller>().unwrap().to_string(), s);
        }
        assert_eq!("KAI2".parse::<Controller>().unwrap(), Controller::Bot(BotKind::Kai2));
        assert!("bot:KAI7".parse::<Controller>().is_err());
    }

    #[test]
    fn bot_session_runs_to_the_end_on_advance() {
        let mut s = session("bot:KAI0", "bot:KAI1");
        assert_eq!(s.descriptor().state, SessionState::Running);
        let out = s.advance();
        assert!(s.is_finished());
        assert!(matches!(out.last().unwrap().env.body, Message::EpisodeEnd(_)));
        let rec = read_replay(&s.replay_bytes()).unwrap();
        assert!(rec.warnings.is_empty());
        assert!(verify(&rec.record).unwrap().is_exact());
    }

    #[test]
    fn human_side_gates_the_clock() {
        let mut s = session("human", "bot:KAI0");
        assert_eq!(s.descriptor().state, SessionState::Waiting);
        assert!(s.advance().is_empty());
        let out = s.attach(Color::Red).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].to, Audience::Side(Color::Red));
        assert_eq!(s.engine().tick(), 0);
        // Nothing moves until red acts.
        assert!(s.advance().is_empty());
        assert_eq!(s.engine().tick(), 0);

        let obs = s.observation(Color::Red);
        let acts: ActionMap = obs.agents.iter().map(|a| (a.uid, Action::Stop)).collect();
        assert!(matches!(
            s.submit(Color::Red, 3, acts.clone()),
            Err(SessionError::StaleTick { got: 3, current: 0 })
        ));
        assert!(matches!(
            s.submit(Color::Blue, 0, ActionMap::new()),
            Err(SessionError::NotController { .. })
        ));
        let out = s.submit(Color::Red, 0, acts.clone()).unwrap();
        assert!(out.iter().any(|o| matches!(o.env.body, Message::StepResult(_))));
        // The same act again is now stale.
        assert!(s.submit(Color::Red, 0, acts).is_err());
    }

    #[test]
    fn illegal_and_foreign_actions_are_rejected() {
        let mut s = session("external", "bot:KAI0");
        s.attach(Color::Red).unwrap();
        let mut acts: ActionMap = [(0, Action::Stop), (1, Action::Stop), (2, Action::Stop)].into_iter().collect();
        acts.insert(4, Action::Stop);
        assert!(matches!(s.submit(Color::Red, 0, acts), Err(SessionError::WrongSide { uid: 4, .. })));
        let acts: ActionMap = [(0, Action::Shoot(3)), (1, Action::Stop), (2, Action::Stop)].into_iter().collect();
        assert!(matches!(s.submit(Color::Red, 0, acts), Err(SessionError::IllegalAction { uid: 0, .. })));
        let acts: ActionMap = [(0, Action::Stop)].into_iter().collect();
        assert!(matches!(s.submit(Color::Red, 0, acts), Err(SessionError::MissingAction { uid: 1 })));
    }

    #[test]
    fn expiry_holds_the_silent_side() {
        let mut s = session("external", "external");
        s.attach(Color::Red).unwrap();
        s.attach(Color::Blue).unwrap();
        let out = s.expire();
        assert!(matches!(out[0].env.body, Message::StepResult(_)));
        assert_eq!(s.engine().tick(), 1);
        assert!(s.engine().operators().iter().all(|o| o.stop_time == 1));
    }

    #[test]
    fn observation_is_fogged() {
        let s = session("external", "external");
        let obs = s.observation(Color::Red);
        // Teams start far apart: only allies are rendered.
        assert!(obs.render.operators.iter().all(|o| o.color == Color::Red));
        assert_eq!(obs.agents.len(), 3);
    }
}
