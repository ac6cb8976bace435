//! Wire messages. Every message is one JSON object
//! `{"kind": ..., "session": ..., "tick": ..., "payload": ...}`.
//!
//! Over TCP each message is a 4-byte big-endian length followed by that many
//! bytes of UTF-8 JSON. Over websocket each text frame is one message.

use std::collections::BTreeMap;

use bytes::Bytes;
use poac_core::engine::{Action, Color, Hp, OpType, Uid, Winner, ACTION_COUNT};
use poac_core::hexgrid::HexCoord;
use poac_core::scenarios::Teams;
use poac_core::Event;
use serde::{Deserialize, Serialize};
use tokio_util::codec::LengthDelimitedCodec;

pub const PROTOCOL_VERSION: u32 = 1;
/// Upper bound on one framed message.
pub const MAX_FRAME_BYTES: usize = 8 * 1024 * 1024;

pub type SessionId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(flatten)]
    pub body: Message,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<SessionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tick: Option<u32>,
}

impl Envelope {
    pub fn new(body: Message) -> Self {
        Self {
            body,
            session: None,
            tick: None,
        }
    }

    pub fn session(mut self, id: SessionId) -> Self {
        self.session = Some(id);
        self
    }

    pub fn tick(mut self, tick: u32) -> Self {
        self.tick = Some(tick);
        self
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Self::new(Message::Error(ErrorPayload {
            code,
            message: message.into(),
        }))
    }

    pub fn kind(&self) -> &'static str {
        self.body.kind()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Message {
    Hello(Hello),
    CreateSession(CreateSession),
    SessionCreated(SessionCreated),
    /// Attach to an existing session as the controller of one side.
    Join(Join),
    Observation(SideObservation),
    Act(Act),
    ActAck(ActAck),
    StepResult(StepSummary),
    EpisodeEnd(EpisodeEnd),
    /// Ask for the session's (or served file's) replay.
    ReplayRequest,
    ReplayChunk(ReplayChunk),
    Error(ErrorPayload),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello(_) => "hello",
            Message::CreateSession(_) => "create_session",
            Message::SessionCreated(_) => "session_created",
            Message::Join(_) => "join",
            Message::Observation(_) => "observation",
            Message::Act(_) => "act",
            Message::ActAck(_) => "act_ack",
            Message::StepResult(_) => "step_result",
            Message::EpisodeEnd(_) => "episode_end",
            Message::ReplayRequest => "replay_request",
            Message::ReplayChunk(_) => "replay_chunk",
            Message::Error(_) => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol_version: u32,
    #[serde(default)]
    pub client: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    /// Bundled id ("0".."5") or a path readable by the server.
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    /// Controller strings: `bot:KAI0`, `bot:KAI1`, `bot:KAI2`, `random`,
    /// `external` or `human`.
    pub red: String,
    pub blue: String,
    /// Sides the creating connection controls; defaults to every
    /// external/human side.
    #[serde(default)]
    pub claim: Option<Vec<Color>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub descriptor: crate::session::SessionDescriptor,
    pub board: Board,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Join {
    pub side: Color,
}

/// Static board facts a client needs to draw the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Board {
    pub rows: i32,
    pub cols: i32,
    pub special: Vec<HexCoord>,
    pub max_ticks: u32,
}

/// What one side is allowed to know at a decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideObservation {
    pub side: Color,
    pub agents: Vec<AgentObservation>,
    pub render: RenderState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentObservation {
    pub uid: Uid,
    pub obs: Vec<f64>,
    pub mask: [bool; ACTION_COUNT],
}

/// Allies plus the enemies visible to at least one living ally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderState {
    pub operators: Vec<OperatorView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorView {
    pub uid: Uid,
    pub color: Color,
    pub op_type: OpType,
    pub pos: HexCoord,
    pub blood: Hp,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Act {
    pub side: Color,
    #[serde(deserialize_with = "uid_keys::deserialize")]
    pub actions: BTreeMap<Uid, Action>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActAck {
    pub side: Color,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    #[serde(deserialize_with = "uid_keys::deserialize")]
    pub actions: BTreeMap<Uid, Action>,
    pub events: Vec<Event>,
    pub reward_red: f64,
    pub reward_blue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    pub winner: Winner,
    pub final_blood: Vec<Hp>,
    pub ticks: u32,
    pub controllers: Teams<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayChunk {
    pub seq: u32,
    /// A run of complete `.poacrep` lines.
    pub data: String,
    pub last: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    Version,
    InvalidConfig,
    Capacity,
    UnknownSession,
    NotController,
    StaleTick,
    IllegalAction,
    Finished,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
}

/// Codec for the TCP transport.
pub fn tcp_codec() -> LengthDelimitedCodec {
    LengthDelimitedCodec::builder()
        .length_field_length(4)
        .big_endian()
        .max_frame_length(MAX_FRAME_BYTES)
        .new_codec()
}

pub fn encode_frame(env: &Envelope) -> Bytes {
    Bytes::from(env.to_json().into_bytes())
}

pub fn decode_frame(frame: &[u8]) -> Result<Envelope, serde_json::Error> {
    serde_json::from_slice(frame)
}

/// Splits replay bytes into chunks of whole lines, each at most about
/// `target` bytes (a single longer line is sent alone).
pub fn replay_chunks(bytes: &[u8], target: usize) -> Vec<ReplayChunk> {
    let text = String::from_utf8_lossy(bytes);
    let mut out: Vec<ReplayChunk> = Vec::new();
    let mut cur = String::new();
    for line in text.split_inclusive('\n') {
        if !cur.is_empty() && cur.len() + line.len() > target {
            out.push(ReplayChunk {
                seq: out.len() as u32,
                data: std::mem::take(&mut cur),
                last: false,
            });
        }
        cur.push_str(line);
    }
    out.push(ReplayChunk {
        seq: out.len() as u32,
        data: cur,
        last: true,
    });
    out
}

/// JSON object keys are strings; inside the flattened envelope serde no
/// longer coerces them back to integers, so accept both forms.
mod uid_keys {
    use std::collections::BTreeMap;
    use std::fmt;

    use poac_core::engine::{Action, Uid};
    use serde::de::{self, Deserializer, Visitor};
    use serde::Deserialize;

    #[derive(PartialEq, Eq, PartialOrd, Ord)]
    struct Key(Uid);

    impl<'de> Deserialize<'de> for Key {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            struct V;
            impl Visitor<'_> for V {
                type Value = Key;
                fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                    f.write_str("an operator uid")
                }
                fn visit_u64<E: de::Error>(self, v: u64) -> Result<Key, E> {
                    Uid::try_from(v).map(Key).map_err(|_| E::custom("uid out of range"))
                }
                fn visit_str<E: de::Error>(self, v: &str) -> Result<Key, E> {
                    v.parse().map(Key).map_err(|_| E::custom(format!("bad uid {v:?}")))
                }
            }
            d.deserialize_any(V)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Uid, Action>, D::Error> {
        let m = BTreeMap::<Key, Action>::deserialize(d)?;
        Ok(m.into_iter().map(|(k, v)| (k.0, v)).collect())
    }
}
