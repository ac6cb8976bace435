//! `.poacrep` replay files: one JSON object per line.
//!
//! Line 1 is the header, then one line per tick, then a footer carrying an
//! FNV-1a 64 digest of every byte before it. Lines are flushed as they are
//! written, so an interrupted recording still reads back as a prefix.

use std::fmt;
use std::hash::Hasher;
use std::io::{self, Write};
use std::sync::Arc;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    color_of, Action, ActionMap, EngineError, EngineState, Event, Hp, OpType, StepResult, Uid, Winner, ROSTER_SIZE,
};
use crate::hexgrid::save_map;
use crate::rng::RNG_ALGORITHM;
use crate::scenarios::{MapSource, ScenarioConfig, ScenarioDocument, ScenarioError, Teams};
use crate::ENGINE_VERSION;

pub const FORMAT_VERSION: u32 = 1;
pub const DIGEST_ALGORITHM: &str = "fnv1a-64";
pub const FILE_EXTENSION: &str = "poacrep";

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("replay is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported replay format version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("digest mismatch: footer says {expected}, content hashes to {actual}")]
    Digest { expected: String, actual: String },
    #[error("scenario in header: {0}")]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub format_version: u32,
    pub engine_version: String,
    pub digest_algorithm: String,
    pub rng: String,
    /// Scenario with the map inlined so the file is self-contained.
    pub scenario: ScenarioDocument,
    pub seed: u64,
    pub controllers: Teams<String>,
}

impl ReplayHeader {
    pub fn new(cfg: &ScenarioConfig, seed: u64, controllers: Teams<String>) -> Self {
        let mut scenario = cfg.document().clone();
        scenario.map = MapSource::Inline(String::from_utf8(save_map(cfg.map())).expect("ascii"));
        Self {
            format_version: FORMAT_VERSION,
            engine_version: ENGINE_VERSION.to_string(),
            digest_algorithm: DIGEST_ALGORITHM.to_string(),
            rng: RNG_ALGORITHM.to_string(),
            scenario,
            seed,
            controllers,
        }
    }

    pub fn config(&self) -> Result<ScenarioConfig, ReplayError> {
        Ok(ScenarioConfig::from_document(self.scenario.clone(), None)?)
    }
}

/// What happened on one tick: `tick` is the tick at which the actions were
/// submitted, `state_digest` the engine digest after the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u32,
    pub actions: [Action; ROSTER_SIZE],
    pub events: Vec<Event>,
    pub rewards: [f64; 2],
    pub state_digest: String,
}

impl TickRecord {
    /// Builds the record from the post-step state.
    pub fn capture(after: &EngineState, actions: &ActionMap, result: &StepResult) -> Self {
        Self {
            tick: after.tick() - 1,
            actions: std::array::from_fn(|u| actions.get(&u).copied().unwrap_or(Action::Empty)),
            events: result.events.clone(),
            rewards: [result.reward_red, result.reward_blue],
            state_digest: digest_hex(after.digest()),
        }
    }

    pub fn action_map(&self) -> ActionMap {
        self.actions.iter().copied().enumerate().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayFooter {
    pub winner: Winner,
    pub final_blood: [Hp; ROSTER_SIZE],
    pub total_ticks: u32,
    pub digest: String,
}

// Lines are short-lived; boxing the header buys nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(ReplayHeader),
    Tick(TickRecord),
    Footer(ReplayFooter),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRecord {
    pub header: ReplayHeader,
    pub ticks: Vec<TickRecord>,
    /// Absent when the recording was cut short.
    pub footer: Option<ReplayFooter>,
}

/// A record read from bytes, plus anything worth telling the user about it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedReplay {
    pub record: ReplayRecord,
    pub warnings: Vec<String>,
}

pub fn digest_hex(d: u64) -> String {
    format!("{d:016x}")
}

fn encode(line: &Line) -> Vec<u8> {
    let mut buf = serde_json::to_vec(line).expect("replay lines serialize");
    buf.push(b'\n');
    buf
}

/// Append-only writer. Every line is flushed immediately.
pub struct ReplayWriter<W: Write> {
    out: W,
    hasher: FnvHasher,
    ticks: u32,
}

impl<W: Write> ReplayWriter<W> {
    pub fn new(mut out: W, header: &ReplayHeader) -> io::Result<Self> {
        let bytes = encode(&Line::Header(header.clone()));
        out.write_all(&bytes)?;
        out.flush()?;
        let mut hasher = FnvHasher::default();
        hasher.write(&bytes);
        Ok(Self { out, hasher, ticks: 0 })
    }

    pub fn push(&mut self, rec: &TickRecord) -> io::Result<()> {
        let bytes = encode(&Line::Tick(rec.clone()));
        self.out.write_all(&bytes)?;
        self.out.flush()?;
        self.hasher.write(&bytes);
        self.ticks += 1;
        Ok(())
    }

    pub fn ticks_written(&self) -> u32 {
        self.ticks
    }

    pub fn get_ref(&self) -> &W {
        &self.out
    }

    /// Writes the footer for the finished episode and hands back the sink.
    pub fn finish(mut self, st: &EngineState) -> io::Result<(W, ReplayFooter)> {
        let footer = ReplayFooter {
            winner: st.winner(),
            final_blood: std::array::from_fn(|u| st.operators()[u].blood),
            total_ticks: st.tick(),
            digest: digest_hex(self.hasher.finish()),
        };
        self.out.write_all(&encode(&Line::Footer(footer.clone())))?;
        self.out.flush()?;
        Ok((self.out, footer))
    }
}

/// Serializes a record. `write(read(bytes)) == bytes` for anything this
/// module produced.
pub fn write_replay(rec: &ReplayRecord) -> Vec<u8> {
    let mut out = encode(&Line::Header(rec.header.clone()));
    for t in &rec.ticks {
        out.extend(encode(&Line::Tick(t.clone())));
    }
    if let Some(f) = &rec.footer {
        out.extend(encode(&Line::Footer(f.clone())));
    }
    out
}

/// Parses replay bytes. A missing footer or a torn final line yields the
/// readable prefix and a warning; a bad digest or format version is an error.
pub fn read_replay(bytes: &[u8]) -> Result<LoadedReplay, ReplayError> {
    let mut warnings = Vec::new();
    let mut hasher = FnvHasher::default();
    let mut header: Option<ReplayHeader> = None;
    let mut ticks = Vec::new();
    let mut footer = None;
    let mut rest = bytes;
    let mut line_no = 0;
    while !rest.is_empty() {
        line_no += 1;
        let (raw, next, complete) = match rest.iter().position(|&b| b == b'\n') {
            Some(i) => (&rest[..i], &rest[i + 1..], true),
            None => (rest, &rest[rest.len()..], false),
        };
        let consumed = &rest[..rest.len() - next.len()];
        rest = next;
        if footer.is_some() {
            return Err(ReplayError::Malformed {
                line: line_no,
                message: "content after footer".into(),
            });
        }
        if !complete {
            if header.is_none() {
                return Err(ReplayError::Malformed {
                    line: line_no,
                    message: "header line is incomplete".into(),
                });
            }
            warnings.push(format!("line {line_no}: torn final line dropped"));
            break;
        }
        let line: Line = match serde_json::from_slice(raw) {
            Ok(l) => l,
            Err(e) => {
                // A header that does not parse may still announce a version
                // we do not understand; report that in preference.
                if line_no == 1 {
                    if let Some(found) = peek_version(raw).filter(|&v| v != FORMAT_VERSION) {
                        return Err(ReplayError::Version { found });
                    }
                }
                return Err(ReplayError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                });
            }
        };
        match (line, &header) {
            (Line::Header(h), None) => {
                if h.format_version != FORMAT_VERSION {
                    return Err(ReplayError::Version { found: h.format_version });
                }
                hasher.write(consumed);
                header = Some(h);
            }
            (_, None) => {
                return Err(ReplayError::Malformed {
                    line: line_no,
                    message: "first line is not a header".into(),
                })
            }
            (Line::Header(_), Some(_)) => {
                return Err(ReplayError::Malformed {
                    line: line_no,
                    message: "second header".into(),
                })
            }
            (Line::Tick(t), Some(_)) => {
                hasher.write(consumed);
                ticks.push(t);
            }
            (Line::Footer(f), Some(_)) => {
                let actual = digest_hex(hasher.finish());
                if actual != f.digest {
                    return Err(ReplayError::Digest {
                        expected: f.digest,
                        actual,
                    });
                }
                footer = Some(f);
            }
        }
    }
    let header = header.ok_or(ReplayError::Empty)?;
    if footer.is_none() {
        warnings.push(format!("no footer; recovered {} tick(s) of a truncated recording", ticks.len()));
    }
    Ok(LoadedReplay {
        record: ReplayRecord { header, ticks, footer },
        warnings,
    })
}

fn peek_version(raw: &[u8]) -> Option<u32> {
    let v: serde_json::Value = serde_json::from_slice(raw).ok()?;
    v.get("format_version")?.as_u64().map(|n| n as u32)
}

/// Records a full episode driven by `drive`, which receives a closure to
/// call after every step.
pub fn record_episode<E>(
    cfg: Arc<ScenarioConfig>,
    seed: u64,
    controllers: Teams<String>,
    drive: impl FnOnce(&mut EngineState, &mut dyn FnMut(&EngineState, &ActionMap, &StepResult)) -> Result<(), E>,
) -> Result<ReplayRecord, E>
where
    E: From<EngineError>,
{
    let header = ReplayHeader::new(&cfg, seed, controllers);
    let mut st = EngineState::reset(cfg, seed)?;
    let mut writer = ReplayWriter::new(Vec::new(), &header).expect("in-memory write");
    let mut ticks = Vec::new();
    drive(&mut st, &mut |after, actions, result| {
        let rec = TickRecord::capture(after, actions, result);
        writer.push(&rec).expect("in-memory write");
        ticks.push(rec);
    })?;
    let (_, footer) = writer.finish(&st).expect("in-memory write");
    Ok(ReplayRecord {
        header,
        ticks,
        footer: Some(footer),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum VerifyOutcome {
    Exact,
    Divergence { tick: u32, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub outcome: VerifyOutcome,
    /// `(recorded, running)` when the engine versions differ.
    pub engine_version_mismatch: Option<(String, String)>,
    pub ticks_checked: u32,
    pub truncated: bool,
}

impl VerifyReport {
    pub fn is_exact(&self) -> bool {
        self.outcome == VerifyOutcome::Exact
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((rec, cur)) = &self.engine_version_mismatch {
            writeln!(f, "warning: recorded with {rec}, verifying with {cur}")?;
        }
        if self.truncated {
            writeln!(f, "warning: truncated recording, only the prefix was checked")?;
        }
        match &self.outcome {
            VerifyOutcome::Exact => write!(f, "exact ({} ticks)", self.ticks_checked),
            VerifyOutcome::Divergence { tick, detail } => write!(f, "divergence at tick {tick}: {detail}"),
        }
    }
}

/// Re-simulates the record and compares it tick by tick.
pub fn verify(rec: &ReplayRecord) -> Result<VerifyReport, ReplayError> {
    let engine_version_mismatch =
        (rec.header.engine_version != ENGINE_VERSION).then(|| (rec.header.engine_version.clone(), ENGINE_VERSION.to_string()));
    let cfg = Arc::new(rec.header.config()?);
    let mut st = EngineState::reset(cfg, rec.header.seed)?;
    let report = |outcome, ticks_checked| VerifyReport {
        outcome,
        engine_version_mismatch: engine_version_mismatch.clone(),
        ticks_checked,
        truncated: rec.footer.is_none(),
    };
    let diverge = |tick: u32, detail: String| VerifyOutcome::Divergence { tick, detail };
    for (n, t) in rec.ticks.iter().enumerate() {
        let n = n as u32;
        if t.tick != st.tick() {
            return Ok(report(diverge(st.tick(), format!("record has tick {} here", t.tick)), n));
        }
        let result = match st.step(&t.action_map()) {
            Ok(r) => r,
            Err(e) => return Ok(report(diverge(t.tick, format!("engine rejected recorded actions: {e}")), n)),
        };
        if result.events != t.events {
            let detail = first_event_difference(&t.events, &result.events);
            return Ok(report(diverge(t.tick, detail), n));
        }
        if [result.reward_red, result.reward_blue] != t.rewards {
            let detail = format!(
                "rewards recorded {:?}, simulated {:?}",
                t.rewards,
                [result.reward_red, result.reward_blue]
            );
            return Ok(report(diverge(t.tick, detail), n));
        }
        let d = digest_hex(st.digest());
        if d != t.state_digest {
            return Ok(report(diverge(t.tick, format!("state digest recorded {}, simulated {d}", t.state_digest)), n));
        }
    }
    let checked = rec.ticks.len() as u32;
    if let Some(f) = &rec.footer {
        if !st.terminated() {
            return Ok(report(diverge(st.tick(), "footer present but the episode has not ended".into()), checked));
        }
        let blood: [Hp; ROSTER_SIZE] = std::array::from_fn(|u| st.operators()[u].blood);
        if f.winner != st.winner() || f.final_blood != blood || f.total_ticks != st.tick() {
            let detail = format!(
                "footer recorded {:?}/{:?}/{} ticks, simulated {:?}/{:?}/{} ticks",
                f.winner,
                f.final_blood,
                f.total_ticks,
                st.winner(),
                blood,
                st.tick()
            );
            return Ok(report(diverge(st.tick(), detail), checked));
        }
    }
    Ok(report(VerifyOutcome::Exact, checked))
}

fn first_event_difference(recorded: &[Event], simulated: &[Event]) -> String {
    for i in 0..recorded.len().max(simulated.len()) {
        let (a, b) = (recorded.get(i), simulated.get(i));
        if a != b {
            return format!("event {i}: recorded {a:?}, simulated {b:?}");
        }
    }
    "events differ".into()
}

/// Per-operator totals for `replay export`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSummary {
    pub uid: Uid,
    pub color: String,
    pub op_type: OpType,
    pub shots: u32,
    pub guide_shots: u32,
    pub hits: u32,
    pub damage_dealt: Hp,
    pub kills: u32,
    pub hexes_moved: u32,
    pub final_blood: Option<Hp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub seed: u64,
    pub scenario_id: Option<u8>,
    pub controllers: Teams<String>,
    pub ticks: u32,
    pub winner: Option<Winner>,
    pub return_red: f64,
    pub return_blue: f64,
    pub operators: Vec<OperatorSummary>,
}

pub fn summarize(rec: &ReplayRecord) -> ReplaySummary {
    let roster = &rec.header.scenario.roster;
    let mut ops: Vec<OperatorSummary> = (0..ROSTER_SIZE)
        .map(|uid| {
            let color = color_of(uid);
            let team = match color {
                crate::engine::Color::Red => &roster.red,
                crate::engine::Color::Blue => &roster.blue,
            };
            OperatorSummary {
                uid,
                color: color.to_string(),
                op_type: team[crate::engine::team_slot(uid)],
                shots: 0,
                guide_shots: 0,
                hits: 0,
                damage_dealt: Hp::ZERO,
                kills: 0,
                hexes_moved: 0,
                final_blood: rec.footer.as_ref().map(|f| f.final_blood[uid]),
            }
        })
        .collect();
    let (mut ret_r, mut ret_b) = (0.0, 0.0);
    for t in &rec.ticks {
        ret_r += t.rewards[0];
        ret_b += t.rewards[1];
        for e in &t.events {
            match *e {
                Event::MoveCompleted { uid, voided: false, .. } => ops[uid].hexes_moved += 1,
                Event::Shot {
                    shooter, hit, damage, ..
                }
                | Event::GuideShot {
                    shooter, hit, damage, ..
                } => {
                    let o = &mut ops[shooter];
                    if matches!(e, Event::GuideShot { .. }) {
                        o.guide_shots += 1;
                    } else {
                        o.shots += 1;
                    }
                    if hit {
                        o.hits += 1;
                        o.damage_dealt = o.damage_dealt.saturating_add(damage);
                    }
                }
                Event::Death { uid } => {
                    // Credit the last shooter that hit this target this tick.
                    let killer = t.events.iter().rev().find_map(|ev| match *ev {
                        Event::Shot {
                            shooter, target, hit: true, ..
                        }
                        | Event::GuideShot {
                            shooter, target, hit: true, ..
                        } if target == uid => Some(shooter),
                        _ => None,
                    });
                    if let Some(k) = killer {
                        ops[k].kills += 1;
                    }
                }
                _ => {}
            }
        }
    }
    ReplaySummary {
        seed: rec.header.seed,
        scenario_id: rec.header.scenario.scenario_id,
        controllers: rec.header.controllers.clone(),
        ticks: rec.footer.as_ref().map_or(rec.ticks.len() as u32, |f| f.total_ticks),
        winner: rec.footer.as_ref().map(|f| f.winner),
        return_red: ret_r,
        return_blue: ret_b,
        operators: ops,
    }
}

impl ReplaySummary {
    /// Tab-separated table, one row per operator.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("uid\tcolor\ttype\tshots\tguide_shots\thits\tdamage\tkills\thexes_moved\tfinal_blood\n");
        for o in &self.operators {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                o.uid,
                o.color,
                o.op_type,
                o.shots,
                o.guide_shots,
                o.hits,
                o.damage_dealt,
                o.kills,
                o.hexes_moved,
                o.final_blood.map_or("-".to_string(), |b| b.to_string())
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bots::BotKind;
    use crate::episode::{make_bot, run_episode_with};
    use crate::engine::Color;

    fn kai0_record(scenario: u8, seed: u64) -> ReplayRecord {
        let cfg = Arc::new(ScenarioConfig::bundled(scenario).unwrap());
        let mut red = make_bot(BotKind::Kai0, &cfg, Color::Red, seed);
        let mut blue = make_bot(BotKind::Kai0, &cfg, Color::Blue, seed);
        let names = Teams {
            red: "bot:KAI0".to_string(),
            blue: "bot:KAI0".to_string(),
        };
        record_episode(cfg, seed, names, |st, cb| {
            run_episode_with(st, &mut red, &mut blue, cb).map(|_| ())
        })
        .unwrap()
    }

    #[test]
    fn write_read_is_byte_exact() {
        let rec = kai0_record(0, 7);
        let bytes = write_replay(&rec);
        let back = read_replay(&bytes).unwrap();
        assert!(back.warnings.is_empty());
        assert_eq!(back.record, rec);
        assert_eq!(write_replay(&back.record), bytes);
    }

    #[test]
    fn zero_tick_episode_has_empty_body() {
        let cfg = ScenarioConfig::bundled(0).unwrap();
        let cfg = Arc::new(cfg.apply_override("max_ticks", serde_json::json!(0)).unwrap());
        let names = Teams {
            red: "external".to_string(),
            blue: "external".to_string(),
        };
        let rec = record_episode::<EngineError>(cfg, 3, names, |_, _| Ok(())).unwrap();
        assert!(rec.ticks.is_empty());
        assert_eq!(rec.footer.as_ref().unwrap().total_ticks, 0);
        let back = read_replay(&write_replay(&rec)).unwrap();
        assert_eq!(back.record, rec);
        let r = verify(&rec).unwrap();
        assert!(r.is_exact(), "{r}");
    }

    #[test]
    fn flipped_body_byte_is_a_digest_error() {
        let bytes = write_replay(&kai0_record(0, 7));
        let first_nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        // Find a digit inside the first tick line and change it.
        let mut tampered = bytes.clone();
        let pos = tampered[first_nl + 1..]
            .windows(7)
            .position(|w| w == b"\"tick\":")
            .unwrap()
            + first_nl
            + 1
            + 7;
        assert_eq!(tampered[pos], b'0');
        tampered[pos] = b'9';
        assert!(matches!(read_replay(&tampered), Err(ReplayError::Digest { .. })));
    }

    #[test]
    fn truncation_recovers_prefix() {
        let rec = kai0_record(0, 7);
        let bytes = write_replay(&rec);
        let cut = &bytes[..bytes.len() * 2 / 3];
        let back = read_replay(cut).unwrap();
        assert!(back.record.footer.is_none());
        assert!(!back.warnings.is_empty());
        assert!(!back.record.ticks.is_empty());
        assert_eq!(back.record.ticks[..], rec.ticks[..back.record.ticks.len()]);
        let report = verify(&back.record).unwrap();
        assert!(report.is_exact() && report.truncated);
    }

    #[test]
    fn version_mismatch_is_an_error() {
        let text = String::from_utf8(write_replay(&kai0_record(0, 1))).unwrap();
        let bumped = text.replacen("\"format_version\":1", "\"format_version\":99", 1);
        assert!(matches!(read_replay(bumped.as_bytes()), Err(ReplayError::Version { found: 99 })));
    }

    #[test]
    fn verify_exact_and_divergence() {
        let rec = kai0_record(0, 11);
        assert!(verify(&rec).unwrap().is_exact());

        let mut bad = rec.clone();
        // Replace the first red tank decision with a different legal one.
        let k = bad.ticks.iter().position(|t| t.actions[0] != Action::Empty).unwrap();
        bad.ticks[k].actions[0] = Action::Stop;
        let report = verify(&bad).unwrap();
        match report.outcome {
            VerifyOutcome::Divergence { tick, .. } => assert_eq!(tick, bad.ticks[k].tick),
            VerifyOutcome::Exact => panic!("altered action went unnoticed"),
        }
    }

    #[test]
    fn engine_version_mismatch_is_reported_not_fatal() {
        let mut rec = kai0_record(0, 5);
        rec.header.engine_version = "poac-core/0.0.0".into();
        let report = verify(&rec).unwrap();
        assert!(report.is_exact());
        assert!(report.engine_version_mismatch.is_some());
    }

    #[test]
    fn summary_counts_match_events() {
        let rec = kai0_record(0, 7);
        let s = summarize(&rec);
        let shots: u32 = rec
            .ticks
            .iter()
            .flat_map(|t| &t.events)
            .filter(|e| matches!(e, Event::Shot { .. } | Event::GuideShot { .. }))
            .count() as u32;
        assert_eq!(s.operators.iter().map(|o| o.shots + o.guide_shots).sum::<u32>(), shots);
        let deaths = rec.ticks.iter().flat_map(|t| &t.events).filter(|e| matches!(e, Event::Death { .. })).count();
        assert_eq!(s.operators.iter().map(|o| o.kills as usize).sum::<usize>(), deaths);
        assert_eq!(s.to_tsv().lines().count(), 1 + ROSTER_SIZE);
    }
}
