//! Per-agent observations, the centralised global state, and the feature
//! layout shared with external learners.
//!
//! Operator block (14 values, roster order within a team):
//! `color, id, type, cur_hex, blood, move_time, stop_time,
//! shoot_cooling_time, can_see x3, can_attack x3`. A local observation holds
//! the full block for each ally, the first five values for each enemy the
//! agent can see (zeros otherwise), and the clock. The global state holds
//! unmasked blocks for all six operators, red first, and the clock.

use serde::{Deserialize, Serialize};

use crate::engine::{
    color_of, uid_of, Color, EngineError, EngineState, OpType, OperatorState, Uid, ROSTER_SIZE, TEAM_SIZE,
};
use crate::hexgrid::HexCoord;

pub const ALLY_FEATURES: usize = 8 + 2 * TEAM_SIZE;
pub const ENEMY_FEATURES: usize = 5;
pub const OBS_LEN: usize = TEAM_SIZE * ALLY_FEATURES + TEAM_SIZE * ENEMY_FEATURES + 1;
pub const STATE_LEN: usize = ROSTER_SIZE * ALLY_FEATURES + 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservationVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GlobalState(pub Vec<f64>);

/// Normalizing constants derived from the scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub cells: usize,
    pub max_ticks: u32,
}

impl Normalizer {
    pub fn of(st: &EngineState) -> Self {
        Self {
            cells: st.config().map().cell_count(),
            max_ticks: st.config().max_ticks(),
        }
    }

    fn hex_denominator(&self) -> f64 {
        (self.cells.saturating_sub(1)).max(1) as f64
    }

    fn tick_denominator(&self) -> f64 {
        self.max_ticks.max(1) as f64
    }

    pub fn hex(&self, linear: usize) -> f64 {
        linear as f64 / self.hex_denominator()
    }

    pub fn ticks(&self, t: u32) -> f64 {
        (t as f64 / self.tick_denominator()).min(1.0)
    }

    pub fn decode_hex(&self, v: f64) -> usize {
        (v * self.hex_denominator()).round() as usize
    }

    pub fn decode_ticks(&self, v: f64) -> u32 {
        (v * self.tick_denominator()).round() as u32
    }
}

fn sees_and_attack(st: &EngineState, uid: Uid) -> ([f64; TEAM_SIZE], [f64; TEAM_SIZE]) {
    let enemy = color_of(uid).opponent();
    let mut see = [0.0; TEAM_SIZE];
    let mut attack = [0.0; TEAM_SIZE];
    for k in 0..TEAM_SIZE {
        let e = uid_of(enemy, k);
        let visible = st.visibility(uid, e).unwrap_or(false);
        see[k] = if visible { 1.0 } else { 0.0 };
        let in_range = st.can_attack(uid, e).unwrap_or(false);
        attack[k] = if visible && in_range { 1.0 } else { 0.0 };
    }
    (see, attack)
}

fn identity_features(st: &EngineState, o: &OperatorState, norm: &Normalizer) -> [f64; ENEMY_FEATURES] {
    let map = st.config().map();
    let blood_max = st.config().spec(o.op_type).blood_max.tenths().max(1) as f64;
    [
        o.color.code() as f64,
        o.uid as f64 / (ROSTER_SIZE - 1) as f64,
        o.op_type.code() as f64 / 2.0,
        norm.hex(map.index(o.pos)),
        o.blood.tenths() as f64 / blood_max,
    ]
}

fn full_block(st: &EngineState, uid: Uid, norm: &Normalizer, out: &mut Vec<f64>) {
    let o = &st.operators()[uid];
    if !o.alive {
        out.extend([0.0; ALLY_FEATURES]);
        return;
    }
    out.extend(identity_features(st, o, norm));
    out.push(norm.ticks(o.move_time));
    out.push(norm.ticks(o.stop_time));
    out.push(norm.ticks(o.shoot_cooling_time));
    let (see, attack) = sees_and_attack(st, uid);
    out.extend(see);
    out.extend(attack);
}

pub fn build_observation(st: &EngineState, uid: Uid) -> Result<ObservationVector, EngineError> {
    st.operator(uid)?;
    let norm = Normalizer::of(st);
    let own = color_of(uid);
    let mut v = Vec::with_capacity(OBS_LEN);
    for k in 0..TEAM_SIZE {
        full_block(st, uid_of(own, k), &norm, &mut v);
    }
    for k in 0..TEAM_SIZE {
        let e = uid_of(own.opponent(), k);
        if st.visibility(uid, e)? {
            v.extend(identity_features(st, &st.operators()[e], &norm));
        } else {
            v.extend([0.0; ENEMY_FEATURES]);
        }
    }
    v.push(norm.ticks(st.tick()));
    debug_assert_eq!(v.len(), OBS_LEN);
    Ok(ObservationVector(v))
}

pub fn build_global_state(st: &EngineState) -> GlobalState {
    let norm = Normalizer::of(st);
    let mut v = Vec::with_capacity(STATE_LEN);
    for uid in 0..ROSTER_SIZE {
        full_block(st, uid, &norm, &mut v);
    }
    v.push(norm.ticks(st.tick()));
    GlobalState(v)
}

/// Offset of the global-state block for `uid`.
pub fn global_block_offset(uid: Uid) -> usize {
    uid * ALLY_FEATURES
}

/// Offset of the local-observation enemy block for enemy slot `k`.
pub fn enemy_block_offset(k: usize) -> usize {
    TEAM_SIZE * ALLY_FEATURES + k * ENEMY_FEATURES
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureField {
    pub name: String,
    pub offset: usize,
    pub width: usize,
    pub normalizer: String,
}

fn block_fields(prefix: &str, base: usize, full: bool, out: &mut Vec<FeatureField>) {
    let mut fields: Vec<(&str, usize, &str)> = vec![
        ("color", 1, "raw (0 red, 1 blue)"),
        ("id", 1, "uid / 5"),
        ("type", 1, "type / 2 (0 tank, 1 chariot, 2 infantry)"),
        ("cur_hex", 1, "(row * cols + col) / (rows * cols - 1)"),
        ("blood", 1, "blood / blood_max"),
    ];
    if full {
        fields.extend([
            ("move_time", 1, "ticks / max_ticks"),
            ("stop_time", 1, "ticks / max_ticks"),
            ("shoot_cooling_time", 1, "ticks / max_ticks"),
            ("can_see", TEAM_SIZE, "0/1 per enemy slot"),
            ("can_attack", TEAM_SIZE, "0/1 per enemy slot"),
        ]);
    }
    let mut off = base;
    for (name, width, norm) in fields {
        out.push(FeatureField {
            name: format!("{prefix}.{name}"),
            offset: off,
            width,
            normalizer: norm.to_string(),
        });
        off += width;
    }
}

/// Field table of the local observation vector.
pub fn observation_layout() -> Vec<FeatureField> {
    let mut out = Vec::new();
    for k in 0..TEAM_SIZE {
        block_fields(&format!("ally{k}"), k * ALLY_FEATURES, true, &mut out);
    }
    for k in 0..TEAM_SIZE {
        block_fields(&format!("enemy{k}"), enemy_block_offset(k), false, &mut out);
    }
    out.push(FeatureField {
        name: "time_step".into(),
        offset: OBS_LEN - 1,
        width: 1,
        normalizer: "tick / max_ticks".into(),
    });
    out
}

/// Field table of the global state vector.
pub fn global_state_layout() -> Vec<FeatureField> {
    let mut out = Vec::new();
    for uid in 0..ROSTER_SIZE {
        let team = if uid < TEAM_SIZE { "red" } else { "blue" };
        block_fields(&format!("{team}{}", uid % TEAM_SIZE), global_block_offset(uid), true, &mut out);
    }
    out.push(FeatureField {
        name: "time_step".into(),
        offset: STATE_LEN - 1,
        width: 1,
        normalizer: "tick / max_ticks".into(),
    });
    out
}

/// Decoded view of one ally block.
#[derive(Debug, Clone, PartialEq)]
pub struct AllyView {
    pub uid: Uid,
    pub op_type: OpType,
    pub pos: HexCoord,
    pub blood_frac: f64,
    pub move_time: u32,
    pub stop_time: u32,
    pub shoot_cooling_time: u32,
    pub can_see: [bool; TEAM_SIZE],
    pub can_attack: [bool; TEAM_SIZE],
}

/// Decoded view of one visible enemy.
#[derive(Debug, Clone, PartialEq)]
pub struct EnemyView {
    pub uid: Uid,
    pub op_type: OpType,
    pub pos: HexCoord,
    pub blood_frac: f64,
}

/// A local observation decoded back into positions and timers.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalView {
    pub color: Color,
    pub allies: [Option<AllyView>; TEAM_SIZE],
    pub enemies: [Option<EnemyView>; TEAM_SIZE],
    pub tick: u32,
}

fn decode_type(v: f64) -> OpType {
    match (v * 2.0).round() as u8 {
        0 => OpType::Tank,
        1 => OpType::Chariot,
        _ => OpType::Infantry,
    }
}

/// Inverse of [`build_observation`] for the fields it exposes. `cols` is
/// the map width; `color` the observing agent's team.
pub fn decode_observation(obs: &ObservationVector, color: Color, cols: i32, norm: &Normalizer) -> LocalView {
    let v = &obs.0;
    let coord = |x: f64| {
        let i = norm.decode_hex(x) as i32;
        HexCoord::new(i / cols, i % cols)
    };
    let uid_of_block = |b: &[f64]| (b[1] * (ROSTER_SIZE - 1) as f64).round() as Uid;
    let allies = std::array::from_fn(|k| {
        let b = &v[k * ALLY_FEATURES..(k + 1) * ALLY_FEATURES];
        // A living operator's blood fraction is strictly positive.
        (b[4] > 0.0).then(|| AllyView {
            uid: uid_of_block(b),
            op_type: decode_type(b[2]),
            pos: coord(b[3]),
            blood_frac: b[4],
            move_time: norm.decode_ticks(b[5]),
            stop_time: norm.decode_ticks(b[6]),
            shoot_cooling_time: norm.decode_ticks(b[7]),
            can_see: std::array::from_fn(|i| b[8 + i] > 0.5),
            can_attack: std::array::from_fn(|i| b[8 + TEAM_SIZE + i] > 0.5),
        })
    });
    let enemies = std::array::from_fn(|k| {
        let off = enemy_block_offset(k);
        let b = &v[off..off + ENEMY_FEATURES];
        (b[4] > 0.0).then(|| EnemyView {
            uid: uid_of_block(b),
            op_type: decode_type(b[2]),
            pos: coord(b[3]),
            blood_frac: b[4],
        })
    });
    LocalView {
        color,
        allies,
        enemies,
        tick: norm.decode_ticks(v[OBS_LEN - 1]),
    }
}
