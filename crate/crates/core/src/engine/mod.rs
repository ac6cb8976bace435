//! Tick-based asynchronous simulation core.
//!
//! One call to [`EngineState::step`] advances the global clock by one tick:
//! declared actions commit (shots resolve immediately, in roster order),
//! timers advance, pending moves that ran out of ticks land, then rewards
//! and termination are evaluated.

mod action;
mod operator;

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::sync::Arc;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use action::{
    Action, AvailabilityMask, ACTION_COUNT, EMPTY_INDEX, GUIDE_BASE, MOVE_BASE, SHOOT_BASE, STOP_INDEX,
};
pub use operator::{
    color_of, team_slot, uid_of, Color, Hp, OpType, OperatorSpec, OperatorState, Uid, ROSTER_SIZE,
    TEAM_SIZE,
};

use crate::hexgrid::{hex_distance, Direction, HexCoord};
use crate::rng::{derive_seed, XorShift64Star};
use crate::scenarios::{RangeSemantics, ScenarioConfig, ScenarioError};

pub type ActionMap = BTreeMap<Uid, Action>;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown operator uid {0}")]
    UnknownUid(Uid),
    #[error("operators {0} and {1} are on the same team")]
    SameTeam(Uid, Uid),
    #[error("illegal action {action} for operator {uid} at tick {tick}")]
    IllegalAction { uid: Uid, action: Action, tick: u32 },
    #[error("operator {uid} has available actions but submitted none at tick {tick}")]
    MissingAction { uid: Uid, tick: u32 },
    #[error("episode already terminated")]
    Terminated,
    #[error(transparent)]
    Config(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    Red,
    Blue,
    Draw,
    None,
}

impl Winner {
    pub fn mirrored(self) -> Winner {
        match self {
            Winner::Red => Winner::Blue,
            Winner::Blue => Winner::Red,
            w => w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    MoveCompleted {
        uid: Uid,
        from: HexCoord,
        to: HexCoord,
        voided: bool,
    },
    Shot {
        shooter: Uid,
        target: Uid,
        hit: bool,
        damage: Hp,
    },
    GuideShot {
        shooter: Uid,
        target: Uid,
        hit: bool,
        damage: Hp,
    },
    Death {
        uid: Uid,
    },
    EpisodeEnd {
        winner: Winner,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub reward_red: f64,
    pub reward_blue: f64,
    pub events: Vec<Event>,
    pub terminated: bool,
    pub winner: Winner,
}

/// Complete simulation state of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    tick: u32,
    config: Arc<ScenarioConfig>,
    operators: Vec<OperatorState>,
    rng: XorShift64Star,
    terminated: bool,
    winner: Winner,
}

/// Serializable snapshot of the dynamic part of the state.
#[derive(Serialize)]
struct Snapshot<'a> {
    tick: u32,
    operators: &'a [OperatorState],
    rng: &'a XorShift64Star,
    terminated: bool,
    winner: Winner,
}

impl EngineState {
    pub fn reset(config: Arc<ScenarioConfig>, seed: u64) -> Result<Self, EngineError> {
        config.validate()?;
        let operators = (0..ROSTER_SIZE)
            .map(|uid| {
                let op_type = config.roster_type(uid);
                OperatorState {
                    uid,
                    color: color_of(uid),
                    op_type,
                    blood: config.spec(op_type).blood_max,
                    pos: config.init_hex(uid),
                    move_ticks_remaining: 0,
                    move_time: 0,
                    stop_time: 0,
                    shoot_cooling_time: 0,
                    pending_move_dir: None,
                    alive: true,
                }
            })
            .collect();
        let mut st = Self {
            tick: 0,
            rng: XorShift64Star::new(derive_seed(seed, 0)),
            config,
            operators,
            terminated: false,
            winner: Winner::None,
        };
        if st.config.max_ticks() == 0 {
            st.terminated = true;
            st.winner = st.compare_blood();
        }
        Ok(st)
    }

    pub fn tick(&self) -> u32 {
        self.tick
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn config_arc(&self) -> &Arc<ScenarioConfig> {
        &self.config
    }

    pub fn operators(&self) -> &[OperatorState] {
        &self.operators
    }

    pub fn operator(&self, uid: Uid) -> Result<&OperatorState, EngineError> {
        self.operators.get(uid).ok_or(EngineError::UnknownUid(uid))
    }

    /// Direct access for constructing test poses and edited scenarios.
    /// Callers are responsible for keeping the operator invariants.
    pub fn operator_mut(&mut self, uid: Uid) -> Result<&mut OperatorState, EngineError> {
        self.operators.get_mut(uid).ok_or(EngineError::UnknownUid(uid))
    }

    pub fn spec_of(&self, uid: Uid) -> &OperatorSpec {
        self.config.spec(self.operators[uid].op_type)
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    pub fn winner(&self) -> Winner {
        self.winner
    }

    pub fn team_blood(&self, color: Color) -> Hp {
        Hp::from_tenths(
            self.operators
                .iter()
                .filter(|o| o.color == color)
                .map(|o| o.blood.tenths())
                .sum(),
        )
    }

    pub fn team_alive(&self, color: Color) -> bool {
        self.operators.iter().any(|o| o.color == color && o.alive)
    }

    /// 64-bit FNV-1a digest over the dynamic state.
    pub fn digest(&self) -> u64 {
        let snap = Snapshot {
            tick: self.tick,
            operators: &self.operators,
            rng: &self.rng,
            terminated: self.terminated,
            winner: self.winner,
        };
        let mut h = FnvHasher::default();
        h.write(&serde_json::to_vec(&snap).expect("snapshot serializes"));
        h.finish()
    }

    fn check_uid(&self, uid: Uid) -> Result<(), EngineError> {
        if uid < self.operators.len() {
            Ok(())
        } else {
            Err(EngineError::UnknownUid(uid))
        }
    }

    /// Whether `observer` sees `target`. The radius belongs to the target
    /// and is halved (compared as a real) when the target is on special terrain.
    pub fn visibility(&self, observer: Uid, target: Uid) -> Result<bool, EngineError> {
        self.check_uid(observer)?;
        self.check_uid(target)?;
        Ok(self.sees(observer, target))
    }

    fn sees(&self, observer: Uid, target: Uid) -> bool {
        let (o, t) = (&self.operators[observer], &self.operators[target]);
        if !o.alive || !t.alive {
            return false;
        }
        if o.color == t.color {
            return true;
        }
        let d = hex_distance(o.pos, t.pos);
        let radius = self.config.spec(t.op_type).observed_distance;
        if self.config.map().is_special(t.pos) {
            2 * d <= radius
        } else {
            d <= radius
        }
    }

    /// Range check only; visibility is separate so guided shots can skip it.
    pub fn can_attack(&self, shooter: Uid, target: Uid) -> Result<bool, EngineError> {
        self.check_uid(shooter)?;
        self.check_uid(target)?;
        if color_of(shooter) == color_of(target) {
            return Err(EngineError::SameTeam(shooter, target));
        }
        Ok(self.in_range(shooter, target))
    }

    fn in_range(&self, shooter: Uid, target: Uid) -> bool {
        let (s, t) = (&self.operators[shooter], &self.operators[target]);
        if !s.alive || !t.alive {
            return false;
        }
        let range = match self.config.range_semantics() {
            RangeSemantics::Target => self.config.spec(t.op_type).attacked_distance,
            RangeSemantics::Shooter => self.config.spec(s.op_type).attacked_distance,
        };
        hex_distance(s.pos, t.pos) <= range
    }

    fn occupied(&self, c: HexCoord) -> bool {
        self.operators.iter().any(|o| o.alive && o.pos == c)
    }

    fn ready_to_fire(&self, uid: Uid) -> bool {
        let o = &self.operators[uid];
        let spec = self.spec_of(uid);
        o.shoot_cooling_time == 0 && (spec.prep_time == 0 || o.stop_time >= spec.prep_time)
    }

    pub fn available_actions(&self, uid: Uid) -> Result<AvailabilityMask, EngineError> {
        self.check_uid(uid)?;
        Ok(self.mask(uid))
    }

    fn mask(&self, uid: Uid) -> AvailabilityMask {
        let o = &self.operators[uid];
        if self.terminated || !o.alive || o.is_moving() {
            return AvailabilityMask::empty_only();
        }
        let mut m = [false; ACTION_COUNT];
        let map = self.config.map();
        for d in Direction::ALL {
            let n = o.pos.step(d);
            m[MOVE_BASE + d.index()] = map.in_bounds(n) && !self.occupied(n);
        }
        let spec = self.spec_of(uid);
        let ready = self.ready_to_fire(uid);
        let enemy = o.color.opponent();
        for slot in 0..TEAM_SIZE {
            let e = uid_of(enemy, slot);
            if !ready || !self.in_range(uid, e) {
                continue;
            }
            m[SHOOT_BASE + slot] = self.sees(uid, e);
            m[GUIDE_BASE + slot] = self.config.guide_shoot()
                && spec.can_guide_shoot
                && o.stop_time >= spec.prep_time
                && self
                    .operators
                    .iter()
                    .any(|a| a.color == o.color && a.alive && self.sees(a.uid, e));
        }
        m[STOP_INDEX] = true;
        AvailabilityMask(m)
    }

    /// Resolves one shot drawing `u` from the engine's stream.
    pub fn resolve_shoot(&mut self, shooter: Uid, target: Uid, guided: bool) -> Result<Vec<Event>, EngineError> {
        self.check_uid(shooter)?;
        self.check_uid(target)?;
        let u = self.rng.next_f64();
        Ok(self.resolve_shot_with_roll(shooter, target, guided, u))
    }

    /// Resolves one shot with a given uniform draw `u`: hit iff `u < p`.
    /// Returns the shot event and, if the target dies, a death event.
    pub fn resolve_shot_with_roll(&mut self, shooter: Uid, target: Uid, guided: bool, u: f64) -> Vec<Event> {
        let target_type = self.operators[target].op_type;
        let spec = self.spec_of(shooter);
        let (p, dmg) = spec.weapon_against(target_type);
        let cooldown = spec.cooldown;
        let hit = u < p;
        self.operators[shooter].shoot_cooling_time = cooldown;
        let t = &mut self.operators[target];
        let before = t.blood;
        if hit {
            t.blood = t.blood.saturating_sub(dmg);
        }
        let damage = Hp::from_tenths(before.tenths() - t.blood.tenths());
        let mut events = vec![if guided {
            Event::GuideShot {
                shooter,
                target,
                hit,
                damage,
            }
        } else {
            Event::Shot {
                shooter,
                target,
                hit,
                damage,
            }
        }];
        if t.alive && t.blood == Hp::ZERO {
            t.alive = false;
            t.move_ticks_remaining = 0;
            t.pending_move_dir = None;
            events.push(Event::Death { uid: target });
        }
        events
    }

    /// Checks a joint action against the current masks without mutating.
    pub fn validate_actions(&self, actions: &ActionMap) -> Result<[AvailabilityMask; ROSTER_SIZE], EngineError> {
        if self.terminated {
            return Err(EngineError::Terminated);
        }
        let masks: [AvailabilityMask; ROSTER_SIZE] = std::array::from_fn(|uid| self.mask(uid));
        for (&uid, &action) in actions {
            self.check_uid(uid)?;
            if !masks[uid].allows(action, uid) {
                return Err(EngineError::IllegalAction {
                    uid,
                    action,
                    tick: self.tick,
                });
            }
        }
        for (uid, m) in masks.iter().enumerate() {
            if !m.is_empty_only() && !actions.contains_key(&uid) {
                return Err(EngineError::MissingAction { uid, tick: self.tick });
            }
        }
        Ok(masks)
    }

    /// Advances one tick. On error the state is unchanged.
    pub fn step(&mut self, actions: &ActionMap) -> Result<StepResult, EngineError> {
        self.validate_actions(actions)?;
        let blood_before = [self.team_blood(Color::Red), self.team_blood(Color::Blue)];

        // One uniform per roster slot, drawn every tick.
        let mut rolls = [0.0; ROSTER_SIZE];
        for r in rolls.iter_mut() {
            *r = self.rng.next_f64();
        }
        if self.config.mirrored_rolls() {
            rolls.rotate_left(TEAM_SIZE);
        }

        let mut events = Vec::new();
        for (&uid, &action) in actions {
            match action {
                Action::Move(dir) => {
                    let ticks = self.spec_of(uid).ticks_per_hex();
                    let o = &mut self.operators[uid];
                    o.pending_move_dir = Some(dir);
                    o.move_ticks_remaining = ticks;
                    o.move_time = 0;
                    o.stop_time = 0;
                }
                Action::Stop => {
                    let o = &mut self.operators[uid];
                    o.pending_move_dir = None;
                    o.move_time = 0;
                }
                _ => {}
            }
        }
        // Shots were declared simultaneously: an operator killed earlier in
        // this loop still fires.
        for (&uid, &action) in actions {
            match action {
                Action::Shoot(target) => {
                    events.extend(self.resolve_shot_with_roll(uid, target, false, rolls[uid]));
                }
                Action::GuideShoot(target) => {
                    events.extend(self.resolve_shot_with_roll(uid, target, true, rolls[uid]));
                }
                _ => {}
            }
        }

        for o in self.operators.iter_mut().filter(|o| o.alive) {
            if o.move_ticks_remaining > 0 {
                o.move_ticks_remaining -= 1;
                o.move_time += 1;
            } else {
                o.stop_time += 1;
            }
            o.shoot_cooling_time = o.shoot_cooling_time.saturating_sub(1);
        }

        // A landing is voided if its target hex is held by a living operator
        // or if more than one operator lands there this tick.
        let landings: Vec<(Uid, HexCoord)> = self
            .operators
            .iter()
            .filter(|o| o.alive && o.move_ticks_remaining == 0)
            .filter_map(|o| o.pending_move_dir.map(|d| (o.uid, o.pos.step(d))))
            .collect();
        for &(uid, to) in &landings {
            let contested = landings.iter().filter(|(_, t)| *t == to).count() > 1;
            let voided = contested || self.occupied(to) || !self.config.map().in_bounds(to);
            let o = &mut self.operators[uid];
            let from = o.pos;
            o.pending_move_dir = None;
            o.move_time = 0;
            o.stop_time = 0;
            if !voided {
                o.pos = to;
            }
            events.push(Event::MoveCompleted {
                uid,
                from,
                to: o.pos,
                voided,
            });
        }

        self.tick += 1;

        let lost_red = blood_before[0].tenths() - self.team_blood(Color::Red).tenths();
        let lost_blue = blood_before[1].tenths() - self.team_blood(Color::Blue).tenths();
        let mut reward_red = (lost_blue as f64 - lost_red as f64) / 10.0;
        if self.config.normalize_reward() {
            reward_red /= self.initial_blood_scale();
        }

        let red_alive = self.team_alive(Color::Red);
        let blue_alive = self.team_alive(Color::Blue);
        let winner = match (red_alive, blue_alive) {
            (false, false) => Winner::Draw,
            (true, false) => Winner::Red,
            (false, true) => Winner::Blue,
            (true, true) if self.tick >= self.config.max_ticks() => self.compare_blood(),
            _ => Winner::None,
        };
        if winner != Winner::None {
            self.terminated = true;
            self.winner = winner;
            events.push(Event::EpisodeEnd { winner });
        }

        Ok(StepResult {
            reward_red,
            reward_blue: -reward_red,
            events,
            terminated: self.terminated,
            winner: self.winner,
        })
    }

    fn initial_blood_scale(&self) -> f64 {
        let total = |c: Color| -> u32 {
            (0..TEAM_SIZE)
                .map(|s| self.config.spec(self.config.roster_type(uid_of(c, s))).blood_max.tenths())
                .sum()
        };
        total(Color::Red).max(total(Color::Blue)) as f64 / 10.0
    }

    fn compare_blood(&self) -> Winner {
        let (r, b) = (self.team_blood(Color::Red), self.team_blood(Color::Blue));
        match r.cmp(&b) {
            std::cmp::Ordering::Greater => Winner::Red,
            std::cmp::Ordering::Less => Winner::Blue,
            std::cmp::Ordering::Equal => Winner::Draw,
        }
    }

    /// Operators with at least one non-Empty action this tick.
    pub fn deciding_agents(&self) -> Vec<Uid> {
        (0..ROSTER_SIZE).filter(|&u| !self.mask(u).is_empty_only()).collect()
    }
}

#[cfg(test)]
mod tests;
