//! Built-in scripted opponents.
//!
//! * KAI0 rushes the map center and fires at the highest-priority target.
//! * KAI1 hides chariot and infantry on special terrain with the tank
//!   escorting the chariot, firing opportunistically.
//! * KAI2 parks the infantry on special terrain as a spotter, sets the
//!   chariot up within range of the center and prefers guided shots, and
//!   sends the tank to the center to draw fire.
//!
//! Bots read only their own team's local observations, masks and the
//! public scenario settings. Every tie is broken in a team frame: blue
//! sees the board row-flipped, so a color-swapped match on the mirrored
//! scenario plays out as the exact mirror image.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{
    Action, ActionMap, AvailabilityMask, Color, OpType, Uid, EMPTY_INDEX, GUIDE_BASE, SHOOT_BASE, TEAM_SIZE,
};
use crate::hexgrid::{hex_distance, Direction, GameMap, HexCoord};
use crate::observation::{decode_observation, AllyView, LocalView, Normalizer, ObservationVector};
use crate::rng::XorShift64Star;
use crate::scenarios::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BotKind {
    #[serde(rename = "KAI0")]
    Kai0,
    #[serde(rename = "KAI1")]
    Kai1,
    #[serde(rename = "KAI2")]
    Kai2,
    #[serde(rename = "random")]
    Random,
}

impl fmt::Display for BotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BotKind::Kai0 => "KAI0",
            BotKind::Kai1 => "KAI1",
            BotKind::Kai2 => "KAI2",
            BotKind::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown bot {0:?} (expected KAI0, KAI1, KAI2 or random)")]
pub struct UnknownBot(pub String);

impl FromStr for BotKind {
    type Err = UnknownBot;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "KAI0" => Ok(BotKind::Kai0),
            "KAI1" => Ok(BotKind::Kai1),
            "KAI2" => Ok(BotKind::Kai2),
            "RANDOM" => Ok(BotKind::Random),
            _ => Err(UnknownBot(s.to_string())),
        }
    }
}

/// One deciding agent's inputs for this tick.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentInput {
    pub uid: Uid,
    pub obs: ObservationVector,
    pub mask: AvailabilityMask,
}

/// Anything that maps a team's per-agent inputs to a joint action.
pub trait Policy: Send {
    fn decide(&mut self, inputs: &[AgentInput]) -> ActionMap;
}

/// Target priority: chariot first, then tank, then infantry.
pub fn type_priority(t: OpType) -> u8 {
    match t {
        OpType::Chariot => 0,
        OpType::Tank => 1,
        OpType::Infantry => 2,
    }
}

/// Picks the enemy slot to fire at among `slots`: by type priority, then
/// lowest remaining blood fraction, then lowest slot.
pub fn pick_target(slots: &[(usize, OpType, f64)]) -> Option<usize> {
    slots
        .iter()
        .min_by(|a, b| {
            type_priority(a.1)
                .cmp(&type_priority(b.1))
                .then(a.2.total_cmp(&b.2))
                .then(a.0.cmp(&b.0))
        })
        .map(|s| s.0)
}

/// Team-relative view of the board used for every tie-break.
#[derive(Debug, Clone, Copy)]
struct Frame {
    flip: bool,
    rows: i32,
    cols: i32,
    order: [Direction; 6],
}

impl Frame {
    fn new(color: Color, map: &GameMap) -> Self {
        let flip = color == Color::Blue;
        let order = if flip {
            Direction::ALL.map(Direction::row_flipped)
        } else {
            Direction::ALL
        };
        Self {
            flip,
            rows: map.rows(),
            cols: map.cols(),
            order,
        }
    }

    fn key(&self, c: HexCoord) -> i32 {
        let row = if self.flip { self.rows - 1 - c.row } else { c.row };
        row * self.cols + c.col
    }
}

/// Fixed scenario facts a bot may consult.
#[derive(Debug, Clone)]
pub struct BotContext {
    pub color: Color,
    pub map: Arc<GameMap>,
    pub norm: Normalizer,
    pub guide_shoot: bool,
    pub enemy_roster: [OpType; TEAM_SIZE],
}

impl BotContext {
    pub fn new(cfg: &ScenarioConfig, color: Color) -> Self {
        let enemy = color.opponent();
        Self {
            color,
            map: Arc::new(cfg.map().clone()),
            norm: Normalizer {
                cells: cfg.map().cell_count(),
                max_ticks: cfg.max_ticks(),
            },
            guide_shoot: cfg.guide_shoot(),
            enemy_roster: std::array::from_fn(|k| cfg.roster_type(crate::engine::uid_of(enemy, k))),
        }
    }
}

/// A scripted team controller.
#[derive(Debug, Clone)]
pub struct BotPolicy {
    kind: BotKind,
    ctx: BotContext,
    frame: Frame,
    destinations: BTreeMap<Uid, HexCoord>,
    rng: XorShift64Star,
}

struct TeamView {
    allies: [Option<AllyView>; TEAM_SIZE],
    enemy_blood: [f64; TEAM_SIZE],
}

impl BotPolicy {
    pub fn new(kind: BotKind, cfg: &ScenarioConfig, color: Color, seed: u64) -> Self {
        let ctx = BotContext::new(cfg, color);
        let frame = Frame::new(color, &ctx.map);
        Self {
            kind,
            ctx,
            frame,
            destinations: BTreeMap::new(),
            rng: XorShift64Star::new(seed),
        }
    }

    pub fn kind(&self) -> BotKind {
        self.kind
    }

    pub fn color(&self) -> Color {
        self.ctx.color
    }

    fn team_view(&self, inputs: &[AgentInput]) -> TeamView {
        let views: Vec<LocalView> = inputs
            .iter()
            .map(|i| decode_observation(&i.obs, self.ctx.color, self.ctx.map.cols(), &self.ctx.norm))
            .collect();
        let allies = views.first().map(|v| v.allies.clone()).unwrap_or_default();
        let mut enemy_blood = [1.0; TEAM_SIZE];
        for v in &views {
            for (k, e) in v.enemies.iter().enumerate() {
                if let Some(e) = e {
                    enemy_blood[k] = e.blood_frac;
                }
            }
        }
        TeamView {
            allies,
            enemy_blood,
        }
    }

    fn ally(&self, team: &TeamView, uid: Uid) -> Option<AllyView> {
        team.allies.iter().flatten().find(|a| a.uid == uid).cloned()
    }

    fn best_in(&self, team: &TeamView, mask: &AvailabilityMask, base: usize) -> Option<usize> {
        let slots: Vec<(usize, OpType, f64)> = (0..TEAM_SIZE)
            .filter(|&k| mask.get(base + k))
            .map(|k| (k, self.ctx.enemy_roster[k], team.enemy_blood[k]))
            .collect();
        pick_target(&slots)
    }

    fn shoot(&self, team: &TeamView, mask: &AvailabilityMask) -> Option<Action> {
        let k = self.best_in(team, mask, SHOOT_BASE)?;
        Action::from_index(SHOOT_BASE + k, self.ctx.color)
    }

    fn guide_shoot(&self, team: &TeamView, mask: &AvailabilityMask) -> Option<Action> {
        let k = self.best_in(team, mask, GUIDE_BASE)?;
        Action::from_index(GUIDE_BASE + k, self.ctx.color)
    }

    /// Move one step toward `dest`, or hold if there or blocked.
    fn go_to(&self, pos: HexCoord, dest: HexCoord, mask: &AvailabilityMask) -> Action {
        match self.ctx.map.first_step(pos, dest, &self.frame.order) {
            Some(d) if mask.get(d.index()) => Action::Move(d),
            _ => Action::Stop,
        }
    }

    fn nearest_special(&self, from: HexCoord, exclude: &[HexCoord]) -> Option<HexCoord> {
        self.ctx
            .map
            .special_cells()
            .filter(|c| !exclude.contains(c))
            .min_by_key(|&c| (hex_distance(from, c), self.frame.key(c)))
    }

    /// Chariot firing position for KAI2: special terrain within six hexes
    /// of the center if any, else the ring at distance six.
    fn chariot_post(&self, from: HexCoord, exclude: &[HexCoord]) -> HexCoord {
        let center = self.ctx.map.center();
        let map = &self.ctx.map;
        let pick = |cells: Vec<HexCoord>| {
            cells
                .into_iter()
                .filter(|c| !exclude.contains(c))
                .min_by_key(|&c| (hex_distance(from, c), self.frame.key(c)))
        };
        let special: Vec<HexCoord> = map
            .special_cells()
            .filter(|&c| hex_distance(c, center) <= 6)
            .collect();
        pick(special)
            .or_else(|| pick(map.cells().filter(|&c| hex_distance(c, center) == 6).collect()))
            .unwrap_or(center)
    }

    /// Destination remembered for `uid`, chosen on first use.
    fn destination_for(
        &mut self,
        uid: Uid,
        choose: impl FnOnce(&Self, &[HexCoord]) -> Option<HexCoord>,
    ) -> Option<HexCoord> {
        if let Some(&d) = self.destinations.get(&uid) {
            return Some(d);
        }
        let taken: Vec<HexCoord> = self.destinations.values().copied().collect();
        let d = choose(self, &taken)?;
        self.destinations.insert(uid, d);
        Some(d)
    }

    fn kai0_one(&self, team: &TeamView, input: &AgentInput) -> Action {
        if input.mask.is_empty_only() {
            return Action::Empty;
        }
        if let Some(a) = self.shoot(team, &input.mask) {
            return a;
        }
        let Some(me) = self.ally(team, input.uid) else {
            return Action::Stop;
        };
        // Target in range but the weapon is not ready yet (prep or cooldown):
        // hold position so the stop timer can build up.
        if me.can_attack.iter().any(|&a| a) && input.mask.allows(Action::Stop, input.uid) {
            return Action::Stop;
        }
        self.go_to(me.pos, self.ctx.map.center(), &input.mask)
    }

    /// KAI0: fire if possible, hold when a target is in range, else head for the center.
    pub fn kai0_decide(&mut self, inputs: &[AgentInput]) -> ActionMap {
        let team = self.team_view(inputs);
        inputs.iter().map(|i| (i.uid, self.kai0_one(&team, i))).collect()
    }

    fn hide_one(&mut self, input: &AgentInput, me: &AllyView) -> Action {
        let pos = me.pos;
        match self.destination_for(me.uid, |s, taken| s.nearest_special(pos, taken)) {
            Some(dest) if dest != pos => self.go_to(pos, dest, &input.mask),
            _ => Action::Stop,
        }
    }

    fn escort_one(&self, team: &TeamView, input: &AgentInput, me: &AllyView) -> Action {
        let chariot = team
            .allies
            .iter()
            .flatten()
            .find(|a| a.op_type == OpType::Chariot && a.uid != me.uid);
        let Some(chariot) = chariot else {
            return self.kai0_one(team, input);
        };
        if hex_distance(me.pos, chariot.pos) <= 1 {
            return Action::Stop;
        }
        let spot = self
            .frame
            .order
            .iter()
            .map(|&d| chariot.pos.step(d))
            .filter(|&c| self.ctx.map.in_bounds(c))
            .min_by_key(|&c| hex_distance(me.pos, c));
        match spot {
            Some(s) => self.go_to(me.pos, s, &input.mask),
            None => Action::Stop,
        }
    }

    /// KAI1: ambush from special terrain; falls back to KAI0 on maps
    /// without special cells.
    pub fn kai1_decide(&mut self, inputs: &[AgentInput]) -> ActionMap {
        if !self.ctx.map.has_special() {
            return self.kai0_decide(inputs);
        }
        let team = self.team_view(inputs);
        let mut out = ActionMap::new();
        for input in inputs {
            let action = if input.mask.is_empty_only() {
                Action::Empty
            } else if let Some(a) = self.shoot(&team, &input.mask) {
                a
            } else if let Some(me) = self.ally(&team, input.uid) {
                match me.op_type {
                    OpType::Tank => self.escort_one(&team, input, &me),
                    _ => self.hide_one(input, &me),
                }
            } else {
                Action::Stop
            };
            out.insert(input.uid, action);
        }
        out
    }

    /// KAI2: spotter infantry, guided-fire chariot, rushing tank; falls
    /// back to KAI1 when guided shots are disabled.
    pub fn kai2_decide(&mut self, inputs: &[AgentInput]) -> ActionMap {
        if !self.ctx.guide_shoot {
            return self.kai1_decide(inputs);
        }
        let team = self.team_view(inputs);
        let mut out = ActionMap::new();
        for input in inputs {
            let action = if input.mask.is_empty_only() {
                Action::Empty
            } else if let Some(me) = self.ally(&team, input.uid) {
                match me.op_type {
                    OpType::Tank => self.kai0_one(&team, input),
                    OpType::Chariot => {
                        if let Some(a) = self
                            .guide_shoot(&team, &input.mask)
                            .or_else(|| self.shoot(&team, &input.mask))
                        {
                            a
                        } else {
                            let pos = me.pos;
                            let dest = self
                                .destination_for(me.uid, |s, taken| Some(s.chariot_post(pos, taken)))
                                .unwrap_or(pos);
                            if dest == pos {
                                Action::Stop
                            } else {
                                self.go_to(pos, dest, &input.mask)
                            }
                        }
                    }
                    OpType::Infantry => match self.shoot(&team, &input.mask) {
                        Some(a) => a,
                        None => self.hide_one(input, &me),
                    },
                }
            } else {
                Action::Stop
            };
            out.insert(input.uid, action);
        }
        out
    }

    /// Uniform choice among the available actions.
    pub fn random_decide(&mut self, inputs: &[AgentInput]) -> ActionMap {
        inputs
            .iter()
            .map(|i| {
                let avail: Vec<usize> = i.mask.available_indices().collect();
                let idx = if avail.is_empty() {
                    EMPTY_INDEX
                } else {
                    avail[self.rng.below(avail.len())]
                };
                let a = Action::from_index(idx, self.ctx.color).expect("valid index");
                (i.uid, a)
            })
            .collect()
    }
}

impl Policy for BotPolicy {
    fn decide(&mut self, inputs: &[AgentInput]) -> ActionMap {
        match self.kind {
            BotKind::Kai0 => self.kai0_decide(inputs),
            BotKind::Kai1 => self.kai1_decide(inputs),
            BotKind::Kai2 => self.kai2_decide(inputs),
            BotKind::Random => self.random_decide(inputs),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn priority_table_matches_enumeration() {
        // Oracle: enumerate every subset of {tank, chariot, infantry} and
        // the expected winner by the written rule.
        let roster = [OpType::Tank, OpType::Chariot, OpType::Infantry];
        for bits in 1u8..8 {
            let slots: Vec<(usize, OpType, f64)> = (0..3)
                .filter(|k| bits & (1 << k) != 0)
                .map(|k| (k, roster[k], 1.0))
                .collect();
            let expected = if bits & 0b010 != 0 {
                1
            } else if bits & 0b001 != 0 {
                0
            } else {
                2
            };
            assert_eq!(pick_target(&slots), Some(expected), "subset {bits:03b}");
        }
        assert_eq!(pick_target(&[]), None);
    }

    #[test]
    fn ties_go_to_lower_blood_then_slot() {
        let slots = [(0, OpType::Tank, 0.5), (1, OpType::Tank, 0.3), (2, OpType::Tank, 0.3)];
        assert_eq!(pick_target(&slots), Some(1));
    }

    #[test]
    fn bot_names_parse() {
        assert_eq!("KAI0".parse::<BotKind>().unwrap(), BotKind::Kai0);
        assert_eq!("kai2".parse::<BotKind>().unwrap(), BotKind::Kai2);
        assert_eq!("random".parse::<BotKind>().unwrap(), BotKind::Random);
        assert!("KAI9".parse::<BotKind>().is_err());
        assert_eq!(BotKind::Kai1.to_string(), "KAI1");
    }
}
