use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::hexgrid::{Direction, HexCoord};

/// Health or damage in fixed-point tenths.
///
/// Every blood and damage figure in the built-in operator tables is a
/// multiple of 0.1, so holding them as integers keeps damage application
/// exact and independent of the order shots land in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hp(u32);

impl Hp {
    pub const ZERO: Hp = Hp(0);

    pub const fn from_tenths(t: u32) -> Self {
        Hp(t)
    }

    pub fn tenths(self) -> u32 {
        self.0
    }

    /// Converts a decimal value; fails unless it is a non-negative multiple of 0.1.
    pub fn from_f64(v: f64) -> Option<Self> {
        let t = (v * 10.0).round();
        if !v.is_finite() || v < 0.0 || (t - v * 10.0).abs() > 1e-6 || t > u32::MAX as f64 {
            return None;
        }
        Some(Hp(t as u32))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 10.0
    }

    pub fn saturating_sub(self, other: Hp) -> Hp {
        Hp(self.0.saturating_sub(other.0))
    }

    pub fn saturating_add(self, other: Hp) -> Hp {
        Hp(self.0.saturating_add(other.0))
    }
}

impl fmt::Display for Hp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl Serialize for Hp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Hp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Hp::from_f64(v).ok_or_else(|| {
            serde::de::Error::custom(format!("{v} is not a non-negative multiple of 0.1"))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpType {
    Tank = 0,
    Chariot = 1,
    Infantry = 2,
}

impl OpType {
    pub const ALL: [OpType; 3] = [OpType::Tank, OpType::Chariot, OpType::Infantry];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn is_vehicle(self) -> bool {
        !matches!(self, OpType::Infantry)
    }
}

impl fmt::Display for OpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpType::Tank => "tank",
            OpType::Chariot => "chariot",
            OpType::Infantry => "infantry",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red = 0,
    Blue = 1,
}

impl Color {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn opponent(self) -> Color {
        match self {
            Color::Red => Color::Blue,
            Color::Blue => Color::Red,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Color::Red => "red",
            Color::Blue => "blue",
        })
    }
}

/// Operators per team.
pub const TEAM_SIZE: usize = 3;
/// Total roster size; uids are `0..ROSTER_SIZE`, red first.
pub const ROSTER_SIZE: usize = 2 * TEAM_SIZE;

pub type Uid = usize;

pub fn color_of(uid: Uid) -> Color {
    if uid < TEAM_SIZE {
        Color::Red
    } else {
        Color::Blue
    }
}

/// Position of `uid` inside its own team, `0..TEAM_SIZE`.
pub fn team_slot(uid: Uid) -> usize {
    uid % TEAM_SIZE
}

pub fn uid_of(color: Color, slot: usize) -> Uid {
    color.index() * TEAM_SIZE + slot
}

/// Immutable per-type attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub op_type: OpType,
    pub blood_max: Hp,
    /// Hexes per tick.
    pub speed: f64,
    /// Max distance at which this operator can be observed.
    pub observed_distance: u32,
    /// Max distance at which this operator can be attacked.
    pub attacked_distance: u32,
    pub dmg_vehicle: Hp,
    pub p_vehicle: f64,
    pub dmg_infantry: Hp,
    pub p_infantry: f64,
    pub cooldown: u32,
    pub prep_time: u32,
    pub can_guide_shoot: bool,
}

impl OperatorSpec {
    pub fn tank() -> Self {
        Self {
            op_type: OpType::Tank,
            blood_max: Hp::from_tenths(100),
            speed: 1.0,
            observed_distance: 10,
            attacked_distance: 7,
            dmg_vehicle: Hp::from_tenths(12),
            p_vehicle: 0.8,
            dmg_infantry: Hp::from_tenths(6),
            p_infantry: 0.6,
            cooldown: 1,
            prep_time: 0,
            can_guide_shoot: false,
        }
    }

    pub fn chariot() -> Self {
        Self {
            op_type: OpType::Chariot,
            blood_max: Hp::from_tenths(80),
            speed: 1.0,
            observed_distance: 10,
            attacked_distance: 7,
            dmg_vehicle: Hp::from_tenths(15),
            p_vehicle: 0.7,
            dmg_infantry: Hp::from_tenths(8),
            p_infantry: 0.6,
            cooldown: 1,
            prep_time: 2,
            can_guide_shoot: true,
        }
    }

    pub fn infantry() -> Self {
        Self {
            op_type: OpType::Infantry,
            blood_max: Hp::from_tenths(70),
            speed: 0.2,
            observed_distance: 5,
            attacked_distance: 3,
            dmg_vehicle: Hp::from_tenths(8),
            p_vehicle: 0.7,
            dmg_infantry: Hp::from_tenths(8),
            p_infantry: 0.6,
            cooldown: 1,
            prep_time: 2,
            can_guide_shoot: true,
        }
    }

    pub fn builtin(op_type: OpType) -> Self {
        match op_type {
            OpType::Tank => Self::tank(),
            OpType::Chariot => Self::chariot(),
            OpType::Infantry => Self::infantry(),
        }
    }

    pub fn ticks_per_hex(&self) -> u32 {
        ((1.0 / self.speed).round() as u32).max(1)
    }

    /// Damage and hit probability this operator deals to a target of `target` type.
    pub fn weapon_against(&self, target: OpType) -> (f64, Hp) {
        if target.is_vehicle() {
            (self.p_vehicle, self.dmg_vehicle)
        } else {
            (self.p_infantry, self.dmg_infantry)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.speed > 0.0 && self.speed <= 1.0) {
            return Err(format!("{}: speed {} outside (0, 1]", self.op_type, self.speed));
        }
        if self.blood_max == Hp::ZERO {
            return Err(format!("{}: blood_max must be positive", self.op_type));
        }
        for (name, p) in [("p_vehicle", self.p_vehicle), ("p_infantry", self.p_infantry)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{}: {name} {p} outside [0, 1]", self.op_type));
            }
        }
        Ok(())
    }
}

/// Mutable battle state of one operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorState {
    pub uid: Uid,
    pub color: Color,
    pub op_type: OpType,
    pub blood: Hp,
    pub pos: HexCoord,
    /// Ticks until the pending move completes; 0 when idle.
    pub move_ticks_remaining: u32,
    pub move_time: u32,
    pub stop_time: u32,
    pub shoot_cooling_time: u32,
    pub pending_move_dir: Option<Direction>,
    pub alive: bool,
}

impl OperatorState {
    pub fn is_moving(&self) -> bool {
        self.move_ticks_remaining > 0
    }
}
