use std::fmt;

use serde::{Deserialize, Serialize};

use super::operator::{color_of, team_slot, uid_of, Color, Uid, TEAM_SIZE};
use crate::hexgrid::Direction;

/// Number of entries in the fixed action alphabet.
pub const ACTION_COUNT: usize = 14;
pub const MOVE_BASE: usize = 0;
pub const SHOOT_BASE: usize = 6;
pub const GUIDE_BASE: usize = 9;
pub const STOP_INDEX: usize = 12;
pub const EMPTY_INDEX: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "arg", rename_all = "snake_case")]
pub enum Action {
    Move(Direction),
    Shoot(Uid),
    GuideShoot(Uid),
    Stop,
    Empty,
}

impl Action {
    /// Index in the 14-entry alphabet for an action taken by `actor`.
    /// Shoot targets are encoded by enemy team slot.
    pub fn index(self, actor: Uid) -> Option<usize> {
        let enemy = color_of(actor).opponent();
        match self {
            Action::Move(d) => Some(MOVE_BASE + d.index()),
            Action::Shoot(t) if color_of(t) == enemy && t < 2 * TEAM_SIZE => {
                Some(SHOOT_BASE + team_slot(t))
            }
            Action::GuideShoot(t) if color_of(t) == enemy && t < 2 * TEAM_SIZE => {
                Some(GUIDE_BASE + team_slot(t))
            }
            Action::Stop => Some(STOP_INDEX),
            Action::Empty => Some(EMPTY_INDEX),
            _ => None,
        }
    }

    pub fn from_index(index: usize, actor_color: Color) -> Option<Action> {
        let enemy = actor_color.opponent();
        Some(match index {
            0..=5 => Action::Move(Direction::from_index(index)?),
            6..=8 => Action::Shoot(uid_of(enemy, index - SHOOT_BASE)),
            9..=11 => Action::GuideShoot(uid_of(enemy, index - GUIDE_BASE)),
            STOP_INDEX => Action::Stop,
            EMPTY_INDEX => Action::Empty,
            _ => return None,
        })
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Move(d) => write!(f, "move:{d:?}"),
            Action::Shoot(t) => write!(f, "shoot:{t}"),
            Action::GuideShoot(t) => write!(f, "guide_shoot:{t}"),
            Action::Stop => f.write_str("stop"),
            Action::Empty => f.write_str("empty"),
        }
    }
}

/// Legal-action flags aligned with the fixed alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AvailabilityMask(pub [bool; ACTION_COUNT]);

impl AvailabilityMask {
    pub fn empty_only() -> Self {
        let mut m = [false; ACTION_COUNT];
        m[EMPTY_INDEX] = true;
        AvailabilityMask(m)
    }

    pub fn is_empty_only(&self) -> bool {
        self.0
            .iter()
            .enumerate()
            .all(|(i, &v)| v == (i == EMPTY_INDEX))
    }

    pub fn get(&self, index: usize) -> bool {
        self.0.get(index).copied().unwrap_or(false)
    }

    pub fn allows(&self, action: Action, actor: Uid) -> bool {
        action.index(actor).is_some_and(|i| self.0[i])
    }

    pub fn available_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| i)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&v| v).count()
    }

    pub fn as_f64(&self) -> [f64; ACTION_COUNT] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }
}
