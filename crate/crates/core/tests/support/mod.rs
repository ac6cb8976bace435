#![allow(dead_code)]

use std::sync::Arc;

use poac_core::engine::{color_of, Action, ActionMap, EngineState, ROSTER_SIZE};
use poac_core::rng::XorShift64Star;
use poac_core::scenarios::{ScenarioConfig, BUNDLED_COUNT};

pub fn bundled(id: u8) -> Arc<ScenarioConfig> {
    Arc::new(ScenarioConfig::bundled(id).unwrap())
}

/// Uniformly random legal joint action.
pub fn random_joint(st: &EngineState, rng: &mut XorShift64Star) -> ActionMap {
    (0..ROSTER_SIZE)
        .map(|u| {
            let m = st.available_actions(u).unwrap();
            let avail: Vec<usize> = m.available_indices().collect();
            let i = avail[rng.below(avail.len())];
            (u, Action::from_index(i, color_of(u)).unwrap())
        })
        .collect()
}

/// A live mid-episode state: random scenario, random seed, up to
/// `max_warmup` ticks of random play.
pub fn random_state(rng: &mut XorShift64Star, max_warmup: usize) -> EngineState {
    loop {
        let id = rng.below(BUNDLED_COUNT as usize) as u8;
        if let Some(st) = random_state_in(bundled(id), rng, max_warmup) {
            return st;
        }
    }
}

pub fn random_state_in(cfg: Arc<ScenarioConfig>, rng: &mut XorShift64Star, max_warmup: usize) -> Option<EngineState> {
    let mut st = EngineState::reset(cfg, rng.next_u64()).unwrap();
    let warmup = rng.below(max_warmup + 1);
    for _ in 0..warmup {
        if st.terminated() {
            return None;
        }
        let a = random_joint(&st, rng);
        st.step(&a).unwrap();
    }
    (!st.terminated()).then_some(st)
}
