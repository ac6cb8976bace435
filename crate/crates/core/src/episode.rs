//! Running whole episodes between two team policies.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bots::{AgentInput, BotKind, BotPolicy, Policy};
use crate::engine::{color_of, Action, ActionMap, Color, EngineError, EngineState, Hp, StepResult, Winner, ROSTER_SIZE};
use crate::observation::build_observation;
use crate::rng::derive_seed;
use crate::scenarios::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub winner: Winner,
    pub ticks: u32,
    pub final_blood: [Hp; ROSTER_SIZE],
    pub return_red: f64,
    pub return_blue: f64,
}

/// Inputs for every operator of `color` that has a decision this tick.
pub fn team_inputs(st: &EngineState, color: Color) -> Vec<AgentInput> {
    st.deciding_agents()
        .into_iter()
        .filter(|&u| color_of(u) == color)
        .map(|uid| AgentInput {
            uid,
            obs: build_observation(st, uid).expect("uid in roster"),
            mask: st.available_actions(uid).expect("uid in roster"),
        })
        .collect()
}

/// Seed for the bot controlling `color` in an episode seeded with `seed`.
pub fn bot_seed(seed: u64, color: Color) -> u64 {
    derive_seed(seed, 1 + color.index() as u64)
}

pub fn make_bot(kind: BotKind, cfg: &ScenarioConfig, color: Color, episode_seed: u64) -> BotPolicy {
    BotPolicy::new(kind, cfg, color, bot_seed(episode_seed, color))
}

/// Joint action of both teams for the current tick. Operators without a
/// decision submit Empty.
pub fn joint_action(st: &EngineState, red: &mut dyn Policy, blue: &mut dyn Policy) -> ActionMap {
    let mut actions = ActionMap::new();
    let red_inputs = team_inputs(st, Color::Red);
    if !red_inputs.is_empty() {
        actions.extend(red.decide(&red_inputs));
    }
    let blue_inputs = team_inputs(st, Color::Blue);
    if !blue_inputs.is_empty() {
        actions.extend(blue.decide(&blue_inputs));
    }
    for o in st.operators() {
        actions.entry(o.uid).or_insert(Action::Empty);
    }
    actions
}

/// Plays one episode to termination. `on_tick` sees the post-step state,
/// the joint action that produced it and the step result.
pub fn run_episode_with(
    st: &mut EngineState,
    red: &mut dyn Policy,
    blue: &mut dyn Policy,
    mut on_tick: impl FnMut(&EngineState, &ActionMap, &StepResult),
) -> Result<EpisodeOutcome, EngineError> {
    let (mut ret_r, mut ret_b) = (0.0, 0.0);
    while !st.terminated() {
        let actions = joint_action(st, red, blue);
        let r = st.step(&actions)?;
        ret_r += r.reward_red;
        ret_b += r.reward_blue;
        on_tick(st, &actions, &r);
    }
    Ok(EpisodeOutcome {
        winner: st.winner(),
        ticks: st.tick(),
        final_blood: std::array::from_fn(|u| st.operators()[u].blood),
        return_red: ret_r,
        return_blue: ret_b,
    })
}

/// Bot-vs-bot episode on `cfg` with `seed`.
pub fn run_bot_episode(
    cfg: Arc<ScenarioConfig>,
    seed: u64,
    red: BotKind,
    blue: BotKind,
) -> Result<EpisodeOutcome, EngineError> {
    let mut st = EngineState::reset(cfg.clone(), seed)?;
    let mut r = make_bot(red, &cfg, Color::Red, seed);
    let mut b = make_bot(blue, &cfg, Color::Blue, seed);
    run_episode_with(&mut st, &mut r, &mut b, |_, _, _| {})
}
