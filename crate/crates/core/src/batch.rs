//! Many independent episodes at once. With the `parallel` feature the work
//! is spread over rayon's pool; without it the same code runs in order.
//! Results come back in input order either way, so both builds agree.

use std::sync::Arc;

use crate::bots::BotKind;
use crate::engine::EngineError;
use crate::episode::{run_bot_episode, EpisodeOutcome};
use crate::rng::derive_seed;
use crate::scenarios::ScenarioConfig;

/// Seed of episode `index` in a batch started from `base_seed`.
pub fn episode_seed(base_seed: u64, index: u64) -> u64 {
    derive_seed(base_seed, index)
}

/// How a batch is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon's global pool. Only present with the `parallel` feature.
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return Execution::Parallel;
        #[cfg(not(feature = "parallel"))]
        return Execution::Sequential;
    }
}

/// Order-preserving map over `items`.
pub fn map_ordered<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
    }
}

/// Plays one bot-vs-bot episode per seed.
pub fn run_batch(
    exec: Execution,
    cfg: Arc<ScenarioConfig>,
    red: BotKind,
    blue: BotKind,
    seeds: &[u64],
) -> Result<Vec<EpisodeOutcome>, EngineError> {
    map_ordered(exec, seeds, |&s| run_bot_episode(cfg.clone(), s, red, blue))
        .into_iter()
        .collect()
}
