//! Simulation core for a two-team, partially observable, asynchronous hex
//! wargame: map geometry, the tick engine, per-agent observations, scripted
//! opponents, scenario configuration and replays.

pub mod batch;
pub mod bots;
pub mod engine;
pub mod episode;
pub mod hexgrid;
pub mod observation;
pub mod replay;
pub mod rng;
pub mod scenarios;

pub use engine::{Action, ActionMap, AvailabilityMask, EngineError, EngineState, Event, StepResult, Winner};
pub use hexgrid::{GameMap, HexCoord};
pub use scenarios::ScenarioConfig;

/// Version string recorded in replays; bump when simulation semantics change.
pub const ENGINE_VERSION: &str = concat!("poac-core/", env!("CARGO_PKG_VERSION"));
