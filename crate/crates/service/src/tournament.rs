//! Seeded bot-vs-bot tournaments producing a win-rate / episode-length table.

use std::fmt::Write as _;
use std::sync::Arc;

use poac_core::batch::{episode_seed, run_batch, Execution};
use poac_core::bots::BotKind;
use poac_core::engine::{EngineError, Winner};
use poac_core::scenarios::{load_scenario, ScenarioError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TournamentError {
    #[error("episodes must be at least 1")]
    NoEpisodes,
    #[error("scenario {0}: {1}")]
    Scenario(String, ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TournamentSpec {
    /// Scenario ids or document paths.
    pub scenarios: Vec<String>,
    /// (red, blue) pairings; every pairing is played on every scenario.
    pub pairings: Vec<(BotKind, BotKind)>,
    pub episodes: u32,
    pub base_seed: u64,
}

/// One (scenario, red, blue) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub scenario: String,
    pub red: BotKind,
    pub blue: BotKind,
    pub episodes: u32,
    pub red_wins: u32,
    pub blue_wins: u32,
    pub draws: u32,
    /// Red wins over all episodes; draws count as non-wins.
    pub red_win_rate: f64,
    pub draw_rate: f64,
    pub avg_ticks: f64,
    /// Mean length of episodes that had a winner (NaN-free: 0 if none).
    pub avg_decisive_ticks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub base_seed: u64,
    pub cells: Vec<Cell>,
}

/// Column order of the TSV output; stable across versions.
pub const TSV_COLUMNS: [&str; 11] = [
    "scenario",
    "red",
    "blue",
    "episodes",
    "red_wins",
    "blue_wins",
    "draws",
    "red_win_rate",
    "draw_rate",
    "avg_ticks",
    "avg_decisive_ticks",
];

/// Plays every cell. Every cell uses the same episode seeds, derived from
/// `base_seed` alone, so results do not depend on cell order or on how
/// many threads ran them.
pub fn run_tournament(spec: &TournamentSpec, exec: Execution) -> Result<Table, TournamentError> {
    if spec.episodes == 0 {
        return Err(TournamentError::NoEpisodes);
    }
    let seeds: Vec<u64> = (0..spec.episodes as u64).map(|i| episode_seed(spec.base_seed, i)).collect();
    let mut cells = Vec::new();
    for sc in &spec.scenarios {
        let cfg = Arc::new(load_scenario(sc).map_err(|e| TournamentError::Scenario(sc.clone(), e))?);
        for &(red, blue) in &spec.pairings {
            let outcomes = run_batch(exec, cfg.clone(), red, blue, &seeds)?;
            let n = outcomes.len() as f64;
            let count = |w: Winner| outcomes.iter().filter(|o| o.winner == w).count() as u32;
            let (rw, bw) = (count(Winner::Red), count(Winner::Blue));
            let draws = spec.episodes - rw - bw;
            let total: u64 = outcomes.iter().map(|o| o.ticks as u64).sum();
            let decisive: Vec<u64> = outcomes
                .iter()
                .filter(|o| matches!(o.winner, Winner::Red | Winner::Blue))
                .map(|o| o.ticks as u64)
                .collect();
            cells.push(Cell {
                scenario: sc.clone(),
                red,
                blue,
                episodes: spec.episodes,
                red_wins: rw,
                blue_wins: bw,
                draws,
                red_win_rate: rw as f64 / n,
                draw_rate: draws as f64 / n,
                avg_ticks: total as f64 / n,
                avg_decisive_ticks: if decisive.is_empty() {
                    0.0
                } else {
                    decisive.iter().sum::<u64>() as f64 / decisive.len() as f64
                },
            });
        }
    }
    Ok(Table {
        base_seed: spec.base_seed,
        cells,
    })
}

impl Table {
    pub fn to_tsv(&self) -> String {
        let mut s = TSV_COLUMNS.join("\t");
        s.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.1}\t{:.1}",
                c.scenario,
                c.red,
                c.blue,
                c.episodes,
                c.red_wins,
                c.blue_wins,
                c.draws,
                c.red_win_rate,
                c.draw_rate,
                c.avg_ticks,
                c.avg_decisive_ticks
            );
        }
        s
    }

    pub fn to_jsonl(&self) -> String {
        self.cells
            .iter()
            .map(|c| serde_json::to_string(c).expect("cell serializes") + "\n")
            .collect()
    }

    /// Compact "win rate / average ticks" matrix: rows are red bots, columns
    /// blue bots, one block per scenario.
    pub fn to_matrix(&self) -> String {
        let mut s = String::new();
        let mut scenarios: Vec<&str> = self.cells.iter().map(|c| c.scenario.as_str()).collect();
        scenarios.dedup();
        for sc in scenarios {
            let cells: Vec<&Cell> = self.cells.iter().filter(|c| c.scenario == sc).collect();
            let mut reds: Vec<BotKind> = cells.iter().map(|c| c.red).collect();
            let mut blues: Vec<BotKind> = cells.iter().map(|c| c.blue).collect();
            reds.dedup();
            blues.sort_by_key(|b| b.to_string());
            blues.dedup();
            let _ = writeln!(s, "scenario {sc}");
            let _ = write!(s, "{:<10}", "red\\blue");
            for b in &blues {
                let _ = write!(s, "{:>16}", b.to_string());
            }
            s.push('\n');
            for r in &reds {
                let _ = write!(s, "{:<10}", r.to_string());
                for b in &blues {
                    match cells.iter().find(|c| c.red == *r && c.blue == *b) {
                        Some(c) => {
                            let _ = write!(s, "{:>16}", format!("{:.3}/{:.1}", c.red_win_rate, c.avg_ticks));
                        }
                        None => {
                            let _ = write!(s, "{:>16}", "-");
                        }
                    }
                }
                s.push('\n');
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(episodes: u32) -> TournamentSpec {
        TournamentSpec {
            scenarios: vec!["0".into()],
            pairings: vec![(BotKind::Kai0, BotKind::Random), (BotKind::Random, BotKind::Kai0)],
            episodes,
            base_seed: 3,
        }
    }

    #[test]
    fn zero_episodes_rejected() {
        assert!(matches!(
            run_tournament(&spec(0), Execution::Sequential),
            Err(TournamentError::NoEpisodes)
        ));
    }

    #[test]
    fn counts_add_up_and_tsv_has_fixed_columns() {
        let t = run_tournament(&spec(6), Execution::default()).unwrap();
        for c in &t.cells {
            assert_eq!(c.red_wins + c.blue_wins + c.draws, c.episodes);
        }
        let tsv = t.to_tsv();
        assert_eq!(tsv.lines().next().unwrap(), TSV_COLUMNS.join("\t"));
        assert_eq!(tsv.lines().count(), 3);
        assert_eq!(t.to_jsonl().lines().count(), 2);
        assert!(t.to_matrix().contains("scenario 0"));
    }

    #[test]
    fn sequential_and_default_agree() {
        let a = run_tournament(&spec(4), Execution::Sequential).unwrap();
        let b = run_tournament(&spec(4), Execution::default()).unwrap();
        assert_eq!(a, b);
    }
}
