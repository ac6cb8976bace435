//! The work behind each CLI subcommand, callable without a process.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use poac_core::bots::BotKind;
use poac_core::engine::Color;
use poac_core::episode::{make_bot, run_episode_with, EpisodeOutcome};
use poac_core::hexgrid::{load_map, save_map, GameMap};
use poac_core::observation::{global_state_layout, observation_layout, FeatureField};
use poac_core::replay::{read_replay, record_episode, summarize, verify, write_replay, LoadedReplay, VerifyReport};
use poac_core::scenarios::{load_scenario, ScenarioConfig, Teams};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Tsv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayReport {
    pub scenario: String,
    pub seed: u64,
    pub red: BotKind,
    pub blue: BotKind,
    #[serde(flatten)]
    pub outcome: EpisodeOutcome,
}

/// Plays one bot-vs-bot episode, optionally recording it.
pub fn play(scenario: &str, seed: u64, red: BotKind, blue: BotKind, record: Option<&Path>) -> Result<PlayReport> {
    let cfg = Arc::new(load_scenario(scenario).with_context(|| format!("loading scenario {scenario}"))?);
    let mut r = make_bot(red, &cfg, Color::Red, seed);
    let mut b = make_bot(blue, &cfg, Color::Blue, seed);
    let names = Teams {
        red: controller_name(red),
        blue: controller_name(blue),
    };
    let rec = record_episode(cfg, seed, names, |st, cb| run_episode_with(st, &mut r, &mut b, cb).map(|_| ()))?;
    if let Some(path) = record {
        fs::write(path, write_replay(&rec)).with_context(|| format!("writing {}", path.display()))?;
    }
    let f = rec.footer.as_ref().expect("complete episode has a footer");
    let outcome = EpisodeOutcome {
        winner: f.winner,
        ticks: f.total_ticks,
        final_blood: f.final_blood,
        return_red: rec.ticks.iter().map(|t| t.rewards[0]).sum(),
        return_blue: rec.ticks.iter().map(|t| t.rewards[1]).sum(),
    };
    Ok(PlayReport {
        scenario: scenario.to_string(),
        seed,
        red,
        blue,
        outcome,
    })
}

pub fn controller_name(k: BotKind) -> String {
    match k {
        BotKind::Random => "random".into(),
        k => format!("bot:{k}"),
    }
}

pub fn load_replay_file(path: &Path) -> Result<LoadedReplay> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read_replay(&bytes).with_context(|| format!("reading replay {}", path.display()))
}

/// Reads and re-simulates a replay file.
pub fn replay_verify(path: &Path) -> Result<(LoadedReplay, VerifyReport)> {
    let loaded = load_replay_file(path)?;
    let report = verify(&loaded.record)?;
    Ok((loaded, report))
}

pub fn replay_export(path: &Path, format: Format) -> Result<String> {
    let loaded = load_replay_file(path)?;
    let s = summarize(&loaded.record);
    Ok(match format {
        Format::Tsv | Format::Text => s.to_tsv(),
        Format::Jsonl => {
            let mut out = String::new();
            for o in &s.operators {
                out.push_str(&serde_json::to_string(o)?);
                out.push('\n');
            }
            out
        }
    })
}

/// Loads and validates a scenario (id or path); returns a short summary.
pub fn scenario_validate(id_or_path: &str) -> Result<String> {
    let cfg: ScenarioConfig = load_scenario(id_or_path)?;
    Ok(format!(
        "ok: {}x{} map, special_terrain={}, guide_shoot={}, max_ticks={}, {} special cells",
        cfg.map().rows(),
        cfg.map().cols(),
        cfg.special_terrain(),
        cfg.guide_shoot(),
        cfg.max_ticks(),
        cfg.map().special_cells().count()
    ))
}

pub fn features(format: Format) -> Result<String> {
    let tables: [(&str, Vec<FeatureField>); 2] = [("observation", observation_layout()), ("global_state", global_state_layout())];
    let mut out = String::new();
    match format {
        Format::Jsonl => {
            for (vector, fields) in &tables {
                for f in fields {
                    let mut v = serde_json::to_value(f)?;
                    v["vector"] = serde_json::Value::from(*vector);
                    out.push_str(&serde_json::to_string(&v)?);
                    out.push('\n');
                }
            }
        }
        Format::Tsv | Format::Text => {
            out.push_str("vector\tname\toffset\twidth\tnormalizer\n");
            for (vector, fields) in &tables {
                for f in fields {
                    out.push_str(&format!("{vector}\t{}\t{}\t{}\t{}\n", f.name, f.offset, f.width, f.normalizer));
                }
            }
        }
    }
    Ok(out)
}

fn is_json(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Converts between the text map format and JSON `{rows, cols, terrain}`,
/// chosen by file extension. The input is validated either way.
pub fn map_convert(input: &Path, output: &Path) -> Result<GameMap> {
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let map = if is_json(input) {
        let raw: GameMap = serde_json::from_slice(&bytes).context("parsing JSON map")?;
        GameMap::from_terrain(raw.rows(), raw.cols(), raw.terrain().to_vec())?
    } else {
        load_map(&bytes)?
    };
    let out = if is_json(output) {
        serde_json::to_vec(&map)?
    } else {
        save_map(&map)
    };
    if input == output {
        bail!("input and output are the same file");
    }
    fs::write(output, out).with_context(|| format!("writing {}", output.display()))?;
    Ok(map)
}
