use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use poac_core::batch::Execution;
use poac_core::bots::BotKind;

use crate::commands::{self, Format};
use crate::manager::{ManagerConfig, SessionManager};
use crate::session::Deadline;
use crate::tournament::{run_tournament, TournamentSpec};

/// Environment variable holding the default service port.
pub const PORT_ENV: &str = "POAC_PORT";
pub const DEFAULT_PORT: u16 = 7878;

#[derive(Debug, Parser)]
#[command(name = "poac", version, about = "Asynchronous partially observable hex wargame")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play one bot-vs-bot episode.
    Play {
        #[arg(long, default_value = "0")]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "KAI0")]
        red: BotKind,
        #[arg(long, default_value = "KAI0")]
        blue: BotKind,
        /// Write a .poacrep replay here.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Win-rate table over seeded episodes.
    Tournament {
        /// Scenario ids or paths (repeatable).
        #[arg(long = "scenario", default_value = "0")]
        scenarios: Vec<String>,
        /// Red bot(s), repeatable; every red plays every blue.
        #[arg(long = "red", default_value = "KAI0")]
        reds: Vec<BotKind>,
        #[arg(long = "blue", default_value = "KAI0")]
        blues: Vec<BotKind>,
        #[arg(long, default_value_t = 32)]
        episodes: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Run episodes one after another on this thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Host the protocol (websocket on --port, TCP on --tcp-port) and UI assets.
    Serve(ServeArgs),
    #[command(subcommand)]
    Replay(ReplayCommand),
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Dump the observation and global-state feature layouts.
    Features {
        #[arg(long, value_enum, default_value_t = Format::Tsv)]
        format: Format,
    },
    #[command(subcommand)]
    Map(MapCommand),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    /// Length-prefixed TCP port; defaults to --port + 1.
    #[arg(long)]
    pub tcp_port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Hold automatically when a remote side has not acted within this many ms.
    #[arg(long)]
    pub realtime: Option<u64>,
    #[arg(long, default_value_t = 64)]
    pub max_sessions: usize,
    /// Directory of static UI files.
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ReplayCommand {
    /// Re-simulate a replay and report "exact" or the first divergence.
    Verify { file: PathBuf },
    /// Per-operator summary table.
    Export {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Tsv)]
        format: Format,
    },
    /// Serve a replay to viewers over HTTP and websocket.
    Serve {
        file: PathBuf,
        #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long)]
        assets: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    /// Check a scenario id or document.
    Validate { scenario: String },
    /// Print a scenario document as JSON.
    Show { scenario: String },
}

#[derive(Debug, Subcommand)]
pub enum MapCommand {
    /// Convert between .map text and .json; validates the input.
    Convert { input: PathBuf, output: PathBuf },
}

/// Parses `args` and runs the command. Usage errors exit 2, failures 1.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Play {
            scenario,
            seed,
            red,
            blue,
            record,
            format,
        } => {
            let r = commands::play(&scenario, seed, red, blue, record.as_deref())?;
            match format {
                Format::Text => println!(
                    "scenario {} seed {}: {} (red) vs {} (blue) -> {:?} after {} ticks, return red {:.1}",
                    r.scenario, r.seed, r.red, r.blue, r.outcome.winner, r.outcome.ticks, r.outcome.return_red
                ),
                Format::Tsv => {
                    println!("scenario\tseed\tred\tblue\twinner\tticks\treturn_red");
                    println!(
                        "{}\t{}\t{}\t{}\t{:?}\t{}\t{}",
                        r.scenario, r.seed, r.red, r.blue, r.outcome.winner, r.outcome.ticks, r.outcome.return_red
                    );
                }
                Format::Jsonl => println!("{}", serde_json::to_string(&r)?),
            }
        }
        Command::Tournament {
            scenarios,
            reds,
            blues,
            episodes,
            seed,
            out,
            format,
            sequential,
        } => {
            let pairings = reds.iter().flat_map(|&r| blues.iter().map(move |&b| (r, b))).collect();
            let spec = TournamentSpec {
                scenarios,
                pairings,
                episodes,
                base_seed: seed,
            };
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::default()
            };
            let table = run_tournament(&spec, exec)?;
            let text = match format {
                Format::Text => table.to_matrix(),
                Format::Tsv => table.to_tsv(),
                Format::Jsonl => table.to_jsonl(),
            };
            emit(&text, out.as_ref())?;
        }
        Command::Serve(args) => {
            let deadline = match args.realtime {
                Some(ms) => Deadline::Realtime { ms },
                None => Deadline::Gated,
            };
            let mgr = SessionManager::new(ManagerConfig {
                max_sessions: args.max_sessions,
                deadline,
            });
            let tcp_port = args.tcp_port.unwrap_or(args.port.wrapping_add(1));
            runtime()?.block_on(async move {
                let http = crate::net::bind(SocketAddr::new(args.host, args.port)).await?;
                let tcp = crate::net::bind(SocketAddr::new(args.host, tcp_port)).await?;
                eprintln!(
                    "serving websocket on ws://{}/ws, tcp on {}",
                    http.local_addr()?,
                    tcp.local_addr()?
                );
                crate::net::serve(mgr, http, Some(tcp), args.assets).await
            })?;
        }
        Command::Replay(ReplayCommand::Verify { file }) => {
            let (loaded, report) = commands::replay_verify(&file)?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            println!("{report}");
            if !report.is_exact() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Replay(ReplayCommand::Export { file, format }) => {
            print!("{}", commands::replay_export(&file, format)?);
        }
        Command::Replay(ReplayCommand::Serve {
            file,
            port,
            host,
            assets,
        }) => {
            let loaded = commands::load_replay_file(&file)?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            let bytes = std::fs::read(&file)?;
            let mgr = SessionManager::with_served_replay(ManagerConfig::default(), bytes);
            runtime()?.block_on(async move {
                let http = crate::net::bind(SocketAddr::new(host, port)).await?;
                eprintln!("serving {} on http://{}/api/replay", file.display(), http.local_addr()?);
                crate::net::serve(mgr, http, None, assets).await
            })?;
        }
        Command::Scenario(ScenarioCommand::Validate { scenario }) => {
            println!("{}", commands::scenario_validate(&scenario)?);
        }
        Command::Scenario(ScenarioCommand::Show { scenario }) => {
            println!("{}", poac_core::scenarios::load_scenario(&scenario)?.to_json());
        }
        Command::Features { format } => print!("{}", commands::features(format)?),
        Command::Map(MapCommand::Convert { input, output }) => {
            let map = commands::map_convert(&input, &output)?;
            eprintln!("converted {}x{} map to {}", map.rows(), map.cols(), output.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}
