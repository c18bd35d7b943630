//! `gridfed` — train and evaluate federated TRPO battery-dispatch agents.

use std::net::TcpListener;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gridfed_core::checkpoint;
use gridfed_core::config::ExperimentConfig;
use gridfed_core::fed;
use gridfed_core::harness::{
    self, build_client, eval_weather_seed, evaluate_policy, run_variant, Variant,
};
use gridfed_core::nn::Partition;
use gridfed_core::plot::plot_metrics;
use gridfed_core::policy::PersonalizedActorCritic;
use gridfed_core::scenario::Phase;
use gridfed_core::trpo::ActorCritic;

#[derive(Parser)]
#[command(name = "gridfed", version, about = "Federated TRPO for microgrid battery dispatch")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Train,
    Test,
}

impl From<PhaseArg> for Phase {
    fn from(p: PhaseArg) -> Phase {
        match p {
            PhaseArg::Train => Phase::Train,
            PhaseArg::Test => Phase::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    InProcess,
    Networked,
}

#[derive(Args)]
struct ConfigOpt {
    /// JSON config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigOpt {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => Ok(ExperimentConfig::from_json_file(path)?),
            None => Ok(ExperimentConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic train/test scenario data as CSV files.
    GenerateData {
        #[command(flatten)]
        config: ConfigOpt,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Episodes to generate per phase.
        #[arg(long, default_value_t = 5)]
        episodes: u64,
        #[arg(long, default_value = "out/data")]
        out: PathBuf,
    },
    /// Scenario inspection commands.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Environment inspection commands.
    Env {
        #[command(subcommand)]
        action: EnvAction,
    },
    /// Train one variant (or all four) over the configured seeds.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test distribution.
    Evaluate {
        #[command(flatten)]
        config: ConfigOpt,
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Building the checkpoint belongs to.
        #[arg(long)]
        building: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Test episodes to average over; config value when omitted.
        #[arg(long)]
        episodes: Option<u32>,
    },
    /// Render SVG charts from metrics CSVs.
    Plot {
        /// Metrics CSV files; when omitted, `<dir>/metrics_*.csv` is used.
        #[arg(long = "metrics", num_args = 1..)]
        metrics: Vec<PathBuf>,
        /// Directory scanned for metrics CSVs and used for output.
        #[arg(long, default_value = "out")]
        dir: PathBuf,
        /// Output directory for the SVGs; defaults to `--dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// Dump one episode's weather, solar, load, and grid series per building.
    Dump {
        #[command(flatten)]
        config: ConfigOpt,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        episode: u64,
        #[arg(long, value_enum, default_value_t = PhaseArg::Train)]
        phase: PhaseArg,
        #[arg(long, default_value = "scenario.csv")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum EnvAction {
    /// Run one episode and dump the per-hour accounting.
    Trace {
        #[command(flatten)]
        config: ConfigOpt,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        episode: u64,
        #[arg(long, value_enum, default_value_t = PhaseArg::Train)]
        phase: PhaseArg,
        /// Restrict to one building; all buildings when omitted.
        #[arg(long)]
        building: Option<usize>,
        /// Drive actions from this checkpoint's policy mean instead of the
        /// battery-idle policy.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "trace.csv")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigOpt,
    /// upperbound | ind-agent | fl | fl-personalization | all
    #[arg(long)]
    variant: String,
    /// Train a single seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config's round count.
    #[arg(long)]
    rounds: Option<u32>,
    /// Override the config's local TRPO updates per round.
    #[arg(long)]
    local_updates: Option<u32>,
    #[arg(long, value_enum, default_value_t = Mode::InProcess)]
    mode: Mode,
    /// Networked server: address to listen on.
    #[arg(long)]
    listen: Option<String>,
    /// Networked worker: server address to connect to.
    #[arg(long)]
    connect: Option<String>,
    /// Networked worker: building index this process trains.
    #[arg(long)]
    client_id: Option<u16>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenerateData { config, seed, episodes, out } => {
            let config = config.load()?;
            for phase in [Phase::Train, Phase::Test] {
                let name = match phase {
                    Phase::Train => "train",
                    Phase::Test => "test",
                };
                for ep in 0..episodes {
                    let path = out.join(format!("{name}_episode{ep}.csv"));
                    harness::write_scenario_dump(&config, seed, ep, phase, &path)?;
                }
            }
            println!("wrote {} episode files per phase under {}", episodes, out.display());
            Ok(())
        }
        Command::Scenario { action: ScenarioAction::Dump { config, seed, episode, phase, out } } => {
            let config = config.load()?;
            harness::write_scenario_dump(&config, seed, episode, phase.into(), &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Env {
            action: EnvAction::Trace { config, seed, episode, phase, building, checkpoint, out },
        } => {
            let config = config.load()?;
            let policy = checkpoint
                .map(|path| load_model(&config, &path))
                .transpose()?;
            harness::write_env_trace(
                &config,
                seed,
                episode,
                phase.into(),
                building,
                policy.as_ref(),
                &out,
            )?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Train(args) => train(args),
        Command::Evaluate { config, checkpoint, building, seed, episodes } => {
            let config = config.load()?;
            if building >= config.scenario.buildings.len() {
                bail!("building {building} out of range");
            }
            let model = load_model(&config, &checkpoint)?;
            let episodes = episodes.unwrap_or(config.eval_episodes);
            let totals = evaluate_policy(
                &model,
                &config.scenario.buildings[building],
                &config.scenario.grid,
                config.env,
                &config.scenario.test_noise,
                eval_weather_seed(seed, building),
                episodes,
            );
            println!(
                "building {building} over {episodes} test episodes: reward {} cost {} emission {}",
                totals.reward, totals.cost, totals.emission
            );
            Ok(())
        }
        Command::Plot { metrics, dir, out } => {
            let paths = if metrics.is_empty() { find_metrics(&dir)? } else { metrics };
            if paths.is_empty() {
                bail!("no metrics CSVs found under {}", dir.display());
            }
            let out = out.unwrap_or(dir);
            let written = plot_metrics(&paths, &out)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn find_metrics(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    let entries = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read directory {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("metrics_") && name.ends_with(".csv") {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

fn load_model(config: &ExperimentConfig, path: &Path) -> Result<PersonalizedActorCritic> {
    let params = checkpoint::load(path)?;
    let mut model = PersonalizedActorCritic::new(config.model, 0, 0);
    if params.len() != model.n_params() {
        bail!(
            "checkpoint {} has {} parameters but the configured model has {}",
            path.display(),
            params.len(),
            model.n_params()
        );
    }
    model.load_flat(&params.values);
    Ok(model)
}

fn parse_variants(s: &str) -> Result<Vec<Variant>> {
    if s == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    Variant::parse(s)
        .map(|v| vec![v])
        .ok_or_else(|| anyhow!("unknown variant `{s}` (expected upperbound, ind-agent, fl, fl-personalization, or all)"))
}

fn train(args: TrainArgs) -> Result<()> {
    let mut config = args.config.load()?;
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    if let Some(rounds) = args.rounds {
        config.fed.rounds = rounds;
    }
    if let Some(local_updates) = args.local_updates {
        config.fed.local_updates = local_updates;
    }
    config.validate()?;
    let variants = parse_variants(&args.variant)?;

    match args.mode {
        Mode::InProcess => {
            for variant in variants {
                let artifacts = run_variant(&config, variant, &args.out)?;
                println!(
                    "{}: wrote {} ({} aggregations)",
                    variant.slug(),
                    artifacts.metrics_path.display(),
                    artifacts.aggregate_calls
                );
            }
            Ok(())
        }
        Mode::Networked => {
            let [variant] = variants.as_slice() else {
                bail!("networked mode trains one variant at a time");
            };
            if !variant.aggregates() {
                bail!("networked mode applies to the federated variants (fl, fl-personalization)");
            }
            let [seed] = config.seeds.as_slice() else {
                bail!("networked mode trains one seed at a time; pass --seed");
            };
            match (&args.listen, &args.connect) {
                (Some(addr), None) => {
                    serve(&config, *variant, *seed, addr, &args.out)
                }
                (None, Some(addr)) => {
                    let client_id = args
                        .client_id
                        .ok_or_else(|| anyhow!("--connect requires --client-id"))?;
                    if client_id as usize >= config.scenario.buildings.len() {
                        bail!("client id {client_id} out of range");
                    }
                    let mut client =
                        build_client(&config, *variant, *seed, client_id as usize);
                    fed::connect_and_serve(addr, &mut client, config.fed.local_updates)?;
                    println!("client {client_id} finished");
                    Ok(())
                }
                _ => bail!("networked mode needs exactly one of --listen or --connect"),
            }
        }
    }
}

/// Networked server role: run the rounds and save the final global shared
/// parameters as a checkpoint.
fn serve(
    config: &ExperimentConfig,
    variant: Variant,
    seed: u64,
    addr: &str,
    out: &Path,
) -> Result<()> {
    let reference = build_client(config, variant, seed, 0);
    let reference_params = reference.model().flat_params();
    let initial = reference_params.extract(Partition::Shared);
    let clients = config.scenario.buildings.len();
    let listener = TcpListener::bind(addr)
        .with_context(|| format!("cannot listen on {addr}"))?;
    println!("listening on {}; waiting for {clients} clients", listener.local_addr()?);
    let state = fed::run_networked_server(
        &listener,
        clients,
        config.fed.rounds,
        config.fed.local_updates,
        initial,
        |state| {
            if state.round % 10 == 0 {
                println!("round {} aggregated", state.round);
            }
        },
    )?;

    let mut global = reference_params.restrict(Partition::Shared);
    global.values = state.global_shared;
    let path = out.join(format!("{}_seed{}_global.gfnn", variant.slug(), seed));
    harness::write_atomic(&path, &checkpoint::encode(&global))?;
    println!("wrote {}", path.display());
    Ok(())
}
