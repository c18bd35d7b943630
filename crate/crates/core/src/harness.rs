//! Experiment harness: the four training variants over seeds and buildings,
//! periodic test-distribution evaluation, and CSV/checkpoint outputs.
//!
//! Variants:
//!
//! * `upperbound` — one agent per building trained directly on the testing
//!   distribution (the oracle baseline).
//! * `ind-agent` — one agent per building on the training distribution, no
//!   aggregation.
//! * `fl` — fully-shared model (empty personal partition) with FedAvg.
//! * `fl-personalization` — personal encoder kept local, the rest FedAvg.
//!
//! All runs are deterministic in `(config, seed)`: every RNG stream is
//! derived from the seed and a fixed tag path, evaluation uses its own
//! streams and the deterministic policy mean, and files are written
//! atomically with stable float formatting.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::checkpoint::{self, CheckpointError};
use crate::config::ExperimentConfig;
use crate::env::{evaluate_episode, trace_episode, EnvParams, EpisodeTotals, MicrogridEnv};
use crate::fed::{run_round, ClientHandle, FedError, RoundState, TrainingClient};
use crate::nn::Partition;
use crate::policy::{ModelConfig, PersonalizedActorCritic};
use crate::rng::derive_seed;
use crate::scenario::{generate_weather, BuildingConfig, GridSeries, NoiseSpec, Phase};
use crate::trpo::{ActorCritic, UpdateReport};

/// Stream-derivation tags; each (tag, index...) path is an independent RNG
/// stream under a master seed.
mod tags {
    pub const INIT_SHARED: u64 = 0x01;
    pub const INIT_PERSONAL: u64 = 0x02;
    pub const TRAIN_WEATHER: u64 = 0x03;
    pub const ACTIONS: u64 = 0x04;
    pub const EVAL_WEATHER: u64 = 0x05;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Fed(#[from] FedError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

/// The four experiment variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Upperbound,
    IndAgent,
    Fl,
    FlPersonalization,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Upperbound,
        Variant::IndAgent,
        Variant::Fl,
        Variant::FlPersonalization,
    ];

    /// Identifier used in CSV rows and file names.
    pub fn slug(self) -> &'static str {
        match self {
            Variant::Upperbound => "upperbound",
            Variant::IndAgent => "ind-agent",
            Variant::Fl => "fl",
            Variant::FlPersonalization => "fl-personalization",
        }
    }

    /// Human-readable label used in plot legends.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Upperbound => "Upperbound",
            Variant::IndAgent => "Ind. Agent",
            Variant::Fl => "FL",
            Variant::FlPersonalization => "FL Personalization",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.slug() == s)
    }

    /// Whether the variant aggregates shared parameters each round.
    pub fn aggregates(self) -> bool {
        matches!(self, Variant::Fl | Variant::FlPersonalization)
    }

    /// Whether the personal partition is non-empty.
    pub fn personalized(self) -> bool {
        !matches!(self, Variant::Fl)
    }

    /// Which data distribution the variant trains on.
    pub fn train_phase(self) -> Phase {
        match self {
            Variant::Upperbound => Phase::Test,
            _ => Phase::Train,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// One metrics CSV row: mean test reward/emission/cost for a building at an
/// evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub variant: Variant,
    pub seed: u64,
    pub round: u32,
    pub building: usize,
    pub reward: f64,
    pub emission: f64,
    pub cost: f64,
}

pub const METRICS_HEADER: &str = "variant,seed,round,building,reward,emission,cost";
pub const UPDATES_HEADER: &str =
    "round,client,accepted,kl,surrogate_gain,backtracks,value_loss_before,value_loss_after";
pub const SCENARIO_HEADER: &str = "building,hour,temperature,humidity,solar,load,price,emission_rate";
pub const TRACE_HEADER: &str = "building,hour,load,solar,batt,grid,soc,reward,penalty,cost,emission";

/// Everything one `(variant, seed)` training run produces in memory.
pub struct SeedRun {
    pub variant: Variant,
    pub seed: u64,
    pub metrics: Vec<MetricsRow>,
    /// Per building: the update reports in round order.
    pub update_logs: Vec<Vec<UpdateReport>>,
    /// Per building: final model parameters.
    pub final_params: Vec<crate::nn::ParamVector>,
    /// Number of server aggregations performed (0 for solo variants).
    pub aggregate_calls: u64,
}

/// Builds the training client for one building, with every RNG stream
/// derived from `(seed, variant role, building index)`. Networked workers
/// use this too, so in-process and networked runs are seed-compatible.
pub fn build_client(config: &ExperimentConfig, variant: Variant, seed: u64, k: usize) -> TrainingClient {
    let noise = match variant.train_phase() {
        Phase::Train => config.scenario.train_noise,
        Phase::Test => config.scenario.test_noise,
    };
    let shared_seed = derive_seed(seed, &[tags::INIT_SHARED]);
    let model_cfg = ModelConfig { personalized: variant.personalized(), ..config.model };
    // Every client starts from the same initialization; personal encoders
    // diverge through training only. All variants therefore share their
    // starting point exactly.
    let personal_seed = derive_seed(seed, &[tags::INIT_PERSONAL]);
    let model = PersonalizedActorCritic::new(model_cfg, shared_seed, personal_seed);
    let weather_seed = derive_seed(seed, &[tags::TRAIN_WEATHER, k as u64]);
    let weather = generate_weather(weather_seed, 0, &noise);
    let env = MicrogridEnv::new(
        config.scenario.buildings[k].clone(),
        weather,
        config.scenario.grid.clone(),
        config.env,
    );
    TrainingClient::new(
        k as u16,
        model,
        env,
        noise,
        config.trpo,
        weather_seed,
        derive_seed(seed, &[tags::ACTIONS, k as u64]),
    )
}

fn build_clients(config: &ExperimentConfig, variant: Variant, seed: u64) -> Vec<TrainingClient> {
    (0..config.scenario.buildings.len())
        .map(|k| build_client(config, variant, seed, k))
        .collect()
}

/// The evaluation weather stream for a building under a master seed.
pub fn eval_weather_seed(seed: u64, building: usize) -> u64 {
    derive_seed(seed, &[tags::EVAL_WEATHER, building as u64])
}

/// Mean test-distribution metrics for a policy on one building, using the
/// deterministic policy mean and evaluation-only weather streams.
pub fn evaluate_policy<P: ActorCritic>(
    policy: &P,
    building: &BuildingConfig,
    grid: &GridSeries,
    env_params: EnvParams,
    test_noise: &NoiseSpec,
    eval_weather_seed: u64,
    episodes: u32,
) -> EpisodeTotals {
    let weather = generate_weather(eval_weather_seed, 0, test_noise);
    let mut env = MicrogridEnv::new(building.clone(), weather, grid.clone(), env_params);
    let mut sum = EpisodeTotals::default();
    for ep in 0..episodes {
        env.set_weather(generate_weather(eval_weather_seed, ep as u64, test_noise));
        let totals = evaluate_episode(&mut env, policy);
        sum.reward += totals.reward;
        sum.cost += totals.cost;
        sum.emission += totals.emission;
    }
    let n = episodes as f64;
    EpisodeTotals { reward: sum.reward / n, cost: sum.cost / n, emission: sum.emission / n }
}

/// Trains one `(variant, seed)` cell of the experiment matrix.
pub fn train_one_seed(
    config: &ExperimentConfig,
    variant: Variant,
    seed: u64,
) -> Result<SeedRun, HarnessError> {
    let mut clients = build_clients(config, variant, seed);
    let mut state = variant.aggregates().then(|| {
        RoundState::new(clients[0].model().flat_params().extract(Partition::Shared))
    });

    let mut metrics = Vec::new();
    for round in 1..=config.fed.rounds {
        if let Some(state) = state.as_mut() {
            let mut refs: Vec<&mut dyn ClientHandle> =
                clients.iter_mut().map(|c| c as &mut dyn ClientHandle).collect();
            run_round(state, &mut refs, config.fed.local_updates)?;
        } else {
            for client in &mut clients {
                client.train_updates(config.fed.local_updates);
            }
        }

        if round % config.eval_every == 0 {
            for (k, client) in clients.iter().enumerate() {
                let totals = evaluate_policy(
                    client.model(),
                    &config.scenario.buildings[k],
                    &config.scenario.grid,
                    config.env,
                    &config.scenario.test_noise,
                    eval_weather_seed(seed, k),
                    config.eval_episodes,
                );
                metrics.push(MetricsRow {
                    variant,
                    seed,
                    round,
                    building: k,
                    reward: totals.reward,
                    emission: totals.emission,
                    cost: totals.cost,
                });
            }
        }
    }

    Ok(SeedRun {
        variant,
        seed,
        metrics,
        update_logs: clients.iter().map(|c| c.update_log.clone()).collect(),
        final_params: clients.iter().map(|c| c.model().flat_params()).collect(),
        aggregate_calls: state.map_or(0, |s| s.aggregate_calls),
    })
}

/// Writes `content` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(path))?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(content).map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

fn render_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        debug_assert!(r.reward <= 0.0 && r.emission >= 0.0 && r.cost >= 0.0);
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.variant.slug(),
            r.seed,
            r.round,
            r.building,
            r.reward,
            r.emission,
            r.cost
        ));
    }
    out
}

/// Artifacts written by [`run_variant`].
#[derive(Debug, Clone)]
pub struct VariantArtifacts {
    pub metrics_path: PathBuf,
    pub updates_paths: Vec<PathBuf>,
    pub checkpoint_paths: Vec<PathBuf>,
    pub aggregate_calls: u64,
}

/// Trains every seed of a variant and writes the metrics CSV, per-seed
/// update logs, and final checkpoints under `out_dir`.
pub fn run_variant(
    config: &ExperimentConfig,
    variant: Variant,
    out_dir: &Path,
) -> Result<VariantArtifacts, HarnessError> {
    let mut all_metrics = Vec::new();
    let mut updates_paths = Vec::new();
    let mut checkpoint_paths = Vec::new();
    let mut aggregate_calls = 0;

    for &seed in &config.seeds {
        let run = train_one_seed(config, variant, seed)?;
        all_metrics.extend(run.metrics.iter().cloned());
        aggregate_calls += run.aggregate_calls;

        let mut updates = String::from(UPDATES_HEADER);
        updates.push('\n');
        for (client, log) in run.update_logs.iter().enumerate() {
            for (i, u) in log.iter().enumerate() {
                let round = 1 + i as u32 / config.fed.local_updates.max(1);
                updates.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    round,
                    client,
                    u.accepted,
                    u.kl,
                    u.surrogate_gain,
                    u.backtracks,
                    u.value_loss_before,
                    u.value_loss_after
                ));
            }
        }
        let updates_path = out_dir.join(format!("updates_{}_seed{}.csv", variant.slug(), seed));
        write_atomic(&updates_path, updates.as_bytes())?;
        updates_paths.push(updates_path);

        for (k, params) in run.final_params.iter().enumerate() {
            let path =
                out_dir.join(format!("{}_seed{}_building{}.gfnn", variant.slug(), seed, k));
            write_atomic(&path, &checkpoint::encode(params))?;
            checkpoint_paths.push(path);
        }
    }

    let metrics_path = out_dir.join(format!("metrics_{}.csv", variant.slug()));
    write_atomic(&metrics_path, render_metrics_csv(&all_metrics).as_bytes())?;
    Ok(VariantArtifacts { metrics_path, updates_paths, checkpoint_paths, aggregate_calls })
}

/// Writes one episode's generated series for every building:
/// `building,hour,temperature,humidity,solar,load,price,emission_rate`.
pub fn write_scenario_dump(
    config: &ExperimentConfig,
    seed: u64,
    episode: u64,
    phase: Phase,
    path: &Path,
) -> Result<(), HarnessError> {
    let noise = match phase {
        Phase::Train => config.scenario.train_noise,
        Phase::Test => config.scenario.test_noise,
    };
    let weather = generate_weather(seed, episode, &noise);
    let grid = &config.scenario.grid;
    let mut out = String::from(SCENARIO_HEADER);
    out.push('\n');
    for building in &config.scenario.buildings {
        for hour in 0..crate::scenario::HOURS {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                building.building_id,
                hour,
                weather.temperature[hour],
                weather.humidity[hour],
                crate::scenario::solar_generation(building, &weather, hour),
                crate::scenario::nonshiftable_load(building, &weather, hour),
                grid.price[hour],
                grid.emission_rate[hour],
            ));
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Writes a full-episode environment trace for the selected buildings:
/// `building,hour,load,solar,batt,grid,soc,reward,penalty,cost,emission`.
/// Actions come from the checkpoint policy's mean when given, otherwise the
/// zero (battery-idle) policy.
pub fn write_env_trace(
    config: &ExperimentConfig,
    seed: u64,
    episode: u64,
    phase: Phase,
    building_filter: Option<usize>,
    policy: Option<&PersonalizedActorCritic>,
    path: &Path,
) -> Result<(), HarnessError> {
    let noise = match phase {
        Phase::Train => config.scenario.train_noise,
        Phase::Test => config.scenario.test_noise,
    };
    let weather = generate_weather(seed, episode, &noise);
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for building in &config.scenario.buildings {
        if building_filter.is_some_and(|want| want != building.building_id) {
            continue;
        }
        let capacity = building.battery_capacity;
        let mut env = MicrogridEnv::new(
            building.clone(),
            weather.clone(),
            config.scenario.grid.clone(),
            config.env,
        );
        let rows = trace_episode(&mut env, |obs| match policy {
            Some(p) => p.policy_and_value(obs).0.mean,
            None => 0.0,
        });
        for row in rows {
            let r = row.record;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                building.building_id,
                row.hour,
                r.e_load,
                r.e_solar,
                r.e_batt,
                r.e_grid,
                row.soc_after_kwh / capacity,
                r.reward,
                r.penalty,
                r.cost,
                r.emission,
            ));
        }
    }
    write_atomic(path, out.as_bytes())
}
