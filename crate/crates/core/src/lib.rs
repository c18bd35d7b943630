//! Federated TRPO training of battery-dispatch agents across five
//! heterogeneous simulated buildings.
//!
//! The crate is organized along the training stack:
//!
//! * [`rng`] — portable seeded generators and stream derivation.
//! * [`scenario`] — synthetic weather, solar, load, and grid series.
//! * [`env`] — the 24-hour battery-dispatch MDP per building.
//! * [`nn`] / [`checkpoint`] — dense networks, flat parameter views, and
//!   the binary checkpoint format.
//! * [`policy`] — the personalized-encoding actor-critic.
//! * [`trpo`] — trust-region policy updates with GAE.
//! * [`fed`] / [`wire`] — federated averaging rounds, in-process or over a
//!   length-prefixed binary protocol.
//! * [`config`] — the JSON experiment configuration.
//! * [`harness`] — the experiment matrix: variants, seeds, metrics CSVs.
//! * [`plot`] — SVG charts from metrics CSVs.

pub mod checkpoint;
pub mod config;
pub mod env;
pub mod fed;
pub mod harness;
pub mod nn;
pub mod plot;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod trpo;
pub mod wire;

pub use config::ExperimentConfig;
pub use env::{Action, MicrogridEnv, Observation, StepRecord};
pub use nn::{DenseNet, ParamVector, Partition};
pub use policy::{PersonalizedActorCritic, PolicyDistribution};
pub use scenario::{BuildingConfig, GridSeries, NoiseSpec, WeatherSeries};
pub use trpo::{ActorCritic, EpisodeBatch, TrpoConfig};
