//! Benchmark-only crate; see `benches/core_ops.rs`.
//!
//! Shared fixtures for the benchmarks live here so the bench target stays
//! focused on measurement.

use gridfed_core::config::ExperimentConfig;
use gridfed_core::env::Observation;
use gridfed_core::fed::TrainingClient;
use gridfed_core::harness::{build_client, Variant};

/// A mid-range observation used across benchmarks.
pub fn sample_observation() -> Observation {
    Observation {
        t_out: 26.5,
        h_out: 0.55,
        soc: 0.4,
        net_consumption: 2.0,
        price: 0.2,
        hour: 10,
    }
}

/// A default-architecture training client for building 0.
pub fn sample_client() -> TrainingClient {
    build_client(&ExperimentConfig::default(), Variant::FlPersonalization, 1, 0)
}
