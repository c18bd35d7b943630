//! The 24-step battery-dispatch MDP for one building.
//!
//! Each episode spans 24 hours. The agent commands a charge/discharge
//! fraction of battery capacity; the environment realizes what the battery
//! headroom allows, penalizes the infeasible remainder, and accounts grid
//! draw, cost, and emissions:
//!
//! ```text
//! e_grid = max(e_load + e_batt - e_solar, 0)
//! reward = -e_grid - penalty_weight * overflow
//! ```
//!
//! Surplus solar is curtailed (no export credit); the grid term floors at
//! zero. Battery dynamics are ideal: no losses, no power limit beyond the
//! [-1, 1] capacity fraction.

use serde::{Deserialize, Serialize};

use crate::policy::SampledAction;
use crate::scenario::{
    nonshiftable_load, solar_generation, BuildingConfig, GridSeries, WeatherSeries, HOURS,
};
use crate::trpo::{ActorCritic, EpisodeBatch};

/// The six-feature state vector fed to the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Outdoor temperature (deg C).
    pub t_out: f64,
    /// Outdoor humidity (fraction).
    pub h_out: f64,
    /// Battery state of charge as a fraction of capacity.
    pub soc: f64,
    /// Previous step's grid draw (kWh); 0 at reset.
    pub net_consumption: f64,
    /// Current electricity price (currency/kWh).
    pub price: f64,
    /// Hour of day, 0..=23.
    pub hour: usize,
}

/// Battery command: fraction of capacity to charge (+) or discharge (-).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub command: f64,
}

/// Full accounting for one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Non-shiftable load (kWh).
    pub e_load: f64,
    /// Solar generation (kWh).
    pub e_solar: f64,
    /// Realized battery energy (kWh, signed).
    pub e_batt: f64,
    /// Grid draw (kWh).
    pub e_grid: f64,
    pub reward: f64,
    /// Penalty charged for the infeasible part of the command, >= 0.
    pub penalty: f64,
    /// Grid cost (currency).
    pub cost: f64,
    /// Grid emissions (kgCO2e).
    pub emission: f64,
    /// Requested battery energy beyond physical headroom (kWh), >= 0.
    pub overflow: f64,
}

/// Environment knobs that are not part of the building description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvParams {
    /// Weight of the overcharge/overdischarge penalty per kWh of overflow.
    pub penalty_weight: f64,
    /// Initial state of charge as a fraction of capacity.
    pub initial_soc_frac: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self { penalty_weight: 0.1, initial_soc_frac: 0.5 }
    }
}

/// One building's environment. State is a value: cloning and stepping the
/// clone leaves the original untouched, and identical inputs produce
/// identical trajectories.
#[derive(Debug, Clone)]
pub struct MicrogridEnv {
    config: BuildingConfig,
    weather: WeatherSeries,
    grid: GridSeries,
    params: EnvParams,
    soc_kwh: f64,
    hour: usize,
    last_net: f64,
}

impl MicrogridEnv {
    pub fn new(
        config: BuildingConfig,
        weather: WeatherSeries,
        grid: GridSeries,
        params: EnvParams,
    ) -> Self {
        let mut env = Self {
            soc_kwh: 0.0,
            hour: 0,
            last_net: 0.0,
            config,
            weather,
            grid,
            params,
        };
        env.reset();
        env
    }

    /// Starts a new episode: hour 0, half-full battery, zero net history.
    pub fn reset(&mut self) -> Observation {
        self.soc_kwh = self.params.initial_soc_frac * self.config.battery_capacity;
        self.hour = 0;
        self.last_net = 0.0;
        self.observation()
    }

    /// Replaces the episode's weather series; callers reset afterwards.
    pub fn set_weather(&mut self, weather: WeatherSeries) {
        self.weather = weather;
    }

    pub fn config(&self) -> &BuildingConfig {
        &self.config
    }

    pub fn done(&self) -> bool {
        self.hour >= HOURS
    }

    pub fn soc_kwh(&self) -> f64 {
        self.soc_kwh
    }

    pub fn observation(&self) -> Observation {
        let h = self.hour.min(HOURS - 1);
        Observation {
            t_out: self.weather.temperature[h],
            h_out: self.weather.humidity[h],
            soc: self.soc_kwh / self.config.battery_capacity,
            net_consumption: self.last_net,
            price: self.grid.price[h],
            hour: h,
        }
    }

    /// Advances one hour. Panics if called after the episode is done.
    pub fn step(&mut self, action: Action) -> (Observation, StepRecord, bool) {
        assert!(!self.done(), "step called on a finished episode");
        let hour = self.hour;
        let capacity = self.config.battery_capacity;
        let command = action.command.clamp(-1.0, 1.0);
        let requested = command * capacity;

        // Realize what the headroom allows; saturate state of charge exactly.
        let headroom = capacity - self.soc_kwh;
        let e_batt = if requested >= headroom {
            self.soc_kwh = capacity;
            headroom
        } else if requested <= -self.soc_kwh {
            let realized = -self.soc_kwh;
            self.soc_kwh = 0.0;
            realized
        } else {
            self.soc_kwh += requested;
            requested
        };
        let overflow = (requested - e_batt).abs();

        let e_load = nonshiftable_load(&self.config, &self.weather, hour);
        let e_solar = solar_generation(&self.config, &self.weather, hour);
        let e_grid = (e_load + e_batt - e_solar).max(0.0);
        let penalty = self.params.penalty_weight * overflow;
        let reward = 0.0 - e_grid - penalty;
        let record = StepRecord {
            e_load,
            e_solar,
            e_batt,
            e_grid,
            reward,
            penalty,
            cost: e_grid * self.grid.price[hour],
            emission: e_grid * self.grid.emission_rate[hour],
            overflow,
        };

        self.hour += 1;
        self.last_net = e_grid;
        (self.observation(), record, self.done())
    }
}

/// Per-episode reward/cost/emission sums.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeTotals {
    pub reward: f64,
    pub cost: f64,
    pub emission: f64,
}

/// One row of an `env trace` dump: step accounting plus the post-step SOC.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub hour: usize,
    pub record: StepRecord,
    pub soc_after_kwh: f64,
}

/// Runs one full episode with an arbitrary action rule, returning every step.
pub fn trace_episode(
    env: &mut MicrogridEnv,
    mut act: impl FnMut(&Observation) -> f64,
) -> Vec<TraceRow> {
    let mut obs = env.reset();
    let mut rows = Vec::with_capacity(HOURS);
    loop {
        let hour = obs.hour;
        let (next, record, done) = env.step(Action { command: act(&obs) });
        rows.push(TraceRow { hour, record, soc_after_kwh: env.soc_kwh() });
        obs = next;
        if done {
            break;
        }
    }
    rows
}

/// Collects one stochastic-policy episode into `batch` for a TRPO update,
/// returning the step records. The batch rows store the pre-clamp Gaussian
/// samples so importance ratios stay consistent with the stored log-probs.
pub fn episode_rollout<P: ActorCritic>(
    env: &mut MicrogridEnv,
    policy: &P,
    rng: &mut crate::rng::Xoshiro256StarStar,
    batch: &mut EpisodeBatch,
) -> Vec<StepRecord> {
    let mut obs = env.reset();
    let mut records = Vec::with_capacity(HOURS);
    let mut totals = EpisodeTotals::default();
    loop {
        let (dist, value) = policy.policy_value(&obs);
        let SampledAction { raw, clamped, log_prob } = crate::policy::sample_action(&dist, rng);
        let (next, record, done) = env.step(Action { command: clamped });

        batch.observations.push(obs);
        batch.actions.push(raw);
        batch.log_probs_old.push(log_prob);
        batch.rewards.push(record.reward);
        batch.values.push(value);
        batch.dones.push(done);
        batch.means_old.push(dist.mean);
        batch.stds_old.push(dist.std);

        totals.reward += record.reward;
        totals.cost += record.cost;
        totals.emission += record.emission;
        records.push(record);
        obs = next;
        if done {
            break;
        }
    }
    batch.episode_totals.push(totals);
    records
}

/// Runs one episode with deterministic actions (the policy mean) and
/// returns the episode totals. Used for test-distribution evaluation.
pub fn evaluate_episode<P: ActorCritic>(env: &mut MicrogridEnv, policy: &P) -> EpisodeTotals {
    let mut totals = EpisodeTotals::default();
    let mut obs = env.reset();
    loop {
        let (dist, _) = policy.policy_value(&obs);
        let (next, record, done) = env.step(Action { command: dist.mean });
        totals.reward += record.reward;
        totals.cost += record.cost;
        totals.emission += record.emission;
        obs = next;
        if done {
            break;
        }
    }
    totals
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{self, NoiseSpec, SolarCoeffs};
    use proptest::prelude::*;

    /// Building with power-of-two capacity and weather-insensitive curves so
    /// step arithmetic is exact in the tests.
    fn test_config() -> BuildingConfig {
        BuildingConfig {
            building_id: 0,
            solar_scale: 0.2,
            ac_efficiency: 1.0,
            load_base: [2.0; HOURS],
            solar_coeffs: SolarCoeffs { alpha_t: 0.0, alpha_h: 0.0 },
            battery_capacity: 8.0,
        }
    }

    /// Weather pinned at the comfort setpoint: no AC term, solar factor 1.
    fn mild_weather() -> WeatherSeries {
        WeatherSeries {
            temperature: [scenario::COMFORT_SETPOINT; HOURS],
            humidity: [scenario::H_REF; HOURS],
        }
    }

    fn test_env() -> MicrogridEnv {
        MicrogridEnv::new(test_config(), mild_weather(), scenario::grid_series(0), EnvParams::default())
    }

    #[test]
    fn reset_contract() {
        let mut env = test_env();
        let obs = env.reset();
        assert_eq!(obs.hour, 0);
        assert_eq!(obs.soc, 0.5);
        assert_eq!(obs.net_consumption, 0.0);
        let again = env.reset();
        assert_eq!(obs, again);
    }

    #[test]
    fn step_with_feasible_charge() {
        // At noon: load 2.0, solar 0.2 * 5 = 1.0, charge 0.5 kWh.
        let mut env = test_env();
        env.reset();
        for _ in 0..12 {
            env.step(Action { command: 0.0 });
        }
        let soc_before = env.soc_kwh();
        let (obs, rec, done) = env.step(Action { command: 0.5 / 8.0 });
        assert_eq!(rec.e_load, 2.0);
        assert_eq!(rec.e_solar, 1.0);
        assert_eq!(rec.e_batt, 0.5);
        assert_eq!(rec.e_grid, 1.5);
        assert_eq!(rec.penalty, 0.0);
        assert_eq!(rec.reward, -1.5);
        assert_eq!(env.soc_kwh(), soc_before + 0.5);
        assert_eq!(obs.net_consumption, 1.5);
        assert!(!done);
    }

    #[test]
    fn surplus_discharge_clamps_grid_at_zero() {
        // load 1.0, discharge 2.0, solar 0.5 -> max(-1.5, 0) = 0.
        let mut config = test_config();
        config.load_base = [1.0; HOURS];
        config.solar_scale = 0.1;
        let mut env =
            MicrogridEnv::new(config, mild_weather(), scenario::grid_series(0), EnvParams::default());
        env.reset();
        for _ in 0..12 {
            env.step(Action { command: 0.0 });
        }
        let (_, rec, _) = env.step(Action { command: -0.25 });
        assert_eq!(rec.e_solar, 0.5);
        assert_eq!(rec.e_batt, -2.0);
        assert_eq!(rec.e_grid, 0.0);
        assert_eq!(rec.overflow, 0.0);
        assert_eq!(rec.reward, 0.0);
        assert!(rec.reward.is_sign_positive(), "reward must be +0, not -0");
        assert_eq!(rec.cost, 0.0);
        assert_eq!(rec.emission, 0.0);
    }

    #[test]
    fn charging_a_full_battery_overflows() {
        let mut config = test_config();
        config.battery_capacity = 6.4;
        let params = EnvParams { penalty_weight: 0.1, initial_soc_frac: 1.0 };
        let mut env = MicrogridEnv::new(config, mild_weather(), scenario::grid_series(0), params);
        env.reset();
        let (_, rec, _) = env.step(Action { command: 0.5 });
        assert_eq!(rec.e_batt, 0.0);
        assert!((rec.overflow - 3.2).abs() < 1e-12);
        assert!((rec.penalty - 0.32).abs() < 1e-12);
        assert_eq!(env.soc_kwh(), 6.4);
    }

    #[test]
    #[should_panic(expected = "finished episode")]
    fn stepping_after_done_panics() {
        let mut env = test_env();
        env.reset();
        for _ in 0..HOURS {
            env.step(Action { command: 0.0 });
        }
        env.step(Action { command: 0.0 });
    }

    #[test]
    fn no_battery_no_solar_cost_is_load_times_price() {
        let mut config = test_config();
        config.solar_scale = 0.0; // solar identically zero for the baseline
        config.load_base = scenario::default_buildings()[0].load_base;
        let grid = scenario::grid_series(0);
        let mut env =
            MicrogridEnv::new(config.clone(), mild_weather(), grid.clone(), EnvParams::default());
        let rows = trace_episode(&mut env, |_| 0.0);
        let total_cost: f64 = rows.iter().map(|r| r.record.cost).sum();
        let expected: f64 = (0..HOURS).map(|t| config.load_base[t] * grid.price[t]).sum();
        assert_eq!(total_cost, expected);
        let total_reward: f64 = rows.iter().map(|r| r.record.reward).sum();
        let expected_reward: f64 = (0..HOURS).map(|t| 0.0 - config.load_base[t]).sum();
        assert_eq!(total_reward, expected_reward);
    }

    #[test]
    fn penalty_grows_strictly_with_infeasible_request() {
        let base = test_env();
        let mut penalties = Vec::new();
        for command in [0.6, 0.8, 1.0] {
            // headroom is 4.0 kWh; all three requests exceed it
            let mut env = base.clone();
            env.reset();
            let (_, rec, _) = env.step(Action { command });
            assert_eq!(rec.e_batt, 4.0);
            penalties.push(rec.penalty);
        }
        assert!(penalties[0] < penalties[1] && penalties[1] < penalties[2], "{penalties:?}");
    }

    #[test]
    fn trace_covers_full_day_and_resums() {
        let buildings = scenario::default_buildings();
        let weather = scenario::generate_weather(3, 0, &NoiseSpec::default_train());
        let grid = scenario::grid_series(0);
        let mut env =
            MicrogridEnv::new(buildings[2].clone(), weather, grid.clone(), EnvParams::default());
        let rows = trace_episode(&mut env, |obs| if obs.price > 0.3 { -0.3 } else { 0.2 });
        assert_eq!(rows.len(), HOURS);
        // emissions re-derivable from the dumped rows
        let emission: f64 = rows.iter().map(|r| r.record.emission).sum();
        let resummed: f64 = rows
            .iter()
            .map(|r| r.record.e_grid * grid.emission_rate[r.hour])
            .sum();
        assert!((emission - resummed).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn battery_and_accounting_invariants(
            commands in proptest::collection::vec(-1.5f64..1.5, HOURS),
            building in 0usize..5,
            seed in 0u64..500,
        ) {
            let config = scenario::default_buildings()[building].clone();
            let capacity = config.battery_capacity;
            let weather = scenario::generate_weather(seed, 0, &NoiseSpec::default_train());
            let mut env = MicrogridEnv::new(config, weather, scenario::grid_series(0), EnvParams::default());
            env.reset();
            for &command in &commands {
                let (_, rec, done) = env.step(Action { command });
                // SOC bounds hold exactly
                prop_assert!(env.soc_kwh() >= 0.0 && env.soc_kwh() <= capacity);
                // energy accounting holds exactly
                prop_assert_eq!(rec.e_grid, (rec.e_load + rec.e_batt - rec.e_solar).max(0.0));
                // reward is non-positive, zero only without grid draw or overflow
                prop_assert!(rec.reward <= 0.0);
                prop_assert_eq!(rec.reward == 0.0, rec.e_grid == 0.0 && rec.overflow == 0.0);
                if done { break; }
            }
        }
    }
}
