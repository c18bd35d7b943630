//! Federated averaging over building clients.
//!
//! Each round the server broadcasts the shared parameter segments, every
//! client installs them (keeping its personal segments), runs local TRPO
//! updates on fresh training rollouts, and returns its shared segments with
//! a sample count. The server replaces the global parameters with the
//! sample-weighted mean. Rounds are all-or-nothing: any client failure
//! leaves the global state bit-identical to the pre-round value.
//!
//! Clients run either in-process (the default, and what the experiment
//! harness uses) or in separate processes over the [`crate::wire`] protocol;
//! the transport carries shared segments only, so personal parameters never
//! leave a client in either mode.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use thiserror::Error;

use crate::env::{episode_rollout, MicrogridEnv};
use crate::nn::Partition;
use crate::policy::PersonalizedActorCritic;
use crate::rng::Xoshiro256StarStar;
use crate::scenario::{generate_weather, NoiseSpec};
use crate::trpo::{trpo_update, ActorCritic, EpisodeBatch, TrpoConfig, UpdateReport};
use crate::wire::{read_message, write_message, FramingError, Message};

#[derive(Debug, Error)]
pub enum FedError {
    #[error("cannot aggregate an empty update set")]
    EmptyAggregation,
    #[error("round mismatch: expected {expected}, client {client_id} sent {found}")]
    RoundMismatch { expected: u32, found: u32, client_id: u16 },
    #[error("parameter length mismatch: expected {expected}, client {client_id} sent {found}")]
    LengthMismatch { expected: usize, found: usize, client_id: u16 },
    #[error("client {client_id} failed: {reason}")]
    ClientFailed { client_id: u16, reason: String },
    #[error("unexpected message: {0}")]
    UnexpectedMessage(String),
    #[error("wire error: {0}")]
    Wire(#[from] FramingError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One client's contribution to a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: u16,
    /// Environment steps consumed this round (the FedAvg sample count).
    pub n_k: u64,
    pub round: u32,
    /// The client's shared parameter segments after local training.
    pub shared_params: Vec<f64>,
}

/// Sample-weighted mean of the clients' shared parameters.
///
/// When every update carries identical parameters the first is returned
/// verbatim, so echo rounds and single-client aggregation are exact fixed
/// points rather than accumulating rounding error.
pub fn aggregate(updates: &[ClientUpdate]) -> Result<Vec<f64>, FedError> {
    let first = updates.first().ok_or(FedError::EmptyAggregation)?;
    for u in updates {
        if u.round != first.round {
            return Err(FedError::RoundMismatch {
                expected: first.round,
                found: u.round,
                client_id: u.client_id,
            });
        }
        if u.shared_params.len() != first.shared_params.len() {
            return Err(FedError::LengthMismatch {
                expected: first.shared_params.len(),
                found: u.shared_params.len(),
                client_id: u.client_id,
            });
        }
    }
    if updates.iter().all(|u| u.shared_params == first.shared_params) {
        return Ok(first.shared_params.clone());
    }

    let total: u64 = updates.iter().map(|u| u.n_k).sum();
    let mut out = vec![0.0; first.shared_params.len()];
    for u in updates {
        let weight = u.n_k as f64;
        for (o, p) in out.iter_mut().zip(&u.shared_params) {
            *o += weight * p;
        }
    }
    let n = total as f64;
    for o in &mut out {
        *o /= n;
    }
    Ok(out)
}

/// Server-side state of the federated run.
#[derive(Debug, Clone)]
pub struct RoundState {
    pub round: u32,
    pub global_shared: Vec<f64>,
    /// Server scaling of the aggregated step; fixed at 1, which makes the
    /// gradient-form update coincide with plain weight averaging.
    pub eta: f64,
    /// Instrumentation: number of aggregations performed.
    pub aggregate_calls: u64,
}

impl RoundState {
    pub fn new(global_shared: Vec<f64>) -> Self {
        Self { round: 0, global_shared, eta: 1.0, aggregate_calls: 0 }
    }
}

/// A participant in federated rounds, local or remote.
pub trait ClientHandle {
    fn client_id(&self) -> u16;
    /// Installs the broadcast shared parameters, trains locally, and
    /// returns the resulting shared segments.
    fn run_round(
        &mut self,
        round: u32,
        global_shared: &[f64],
        local_updates: u32,
    ) -> Result<ClientUpdate, FedError>;
}

/// Executes one synchronous round over all clients. On any error the round
/// state (including `global_shared`) is left untouched.
pub fn run_round(
    state: &mut RoundState,
    clients: &mut [&mut dyn ClientHandle],
    local_updates: u32,
) -> Result<(), FedError> {
    let mut updates = Vec::with_capacity(clients.len());
    for client in clients.iter_mut() {
        updates.push(client.run_round(state.round, &state.global_shared, local_updates)?);
    }
    state.global_shared = aggregate(&updates)?;
    state.aggregate_calls += 1;
    state.round += 1;
    Ok(())
}

/// An in-process building client: its model, environment, and RNG streams.
pub struct TrainingClient {
    id: u16,
    model: PersonalizedActorCritic,
    env: MicrogridEnv,
    train_noise: NoiseSpec,
    trpo: TrpoConfig,
    weather_seed: u64,
    action_rng: Xoshiro256StarStar,
    episode_counter: u64,
    /// One entry per TRPO update performed.
    pub update_log: Vec<UpdateReport>,
}

impl TrainingClient {
    pub fn new(
        id: u16,
        model: PersonalizedActorCritic,
        env: MicrogridEnv,
        train_noise: NoiseSpec,
        trpo: TrpoConfig,
        weather_seed: u64,
        action_seed: u64,
    ) -> Self {
        Self {
            id,
            model,
            env,
            train_noise,
            trpo,
            weather_seed,
            action_rng: Xoshiro256StarStar::new(action_seed),
            episode_counter: 0,
            update_log: Vec::new(),
        }
    }

    pub fn model(&self) -> &PersonalizedActorCritic {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut PersonalizedActorCritic {
        &mut self.model
    }

    /// Collects one training batch from fresh training-distribution
    /// episodes, advancing the client's episode counter.
    fn collect_batch(&mut self) -> EpisodeBatch {
        let mut batch = EpisodeBatch::new(self.trpo.gamma, self.trpo.gae_lambda);
        for _ in 0..self.trpo.batch_episodes {
            let weather =
                generate_weather(self.weather_seed, self.episode_counter, &self.train_noise);
            self.episode_counter += 1;
            self.env.set_weather(weather);
            episode_rollout(&mut self.env, &self.model, &mut self.action_rng, &mut batch);
        }
        batch
    }

    /// Runs `count` TRPO updates; returns the environment steps consumed.
    pub fn train_updates(&mut self, count: u32) -> u64 {
        let mut steps = 0;
        for _ in 0..count {
            let batch = self.collect_batch();
            steps += batch.len() as u64;
            let report = trpo_update(&mut self.model, &batch, &self.trpo);
            self.update_log.push(report);
        }
        steps
    }
}

impl ClientHandle for TrainingClient {
    fn client_id(&self) -> u16 {
        self.id
    }

    fn run_round(
        &mut self,
        round: u32,
        global_shared: &[f64],
        local_updates: u32,
    ) -> Result<ClientUpdate, FedError> {
        let mut params = self.model.flat_params();
        if params.partition_len(Partition::Shared) != global_shared.len() {
            return Err(FedError::LengthMismatch {
                expected: params.partition_len(Partition::Shared),
                found: global_shared.len(),
                client_id: self.id,
            });
        }
        params.scatter(Partition::Shared, global_shared);
        self.model.load_flat(&params.values);

        let steps = self.train_updates(local_updates);
        let shared_params = self.model.flat_params().extract(Partition::Shared);
        Ok(ClientUpdate {
            client_id: self.id,
            // echo rounds still need a positive weight
            n_k: steps.max(1),
            round,
            shared_params,
        })
    }
}

/// Server-side proxy for a client reached over a byte stream.
pub struct RemoteClientHandle<S: Read + Write> {
    stream: S,
    client_id: u16,
}

impl<S: Read + Write> RemoteClientHandle<S> {
    pub fn new(stream: S, client_id: u16) -> Self {
        Self { stream, client_id }
    }

    pub fn stream_mut(&mut self) -> &mut S {
        &mut self.stream
    }
}

impl<S: Read + Write> ClientHandle for RemoteClientHandle<S> {
    fn client_id(&self) -> u16 {
        self.client_id
    }

    fn run_round(
        &mut self,
        round: u32,
        global_shared: &[f64],
        _local_updates: u32, // networked clients configure their own count
    ) -> Result<ClientUpdate, FedError> {
        write_message(
            &mut self.stream,
            &Message::Broadcast { round, params: global_shared.to_vec() },
        )?;
        match read_message(&mut self.stream)? {
            Message::Update { round: found, client_id, n_k, params } => {
                if found != round {
                    return Err(FedError::RoundMismatch { expected: round, found, client_id });
                }
                Ok(ClientUpdate { client_id, n_k, round, shared_params: params })
            }
            other => Err(FedError::UnexpectedMessage(format!("{other:?}"))),
        }
    }
}

/// Client-side loop for networked mode: register, then answer broadcasts
/// until the server shuts the session down.
pub fn serve_rounds<S: Read + Write>(
    stream: &mut S,
    client: &mut TrainingClient,
    local_updates: u32,
) -> Result<(), FedError> {
    write_message(stream, &Message::Hello { client_id: client.client_id() })?;
    loop {
        match read_message(stream)? {
            Message::Broadcast { round, params } => {
                let update = client.run_round(round, &params, local_updates)?;
                write_message(
                    stream,
                    &Message::Update {
                        round,
                        client_id: update.client_id,
                        n_k: update.n_k,
                        params: update.shared_params,
                    },
                )?;
            }
            Message::RoundDone { .. } => {}
            Message::Shutdown => return Ok(()),
            other => return Err(FedError::UnexpectedMessage(format!("{other:?}"))),
        }
    }
}

/// Accepts `expected` client registrations, returning handles sorted by
/// client id.
pub fn accept_clients(
    listener: &TcpListener,
    expected: usize,
) -> Result<Vec<RemoteClientHandle<TcpStream>>, FedError> {
    let mut handles = Vec::with_capacity(expected);
    while handles.len() < expected {
        let (mut stream, _) = listener.accept()?;
        match read_message(&mut stream)? {
            Message::Hello { client_id } => {
                handles.push(RemoteClientHandle::new(stream, client_id))
            }
            other => return Err(FedError::UnexpectedMessage(format!("{other:?}"))),
        }
    }
    handles.sort_by_key(|h| h.client_id);
    Ok(handles)
}

/// Drives a full networked training run as the server: waits for the
/// expected clients, executes the rounds, acknowledges each, and shuts the
/// clients down. `on_round` observes the state after every aggregation.
pub fn run_networked_server(
    listener: &TcpListener,
    expected_clients: usize,
    rounds: u32,
    local_updates: u32,
    initial_shared: Vec<f64>,
    mut on_round: impl FnMut(&RoundState),
) -> Result<RoundState, FedError> {
    let mut handles = accept_clients(listener, expected_clients)?;
    let mut state = RoundState::new(initial_shared);
    for _ in 0..rounds {
        let mut refs: Vec<&mut dyn ClientHandle> =
            handles.iter_mut().map(|h| h as &mut dyn ClientHandle).collect();
        run_round(&mut state, &mut refs, local_updates)?;
        for h in &mut handles {
            write_message(h.stream_mut(), &Message::RoundDone { round: state.round - 1 })?;
        }
        on_round(&state);
    }
    for h in &mut handles {
        write_message(h.stream_mut(), &Message::Shutdown)?;
    }
    Ok(state)
}

/// Connects to a networked server and serves rounds until shutdown.
pub fn connect_and_serve(
    addr: impl ToSocketAddrs,
    client: &mut TrainingClient,
    local_updates: u32,
) -> Result<(), FedError> {
    let mut stream = TcpStream::connect(addr)?;
    serve_rounds(&mut stream, client, local_updates)
}
