//! Benchmarks for the operations that dominate training time: policy
//! forward/backward passes, curvature products, GAE, aggregation, and the
//! wire codec.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use gridfed_bench::{sample_client, sample_observation};
use gridfed_core::fed::{aggregate, ClientUpdate};
use gridfed_core::policy::PolicyDistribution;
use gridfed_core::rng::Xoshiro256StarStar;
use gridfed_core::trpo::{
    advantages_unnormalized, compute_gae, fisher_vector_product, trpo_update, ActorCritic,
    EpisodeBatch, TrpoConfig,
};
use gridfed_core::wire::{decode_message, encode_message, Message};

fn policy_passes(c: &mut Criterion) {
    let client = sample_client();
    let model = client.model();
    let obs = sample_observation();

    c.bench_function("policy_forward", |b| {
        b.iter(|| black_box(model.policy_and_value(black_box(&obs))))
    });

    let old = PolicyDistribution { mean: 0.1, std: 0.5 };
    let mut acc = vec![0.0; model.n_params()];
    c.bench_function("kl_grad_pass", |b| {
        b.iter(|| model.add_kl_grad(black_box(&obs), &old, 1e-3, &mut acc))
    });
}

fn small_batch(model: &impl ActorCritic, steps: usize) -> EpisodeBatch {
    let cfg = TrpoConfig::default();
    let mut rng = Xoshiro256StarStar::new(7);
    let obs = sample_observation();
    let mut batch = EpisodeBatch::new(cfg.gamma, cfg.gae_lambda);
    for i in 0..steps {
        let (dist, value) = model.policy_value(&obs);
        let sample = gridfed_core::policy::sample_action(&dist, &mut rng);
        batch.observations.push(obs);
        batch.actions.push(sample.raw);
        batch.log_probs_old.push(sample.log_prob);
        batch.rewards.push(-(sample.clamped - 0.4) * (sample.clamped - 0.4));
        batch.values.push(value);
        batch.dones.push(i % 24 == 23 || i == steps - 1);
        batch.means_old.push(dist.mean);
        batch.stds_old.push(dist.std);
    }
    batch
}

fn optimizer_ops(c: &mut Criterion) {
    let mut client = sample_client();
    let batch = small_batch(client.model(), 96);
    let cfg = TrpoConfig::default();

    c.bench_function("gae_96_steps", |b| b.iter(|| black_box(compute_gae(black_box(&batch)))));

    let n = client.model().n_params();
    let direction: Vec<f64> = (0..n).map(|i| ((i % 13) as f64 - 6.0) * 0.1).collect();
    c.bench_function("fvp_96_steps", |b| {
        b.iter(|| {
            let hv =
                fisher_vector_product(client.model_mut(), &batch, &direction, 0.1).unwrap();
            black_box(hv)
        })
    });

    c.bench_function("trpo_update_96_steps", |b| {
        b.iter_batched(
            || (client.model().clone(), batch.clone()),
            |(mut model, batch)| black_box(trpo_update(&mut model, &batch, &cfg)),
            BatchSize::SmallInput,
        )
    });

    let long = small_batch(client.model(), 192);
    c.bench_function("gae_unnormalized_192", |b| {
        b.iter(|| black_box(advantages_unnormalized(black_box(&long))))
    });
}

fn fed_ops(c: &mut Criterion) {
    let params: Vec<f64> = (0..5000).map(|i| i as f64 * 1e-3).collect();
    let updates: Vec<ClientUpdate> = (0..5)
        .map(|k| ClientUpdate {
            client_id: k as u16,
            n_k: 384,
            round: 3,
            shared_params: params.iter().map(|p| p + k as f64).collect(),
        })
        .collect();
    c.bench_function("aggregate_5x5000", |b| {
        b.iter(|| black_box(aggregate(black_box(&updates)).unwrap()))
    });

    let msg = Message::Update { round: 3, client_id: 2, n_k: 384, params };
    c.bench_function("wire_encode_decode", |b| {
        b.iter(|| {
            let bytes = encode_message(black_box(&msg));
            black_box(decode_message(&bytes).unwrap())
        })
    });
}

criterion_group!(benches, policy_passes, optimizer_ops, fed_ops);
criterion_main!(benches);
