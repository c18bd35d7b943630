//! Personalized-encoding actor-critic.
//!
//! The model is split into a personal component and shared components. The
//! personal encoder maps the full observation to a low-dimensional encoding
//! that captures the building's own demand and generation profile. A shared
//! trunk consumes (temperature, humidity, encoding); a shared feature
//! processor handles the remaining features (soc, net, price, hour); a
//! shared head maps the concatenation to a pre-squash action mean and a
//! state value. The policy is a Gaussian over the battery command with a
//! single learnable log-std:
//!
//! ```text
//! mean  = tanh(head[0])
//! value = head[1]
//! std   = clamp(exp(log_std), sigma_min, sigma_max)
//! ```
//!
//! In federated training the encoder parameters never leave the client;
//! everything else is aggregated. A fully-shared ablation tags the encoder
//! as shared too, leaving the personal partition empty.

use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::nn::{Activation, DenseNet, ParamVector, Partition, Segment};
use crate::rng::Xoshiro256StarStar;
use crate::trpo::ActorCritic;

/// Gaussian policy over the battery command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyDistribution {
    pub mean: f64,
    pub std: f64,
}

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_7; // 0.5 * ln(2*pi)

/// Log-density of `a` under the distribution.
pub fn log_prob(dist: &PolicyDistribution, a: f64) -> f64 {
    let z = (a - dist.mean) / dist.std;
    -0.5 * z * z - dist.std.ln() - HALF_LN_TAU
}

/// Closed-form KL divergence between two scalar Gaussians, `KL(old || new)`.
pub fn gaussian_kl(old: &PolicyDistribution, new: &PolicyDistribution) -> f64 {
    let var_old = old.std * old.std;
    let var_new = new.std * new.std;
    let mean_diff = old.mean - new.mean;
    (new.std / old.std).ln() + (var_old + mean_diff * mean_diff) / (2.0 * var_new) - 0.5
}

/// A policy sample: the raw Gaussian draw, the command after clamping to the
/// action bounds, and the log-prob evaluated at the raw draw (the clamp is
/// an environment-side projection, not a change of measure).
#[derive(Debug, Clone, Copy)]
pub struct SampledAction {
    pub raw: f64,
    pub clamped: f64,
    pub log_prob: f64,
}

pub fn sample_action(dist: &PolicyDistribution, rng: &mut Xoshiro256StarStar) -> SampledAction {
    let raw = dist.mean + dist.std * rng.normal();
    SampledAction {
        raw,
        clamped: raw.clamp(-1.0, 1.0),
        log_prob: log_prob(dist, raw),
    }
}

/// Observation normalization constants; exact affine maps per feature.
const NORM_OFFSET: [f64; 6] = [25.0, 0.5, 0.0, 0.0, 0.0, 0.0];
const NORM_SCALE: [f64; 6] = [15.0, 0.3, 1.0, 10.0, 0.4, 23.0];

/// Maps a raw observation to the normalized six-feature vector
/// `[t, h, soc, net, price, hour]`.
pub fn normalize_obs(obs: &Observation) -> [f64; 6] {
    let raw = [
        obs.t_out,
        obs.h_out,
        obs.soc,
        obs.net_consumption,
        obs.price,
        obs.hour as f64,
    ];
    std::array::from_fn(|i| (raw[i] - NORM_OFFSET[i]) / NORM_SCALE[i])
}

/// Inverse of [`normalize_obs`] on the raw feature values.
pub fn denormalize_features(features: &[f64; 6]) -> [f64; 6] {
    std::array::from_fn(|i| features[i] * NORM_SCALE[i] + NORM_OFFSET[i])
}

/// Architecture and distribution bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Dimension of the personalized encoding.
    pub encoding_dim: usize,
    pub encoder_hidden: usize,
    pub trunk_hidden: usize,
    pub trunk_out: usize,
    pub processor_hidden: usize,
    pub processor_out: usize,
    pub head_hidden: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub log_std_init: f64,
    /// When false, the encoder is tagged shared and the personal partition
    /// is empty (the fully-shared ablation).
    pub personalized: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoding_dim: 8,
            encoder_hidden: 32,
            trunk_hidden: 64,
            trunk_out: 32,
            processor_hidden: 32,
            processor_out: 16,
            head_hidden: 32,
            sigma_min: 0.05,
            sigma_max: 1.0,
            log_std_init: -std::f64::consts::LN_2, // ln(0.5)
            personalized: true,
        }
    }
}

/// The actor-critic model; see the module docs for the wiring.
#[derive(Debug, Clone)]
pub struct PersonalizedActorCritic {
    cfg: ModelConfig,
    encoder: DenseNet,
    trunk: DenseNet,
    processor: DenseNet,
    head: DenseNet,
    log_std: f64,
    layout: Vec<Segment>,
    offsets: [usize; 5], // encoder, trunk, processor, head, log_std
    // reusable forward/backward buffers; gradient evaluation is the inner
    // loop of training and must not allocate per sample
    ws: std::cell::RefCell<Workspace>,
}

#[derive(Debug, Clone, Default)]
struct Workspace {
    enc: crate::nn::ForwardTrace,
    trunk: crate::nn::ForwardTrace,
    proc: crate::nn::ForwardTrace,
    head: crate::nn::ForwardTrace,
    trunk_in: Vec<f64>,
    head_in: Vec<f64>,
}

impl PersonalizedActorCritic {
    /// Builds the model. Shared components draw their initial weights from
    /// `shared_seed` and the personal encoder from `personal_seed`, so
    /// federated clients can share one initialization while keeping
    /// client-specific encoders.
    pub fn new(cfg: ModelConfig, shared_seed: u64, personal_seed: u64) -> Self {
        let mut personal_rng = Xoshiro256StarStar::new(personal_seed);
        let mut shared_rng = Xoshiro256StarStar::new(shared_seed);
        let tanh = Activation::Tanh;
        let encoder = DenseNet::new(
            &[6, cfg.encoder_hidden, cfg.encoding_dim],
            &[tanh, tanh],
            &mut personal_rng,
        );
        let trunk = DenseNet::new(
            &[2 + cfg.encoding_dim, cfg.trunk_hidden, cfg.trunk_out],
            &[tanh, tanh],
            &mut shared_rng,
        );
        let processor = DenseNet::new(
            &[4, cfg.processor_hidden, cfg.processor_out],
            &[tanh, tanh],
            &mut shared_rng,
        );
        let head = DenseNet::new(
            &[cfg.trunk_out + cfg.processor_out, cfg.head_hidden, 2],
            &[tanh, Activation::Identity],
            &mut shared_rng,
        );

        let encoder_partition = if cfg.personalized { Partition::Personal } else { Partition::Shared };
        let mut layout = Vec::new();
        let mut offsets = [0usize; 5];
        let mut cursor = 0;
        offsets[0] = cursor;
        cursor = encoder.describe_layout("personal_encoder", encoder_partition, cursor, &mut layout);
        offsets[1] = cursor;
        cursor = trunk.describe_layout("shared_trunk", Partition::Shared, cursor, &mut layout);
        offsets[2] = cursor;
        cursor = processor.describe_layout("feature_processor", Partition::Shared, cursor, &mut layout);
        offsets[3] = cursor;
        cursor = head.describe_layout("head", Partition::Shared, cursor, &mut layout);
        offsets[4] = cursor;
        layout.push(Segment {
            name: "log_std".into(),
            offset: cursor,
            len: 1,
            partition: Partition::Shared,
        });

        Self {
            log_std: cfg.log_std_init,
            cfg,
            encoder,
            trunk,
            processor,
            head,
            layout,
            offsets,
            ws: std::cell::RefCell::new(Workspace::default()),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Current policy standard deviation after the clamp.
    pub fn sigma(&self) -> f64 {
        self.log_std.exp().clamp(self.cfg.sigma_min, self.cfg.sigma_max)
    }

    /// d(sigma)/d(log_std): zero where the clamp is active.
    fn sigma_grad(&self) -> f64 {
        let sigma = self.log_std.exp();
        if sigma > self.cfg.sigma_min && sigma < self.cfg.sigma_max {
            sigma
        } else {
            0.0
        }
    }

    /// The personalized encoding for an observation.
    pub fn encode_personal(&self, obs: &Observation) -> Vec<f64> {
        self.encoder.forward(&normalize_obs(obs))
    }

    /// Forward pass through the workspace buffers; returns (mean, value).
    fn forward_ws(&self, ws: &mut Workspace, obs: &Observation) -> (f64, f64) {
        let features = normalize_obs(obs);
        self.encoder.forward_trace_into(&features, &mut ws.enc);
        ws.trunk_in.clear();
        ws.trunk_in.extend_from_slice(&features[..2]);
        ws.trunk_in.extend_from_slice(ws.enc.output());
        self.trunk.forward_trace_into(&ws.trunk_in, &mut ws.trunk);
        self.processor.forward_trace_into(&features[2..], &mut ws.proc);
        ws.head_in.clear();
        ws.head_in.extend_from_slice(ws.trunk.output());
        ws.head_in.extend_from_slice(ws.proc.output());
        self.head.forward_trace_into(&ws.head_in, &mut ws.head);
        let out = ws.head.output();
        (out[0].tanh(), out[1])
    }

    /// The policy distribution and state value for an observation.
    pub fn policy_and_value(&self, obs: &Observation) -> (PolicyDistribution, f64) {
        let mut ws = self.ws.borrow_mut();
        let (mean, value) = self.forward_ws(&mut ws, obs);
        (PolicyDistribution { mean, std: self.sigma() }, value)
    }

    /// Accumulates `d(d_mean * mean + d_value * value + d_sigma * sigma)` with
    /// respect to every parameter into `acc` (model-flat layout). Requires
    /// the workspace to hold the forward pass of the same observation.
    fn backprop_ws(
        &self,
        ws: &Workspace,
        mean: f64,
        d_mean: f64,
        d_value: f64,
        d_sigma: f64,
        acc: &mut [f64],
    ) {
        debug_assert_eq!(acc.len(), self.n_params());
        let head_out_grad = [d_mean * (1.0 - mean * mean), d_value];
        let d_head_in = self.head.backward_into(
            &ws.head,
            &head_out_grad,
            &mut acc[self.offsets[3]..self.offsets[4]],
        );
        let (d_trunk_out, d_proc_out) = d_head_in.split_at(self.cfg.trunk_out);
        let d_trunk_in = self.trunk.backward_into(
            &ws.trunk,
            d_trunk_out,
            &mut acc[self.offsets[1]..self.offsets[2]],
        );
        self.processor.backward_into(
            &ws.proc,
            d_proc_out,
            &mut acc[self.offsets[2]..self.offsets[3]],
        );
        // gradient w.r.t. the encoding flows out of the trunk input
        self.encoder.backward_into(
            &ws.enc,
            &d_trunk_in[2..],
            &mut acc[self.offsets[0]..self.offsets[1]],
        );
        acc[self.offsets[4]] += d_sigma * self.sigma_grad();
    }
}

impl ActorCritic for PersonalizedActorCritic {
    fn n_params(&self) -> usize {
        self.offsets[4] + 1
    }

    fn flat_params(&self) -> ParamVector {
        let mut values = vec![0.0; self.n_params()];
        self.encoder.flat_into(&mut values[self.offsets[0]..self.offsets[1]]);
        self.trunk.flat_into(&mut values[self.offsets[1]..self.offsets[2]]);
        self.processor.flat_into(&mut values[self.offsets[2]..self.offsets[3]]);
        self.head.flat_into(&mut values[self.offsets[3]..self.offsets[4]]);
        values[self.offsets[4]] = self.log_std;
        ParamVector { values, layout: self.layout.clone() }
    }

    fn load_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.n_params(), "parameter count mismatch");
        self.encoder.load_flat(&values[self.offsets[0]..self.offsets[1]]);
        self.trunk.load_flat(&values[self.offsets[1]..self.offsets[2]]);
        self.processor.load_flat(&values[self.offsets[2]..self.offsets[3]]);
        self.head.load_flat(&values[self.offsets[3]..self.offsets[4]]);
        self.log_std = values[self.offsets[4]];
    }

    fn policy_value(&self, obs: &Observation) -> (PolicyDistribution, f64) {
        self.policy_and_value(obs)
    }

    fn add_log_prob_grad(&self, obs: &Observation, action: f64, scale: f64, acc: &mut [f64]) {
        let mut ws = self.ws.borrow_mut();
        let (mean, _) = self.forward_ws(&mut ws, obs);
        let sigma = self.sigma();
        let z = (action - mean) / sigma;
        let d_mean = scale * z / sigma;
        let d_sigma = scale * (z * z - 1.0) / sigma;
        self.backprop_ws(&ws, mean, d_mean, 0.0, d_sigma, acc);
    }

    fn add_kl_grad(&self, obs: &Observation, old: &PolicyDistribution, scale: f64, acc: &mut [f64]) {
        let mut ws = self.ws.borrow_mut();
        let (mean, _) = self.forward_ws(&mut ws, obs);
        let sigma = self.sigma();
        let var = sigma * sigma;
        let mean_diff = mean - old.mean;
        let d_mean = scale * mean_diff / var;
        let d_sigma =
            scale * (1.0 / sigma - (old.std * old.std + mean_diff * mean_diff) / (var * sigma));
        self.backprop_ws(&ws, mean, d_mean, 0.0, d_sigma, acc);
    }

    fn add_value_grad(&self, obs: &Observation, scale: f64, acc: &mut [f64]) {
        let mut ws = self.ws.borrow_mut();
        let (mean, _) = self.forward_ws(&mut ws, obs);
        // d_mean = 0 keeps the policy-mean output row untouched during value
        // fitting; shared hidden layers still receive the value gradient.
        self.backprop_ws(&ws, mean, 0.0, scale, 0.0, acc);
    }

    fn add_ratio_weighted_log_prob_grad(
        &self,
        obs: &Observation,
        action: f64,
        lp_old: f64,
        weight: f64,
        acc: &mut [f64],
    ) -> f64 {
        let mut ws = self.ws.borrow_mut();
        let (mean, _) = self.forward_ws(&mut ws, obs);
        let sigma = self.sigma();
        let dist = PolicyDistribution { mean, std: sigma };
        let ratio = (log_prob(&dist, action) - lp_old).exp();
        let scale = ratio * weight;
        let z = (action - mean) / sigma;
        self.backprop_ws(&ws, mean, scale * z / sigma, 0.0, scale * (z * z - 1.0) / sigma, acc);
        ratio
    }

    fn add_value_residual_grad(
        &self,
        obs: &Observation,
        target: f64,
        scale: f64,
        acc: &mut [f64],
    ) -> f64 {
        let mut ws = self.ws.borrow_mut();
        let (mean, value) = self.forward_ws(&mut ws, obs);
        let err = value - target;
        self.backprop_ws(&ws, mean, 0.0, scale * 2.0 * err, 0.0, acc);
        err * err
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Partition;
    use proptest::prelude::*;

    fn obs() -> Observation {
        Observation {
            t_out: 27.5,
            h_out: 0.62,
            soc: 0.4,
            net_consumption: 2.3,
            price: 0.4,
            hour: 14,
        }
    }

    fn model(personalized: bool, shared_seed: u64, personal_seed: u64) -> PersonalizedActorCritic {
        let cfg = ModelConfig { personalized, ..ModelConfig::default() };
        PersonalizedActorCritic::new(cfg, shared_seed, personal_seed)
    }

    #[test]
    fn zero_parameters_give_neutral_outputs() {
        let mut m = model(true, 1, 2);
        m.load_flat(&vec![0.0; m.n_params()]);
        let (dist, value) = m.policy_and_value(&obs());
        assert_eq!(dist.mean, 0.0);
        assert_eq!(value, 0.0);
        assert_eq!(dist.std, 1.0); // exp(0) = 1, inside the clamp band
        assert!(m.encode_personal(&obs()).iter().all(|&e| e == 0.0));
    }

    #[test]
    fn encoding_has_configured_dimension() {
        let m = model(true, 1, 2);
        assert_eq!(m.encode_personal(&obs()).len(), 8);
    }

    #[test]
    fn different_personal_weights_give_different_encodings() {
        let a = model(true, 1, 2);
        let b = model(true, 1, 3);
        assert_ne!(a.encode_personal(&obs()), b.encode_personal(&obs()));
    }

    #[test]
    fn partition_sizes_cover_all_parameters() {
        let m = model(true, 1, 2);
        let pv = m.flat_params();
        assert!(pv.layout_is_tiling());
        let personal = pv.partition_len(Partition::Personal);
        let shared = pv.partition_len(Partition::Shared);
        assert_eq!(personal + shared, m.n_params());
        assert!(personal > 0);

        let fl = model(false, 1, 2);
        assert_eq!(fl.flat_params().partition_len(Partition::Personal), 0);
        assert_eq!(fl.n_params(), m.n_params());
    }

    #[test]
    fn swapping_personal_segments_transfers_the_policy() {
        // Same shared init, different encoders.
        let a = model(true, 40, 1);
        let mut b = model(true, 40, 2);
        let o = obs();
        assert_ne!(a.encode_personal(&o), b.encode_personal(&o));

        // Give b a's personal segments: b must now agree with a everywhere,
        // since their shared parameters were identical already.
        let mut pb = b.flat_params();
        pb.scatter(Partition::Personal, &a.flat_params().extract(Partition::Personal));
        b.load_flat(&pb.values);
        assert_eq!(b.encode_personal(&o), a.encode_personal(&o));
        let (da, va) = a.policy_and_value(&o);
        let (db, vb) = b.policy_and_value(&o);
        assert_eq!((da, va), (db, vb));
    }

    #[test]
    fn flat_round_trip_is_identity() {
        let mut m = model(true, 7, 8);
        let before = m.flat_params();
        let (d0, v0) = m.policy_and_value(&obs());
        m.load_flat(&before.values);
        assert_eq!(m.flat_params(), before);
        assert_eq!(m.policy_and_value(&obs()), (d0, v0));
    }

    #[test]
    fn mean_stays_in_unit_interval() {
        let mut rng = Xoshiro256StarStar::new(3);
        for trial in 0..5000 {
            let mut m = model(true, trial, trial + 1);
            let o = Observation {
                t_out: rng.uniform(-20.0, 50.0),
                h_out: rng.uniform(0.0, 1.0),
                soc: rng.uniform(0.0, 1.0),
                net_consumption: rng.uniform(0.0, 40.0),
                price: rng.uniform(0.05, 0.5),
                hour: (rng.next_u64() % 24) as usize,
            };
            let (dist, _) = m.policy_and_value(&o);
            assert!(dist.mean > -1.0 && dist.mean < 1.0);
            assert!(dist.std >= 0.05 && dist.std <= 1.0);
            // even absurdly scaled parameters cannot escape the squash
            let scrambled: Vec<f64> =
                (0..m.n_params()).map(|_| rng.uniform(-3.0, 3.0)).collect();
            m.load_flat(&scrambled);
            let (dist, _) = m.policy_and_value(&o);
            assert!(dist.mean >= -1.0 && dist.mean <= 1.0);
        }
    }

    #[test]
    fn log_prob_at_mode_matches_gaussian_density() {
        let dist = PolicyDistribution { mean: 0.3, std: 0.25 };
        let expected = -(0.25f64).ln() - 0.5 * std::f64::consts::TAU.ln();
        assert!((log_prob(&dist, 0.3) - expected).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_concentrated_and_unbiased() {
        let mut rng = Xoshiro256StarStar::new(5);
        let dist = PolicyDistribution { mean: 0.3, std: 0.05 };
        for _ in 0..100 {
            let s = sample_action(&dist, &mut rng);
            assert!((s.raw - 0.3).abs() <= 5.0 * 0.05);
        }

        let dist = PolicyDistribution { mean: 0.2, std: 0.6 };
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_action(&dist, &mut rng).raw;
        }
        let se = dist.std / (n as f64).sqrt();
        assert!((sum / n as f64 - dist.mean).abs() <= 3.0 * se);
    }

    #[test]
    fn kl_closed_forms() {
        let unit = PolicyDistribution { mean: 0.0, std: 1.0 };
        assert_eq!(gaussian_kl(&unit, &unit), 0.0);

        let shifted = PolicyDistribution { mean: 1.0, std: 1.0 };
        assert!((gaussian_kl(&unit, &shifted) - 0.5).abs() < 1e-15);

        let widened = PolicyDistribution { mean: 0.0, std: 2.0 };
        let expected = (2.0f64).ln() + 1.0 / 8.0 - 0.5;
        assert!((gaussian_kl(&unit, &widened) - expected).abs() < 1e-15);
        assert!((expected - 0.318147).abs() < 1e-6);
    }

    #[test]
    fn normalization_round_trips() {
        let o = obs();
        let features = normalize_obs(&o);
        let raw = denormalize_features(&features);
        let expected = [o.t_out, o.h_out, o.soc, o.net_consumption, o.price, o.hour as f64];
        for (r, e) in raw.iter().zip(&expected) {
            assert!((r - e).abs() < 1e-12);
        }
    }

    /// Central-difference check of d(log_prob + value)/d(theta).
    #[test]
    fn composite_gradient_matches_finite_differences() {
        let mut m = model(true, 11, 12);
        let o = obs();
        let action = 0.37;

        let mut analytic = vec![0.0; m.n_params()];
        m.add_log_prob_grad(&o, action, 1.0, &mut analytic);
        m.add_value_grad(&o, 1.0, &mut analytic);

        let f = |m: &PersonalizedActorCritic| {
            let (dist, value) = m.policy_and_value(&o);
            log_prob(&dist, action) + value
        };
        let mut theta = m.flat_params().values;
        let eps = 1e-5;
        let n = theta.len();
        let mut worst: f64 = 0.0;
        for k in (0..n).step_by(1 + n / 200) {
            let orig = theta[k];
            theta[k] = orig + eps;
            m.load_flat(&theta);
            let plus = f(&m);
            theta[k] = orig - eps;
            m.load_flat(&theta);
            let minus = f(&m);
            theta[k] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            let rel = (analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);
        }
        m.load_flat(&theta);
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    /// Same check for the KL gradient with respect to the new policy.
    #[test]
    fn kl_gradient_matches_finite_differences() {
        let mut m = model(true, 21, 22);
        let o = obs();
        let old = PolicyDistribution { mean: -0.2, std: 0.4 };

        let mut analytic = vec![0.0; m.n_params()];
        m.add_kl_grad(&o, &old, 1.0, &mut analytic);

        let mut theta = m.flat_params().values;
        let eps = 1e-5;
        let n = theta.len();
        let mut worst: f64 = 0.0;
        for k in (0..n).step_by(1 + n / 200) {
            let orig = theta[k];
            theta[k] = orig + eps;
            m.load_flat(&theta);
            let (dist, _) = m.policy_and_value(&o);
            let plus = gaussian_kl(&old, &dist);
            theta[k] = orig - eps;
            m.load_flat(&theta);
            let (dist, _) = m.policy_and_value(&o);
            let minus = gaussian_kl(&old, &dist);
            theta[k] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            let rel = (analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);
        }
        m.load_flat(&theta);
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative_and_zero_only_at_equality(
            m1 in -0.9f64..0.9, m2 in -0.9f64..0.9,
            s1 in 0.05f64..1.0, s2 in 0.05f64..1.0,
        ) {
            let a = PolicyDistribution { mean: m1, std: s1 };
            let b = PolicyDistribution { mean: m2, std: s2 };
            let kl = gaussian_kl(&a, &b);
            prop_assert!(kl >= -1e-12);
            if (m1 - m2).abs() > 1e-9 || (s1 - s2).abs() > 1e-9 {
                prop_assert!(kl > 0.0);
            }
        }
    }
}
