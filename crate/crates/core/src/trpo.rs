//! Trust-region policy optimization over a collected batch of episodes.
//!
//! One update per batch: estimate advantages with GAE, take the natural
//! gradient of the importance-weighted surrogate objective by solving
//! `H x = g` with conjugate gradients (where `H` is the Hessian of the mean
//! KL to the behavior policy, applied matrix-free), line-search the step
//! under the KL bound, then fit the value head by gradient descent on the
//! squared error against the GAE returns.
//!
//! Curvature products are formed by central finite differences of the KL
//! gradient, which keeps the network engine first-order only and lets the
//! product be validated against the analytic one-parameter Fisher case.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EpisodeTotals, Observation};
use crate::nn::ParamVector;
use crate::policy::{gaussian_kl, log_prob, PolicyDistribution};

/// The optimizer's view of a policy/value model: flat parameters plus
/// per-sample gradient accumulation for the three composites it needs.
pub trait ActorCritic {
    fn n_params(&self) -> usize;
    fn flat_params(&self) -> ParamVector;
    fn load_flat(&mut self, values: &[f64]);
    fn policy_value(&self, obs: &Observation) -> (PolicyDistribution, f64);
    /// `acc += scale * d log pi(action | obs) / d theta`
    fn add_log_prob_grad(&self, obs: &Observation, action: f64, scale: f64, acc: &mut [f64]);
    /// `acc += scale * d KL(old || pi_theta(.|obs)) / d theta`
    fn add_kl_grad(&self, obs: &Observation, old: &PolicyDistribution, scale: f64, acc: &mut [f64]);
    /// `acc += scale * d V(obs) / d theta`
    fn add_value_grad(&self, obs: &Observation, scale: f64, acc: &mut [f64]);

    /// Fused surrogate term: computes the importance ratio against `lp_old`,
    /// accumulates `ratio * weight * d log_prob / d theta`, and returns the
    /// ratio. Models override this to share one forward pass.
    fn add_ratio_weighted_log_prob_grad(
        &self,
        obs: &Observation,
        action: f64,
        lp_old: f64,
        weight: f64,
        acc: &mut [f64],
    ) -> f64 {
        let (dist, _) = self.policy_value(obs);
        let ratio = (log_prob(&dist, action) - lp_old).exp();
        self.add_log_prob_grad(obs, action, ratio * weight, acc);
        ratio
    }

    /// Fused value-regression term: accumulates
    /// `scale * 2 * (V(obs) - target) * dV/d theta` and returns the squared
    /// error at the current parameters.
    fn add_value_residual_grad(
        &self,
        obs: &Observation,
        target: f64,
        scale: f64,
        acc: &mut [f64],
    ) -> f64 {
        let (_, value) = self.policy_value(obs);
        self.add_value_grad(obs, scale * 2.0 * (value - target), acc);
        (value - target) * (value - target)
    }
}

/// Trajectories collected under one policy snapshot, flattened over one or
/// more complete 24-step episodes. Actions are the raw Gaussian samples;
/// the stored log-probs and distribution parameters describe the behavior
/// policy at collection time.
#[derive(Debug, Clone)]
pub struct EpisodeBatch {
    pub observations: Vec<Observation>,
    pub actions: Vec<f64>,
    pub log_probs_old: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub means_old: Vec<f64>,
    pub stds_old: Vec<f64>,
    pub episode_totals: Vec<EpisodeTotals>,
    /// Discount factor.
    pub gamma: f64,
    /// GAE interpolation parameter.
    pub lambda: f64,
}

impl EpisodeBatch {
    pub fn new(gamma: f64, lambda: f64) -> Self {
        Self {
            observations: Vec::new(),
            actions: Vec::new(),
            log_probs_old: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
            dones: Vec::new(),
            means_old: Vec::new(),
            stds_old: Vec::new(),
            episode_totals: Vec::new(),
            gamma,
            lambda,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Normalized advantages plus the raw value-regression targets.
#[derive(Debug, Clone)]
pub struct AdvantageSet {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Optimizer settings. Defaults are the canonical TRPO values used by the
/// experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrpoConfig {
    /// Trust-region bound on the mean KL divergence per update.
    pub kl_bound: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub backtrack_coeff: f64,
    pub max_backtracks: usize,
    pub value_epochs: usize,
    pub value_lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Episodes collected per update.
    pub batch_episodes: usize,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self {
            kl_bound: 0.01,
            cg_iters: 10,
            cg_damping: 0.1,
            backtrack_coeff: 0.8,
            max_backtracks: 10,
            value_epochs: 5,
            value_lr: 1e-3,
            gamma: 0.99,
            gae_lambda: 0.95,
            batch_episodes: 16,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrpoError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Unnormalized GAE advantages: the discounted, lambda-weighted sum of TD
/// residuals within each episode.
pub fn advantages_unnormalized(batch: &EpisodeBatch) -> Vec<f64> {
    let n = batch.len();
    assert!(n > 0, "empty batch");
    assert_eq!(batch.dones.last(), Some(&true), "batch must end on an episode boundary");
    let mut adv = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let next_value = if batch.dones[t] { 0.0 } else { batch.values[t + 1] };
        let delta = batch.rewards[t] + batch.gamma * next_value - batch.values[t];
        carry = delta + batch.gamma * batch.lambda * if batch.dones[t] { 0.0 } else { carry };
        adv[t] = carry;
    }
    adv
}

/// GAE advantages (mean/std normalized) and value targets.
pub fn compute_gae(batch: &EpisodeBatch) -> AdvantageSet {
    let mut advantages = advantages_unnormalized(batch);
    let returns: Vec<f64> =
        advantages.iter().zip(&batch.values).map(|(a, v)| a + v).collect();

    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if advantages.len() > 1 && std > 1e-12 {
        for a in &mut advantages {
            *a = (*a - mean) / std;
        }
    } else {
        for a in &mut advantages {
            *a -= mean;
        }
    }
    AdvantageSet { advantages, returns }
}

use crate::nn::dot;

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Importance-weighted surrogate objective and its gradient at the current
/// parameters: `mean(exp(log_prob - log_prob_old) * advantage)`.
pub fn surrogate_loss<P: ActorCritic>(
    policy: &P,
    batch: &EpisodeBatch,
    adv: &AdvantageSet,
) -> Result<(f64, Vec<f64>), TrpoError> {
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; policy.n_params()];
    for i in 0..batch.len() {
        let ratio = policy.add_ratio_weighted_log_prob_grad(
            &batch.observations[i],
            batch.actions[i],
            batch.log_probs_old[i],
            adv.advantages[i] / n,
            &mut grad,
        );
        if !ratio.is_finite() {
            return Err(TrpoError::NonFinite("importance ratio"));
        }
        loss += ratio * adv.advantages[i];
    }
    Ok((loss / n, grad))
}

/// Surrogate objective only, for line-search evaluations.
pub fn surrogate_value<P: ActorCritic>(
    policy: &P,
    batch: &EpisodeBatch,
    adv: &AdvantageSet,
) -> f64 {
    let mut loss = 0.0;
    for i in 0..batch.len() {
        let (dist, _) = policy.policy_value(&batch.observations[i]);
        let ratio = (log_prob(&dist, batch.actions[i]) - batch.log_probs_old[i]).exp();
        loss += ratio * adv.advantages[i];
    }
    loss / batch.len() as f64
}

/// Mean KL from the behavior policy to the current policy over the batch.
pub fn mean_kl<P: ActorCritic>(policy: &P, batch: &EpisodeBatch) -> f64 {
    let mut total = 0.0;
    for i in 0..batch.len() {
        let old = PolicyDistribution { mean: batch.means_old[i], std: batch.stds_old[i] };
        let (dist, _) = policy.policy_value(&batch.observations[i]);
        total += gaussian_kl(&old, &dist);
    }
    total / batch.len() as f64
}

/// Surrogate objective and mean KL from one pass over the batch; the
/// line-search inner loop.
fn line_search_eval<P: ActorCritic>(policy: &P, batch: &EpisodeBatch, adv: &AdvantageSet) -> (f64, f64) {
    let mut surrogate = 0.0;
    let mut kl = 0.0;
    for i in 0..batch.len() {
        let (dist, _) = policy.policy_value(&batch.observations[i]);
        let ratio = (log_prob(&dist, batch.actions[i]) - batch.log_probs_old[i]).exp();
        surrogate += ratio * adv.advantages[i];
        let old = PolicyDistribution { mean: batch.means_old[i], std: batch.stds_old[i] };
        kl += gaussian_kl(&old, &dist);
    }
    let n = batch.len() as f64;
    (surrogate / n, kl / n)
}

fn grad_mean_kl<P: ActorCritic>(policy: &P, batch: &EpisodeBatch) -> Vec<f64> {
    let mut grad = vec![0.0; policy.n_params()];
    let scale = 1.0 / batch.len() as f64;
    for i in 0..batch.len() {
        let old = PolicyDistribution { mean: batch.means_old[i], std: batch.stds_old[i] };
        policy.add_kl_grad(&batch.observations[i], &old, scale, &mut grad);
    }
    grad
}

/// Damped Fisher-vector product `H v + damping * v`, where `H` is the
/// Hessian of the mean KL at the current parameters. Formed by central
/// finite differences of the KL gradient with `eps = 1e-5 / ||v||`; the
/// parameters are restored bit-exactly afterwards.
pub fn fisher_vector_product<P: ActorCritic>(
    policy: &mut P,
    batch: &EpisodeBatch,
    v: &[f64],
    damping: f64,
) -> Result<Vec<f64>, TrpoError> {
    let v_norm = norm(v);
    if v_norm == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let eps = 1e-5 / v_norm;
    let theta0 = policy.flat_params().values;

    let shifted: Vec<f64> = theta0.iter().zip(v).map(|(t, vi)| t + eps * vi).collect();
    policy.load_flat(&shifted);
    let grad_plus = grad_mean_kl(policy, batch);

    let shifted: Vec<f64> = theta0.iter().zip(v).map(|(t, vi)| t - eps * vi).collect();
    policy.load_flat(&shifted);
    let grad_minus = grad_mean_kl(policy, batch);

    policy.load_flat(&theta0);

    let mut out = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        let hv = (grad_plus[i] - grad_minus[i]) / (2.0 * eps) + damping * v[i];
        if !hv.is_finite() {
            return Err(TrpoError::NonFinite("fisher-vector product"));
        }
        out.push(hv);
    }
    Ok(out)
}

/// Output of [`conjugate_gradient`].
#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    /// Final residual norm `||A x - b||`.
    pub residual: f64,
    pub iterations: usize,
    /// `x . A x`, recovered from `A x = b - r` without another product.
    pub curvature: f64,
}

/// Solves `A x = b` for a symmetric positive-definite operator given as a
/// matrix-vector product closure. Stops at `iters` products or when the
/// residual norm drops to `tol`.
pub fn conjugate_gradient<E>(
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    b: &[f64],
    iters: usize,
    tol: f64,
) -> Result<CgResult, E> {
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rs_old = dot(&r, &r);
    let mut iterations = 0;
    for _ in 0..iters {
        if rs_old.sqrt() <= tol {
            break;
        }
        let ap = apply(&p)?;
        let p_ap = dot(&p, &ap);
        if p_ap <= 0.0 || !p_ap.is_finite() {
            break; // lost positive-definiteness; keep the best iterate
        }
        let alpha = rs_old / p_ap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        let rs_new = dot(&r, &r);
        let ratio = rs_new / rs_old;
        for i in 0..p.len() {
            p[i] = r[i] + ratio * p[i];
        }
        rs_old = rs_new;
    }
    let curvature = dot(&x, b) - dot(&x, &r);
    Ok(CgResult { x, residual: rs_old.sqrt(), iterations, curvature })
}

/// Result of the trust-region policy step.
#[derive(Debug, Clone, Copy)]
pub struct PolicyStepReport {
    pub accepted: bool,
    /// Measured mean KL of the accepted candidate (0 when rejected).
    pub kl: f64,
    /// Surrogate improvement of the accepted candidate (0 when rejected).
    pub surrogate_gain: f64,
    /// Line-search shrink count of the accepted candidate, or the full
    /// budget when rejected.
    pub backtracks: usize,
    /// Final CG residual norm.
    pub cg_residual: f64,
    /// For rejected steps: whether the parameters compared bit-equal to the
    /// pre-step snapshot after restoration. Always true for accepted steps.
    pub restored_exactly: bool,
}

/// One KL-constrained natural-gradient step.
///
/// Computes the surrogate gradient, solves for the step direction with CG
/// against the damped Fisher operator, scales it to the trust-region radius,
/// and backtracks until the candidate both improves the surrogate and
/// respects the KL bound. Numerical failure or an exhausted line search
/// restores the pre-step parameters exactly.
pub fn policy_step<P: ActorCritic>(
    policy: &mut P,
    batch: &EpisodeBatch,
    adv: &AdvantageSet,
    cfg: &TrpoConfig,
) -> PolicyStepReport {
    let theta0 = policy.flat_params().values;

    let reject = |policy: &mut P, backtracks: usize, cg_residual: f64| {
        policy.load_flat(&theta0);
        let restored = policy.flat_params().values == theta0;
        PolicyStepReport {
            accepted: false,
            kl: 0.0,
            surrogate_gain: 0.0,
            backtracks,
            cg_residual,
            restored_exactly: restored,
        }
    };

    let (l0, grad) = match surrogate_loss(policy, batch, adv) {
        Ok(v) => v,
        Err(_) => return reject(policy, 0, f64::NAN),
    };
    let grad_norm = norm(&grad);
    if grad_norm == 0.0 || !grad_norm.is_finite() {
        return reject(policy, 0, 0.0);
    }

    let cg = match conjugate_gradient(
        |p| fisher_vector_product(policy, batch, p, cfg.cg_damping),
        &grad,
        cfg.cg_iters,
        1e-6 * grad_norm,
    ) {
        Ok(cg) => cg,
        Err(_) => return reject(policy, 0, f64::NAN),
    };

    // x.(Hx + damping x) comes out of CG for free
    let x_h_x = cg.curvature;
    if x_h_x <= 0.0 || !x_h_x.is_finite() {
        return reject(policy, 0, cg.residual);
    }
    let beta = (2.0 * cfg.kl_bound / x_h_x).sqrt();

    for j in 0..cfg.max_backtracks {
        let scale = beta * cfg.backtrack_coeff.powi(j as i32);
        let candidate: Vec<f64> =
            theta0.iter().zip(&cg.x).map(|(t, xi)| t + scale * xi).collect();
        policy.load_flat(&candidate);
        let (l, kl) = line_search_eval(policy, batch, adv);
        if l.is_finite() && kl.is_finite() && l > l0 && kl <= cfg.kl_bound {
            return PolicyStepReport {
                accepted: true,
                kl,
                surrogate_gain: l - l0,
                backtracks: j,
                cg_residual: cg.residual,
                restored_exactly: true,
            };
        }
    }
    reject(policy, cfg.max_backtracks, cg.residual)
}

/// Mean squared error of the value head against the targets.
pub fn value_loss<P: ActorCritic>(policy: &P, batch: &EpisodeBatch, returns: &[f64]) -> f64 {
    let mut total = 0.0;
    for (obs, target) in batch.observations.iter().zip(returns) {
        let (_, value) = policy.policy_value(obs);
        total += (value - target) * (value - target);
    }
    total / batch.len() as f64
}

/// Fits the value head with gradient descent, halving the step within an
/// epoch whenever it would increase the loss. Never finishes worse than it
/// started.
pub fn fit_value<P: ActorCritic>(
    policy: &mut P,
    batch: &EpisodeBatch,
    returns: &[f64],
    cfg: &TrpoConfig,
) -> (f64, f64) {
    if cfg.value_epochs == 0 {
        let loss = value_loss(policy, batch, returns);
        return (loss, loss);
    }
    let n = batch.len() as f64;
    let mut lr = cfg.value_lr;
    let mut before = 0.0;
    let mut current = 0.0;
    for epoch in 0..cfg.value_epochs {
        let mut grad = vec![0.0; policy.n_params()];
        let mut loss = 0.0;
        for (i, obs) in batch.observations.iter().enumerate() {
            loss += policy.add_value_residual_grad(obs, returns[i], 1.0 / n, &mut grad);
        }
        loss /= n;
        if epoch == 0 {
            before = loss;
        }
        current = loss;
        let theta = policy.flat_params().values;
        let mut stepped = false;
        for _ in 0..5 {
            let candidate: Vec<f64> =
                theta.iter().zip(&grad).map(|(t, g)| t - lr * g).collect();
            policy.load_flat(&candidate);
            let loss = value_loss(policy, batch, returns);
            if loss.is_finite() && loss <= current {
                current = loss;
                stepped = true;
                break;
            }
            lr *= 0.5;
        }
        if !stepped {
            policy.load_flat(&theta);
        }
    }
    (before, current)
}

/// Per-update log record; one CSV line per TRPO update.
#[derive(Debug, Clone, Copy)]
pub struct UpdateReport {
    pub accepted: bool,
    pub kl: f64,
    pub surrogate_gain: f64,
    pub backtracks: usize,
    pub cg_residual: f64,
    pub restored_exactly: bool,
    pub value_loss_before: f64,
    pub value_loss_after: f64,
}

/// One full TRPO update: policy trust-region step, then value fitting.
pub fn trpo_update<P: ActorCritic>(
    policy: &mut P,
    batch: &EpisodeBatch,
    cfg: &TrpoConfig,
) -> UpdateReport {
    let adv = compute_gae(batch);
    let step = policy_step(policy, batch, &adv, cfg);
    let (value_loss_before, value_loss_after) = fit_value(policy, batch, &adv.returns, cfg);
    UpdateReport {
        accepted: step.accepted,
        kl: step.kl,
        surrogate_gain: step.surrogate_gain,
        backtracks: step.backtracks,
        cg_residual: step.cg_residual,
        restored_exactly: step.restored_exactly,
        value_loss_before,
        value_loss_after,
    }
}
