//! Clipped-surrogate PPO with separate Adam states for actor, log-std and
//! critic.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{PolicyNetwork, Transition};
use crate::error::{IppError, Result};
use crate::nn::{clamp_log_std, squash_correction, Adam};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    pub clip_ratio: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub vf_coef: f64,
    /// Global gradient-norm cap; 0 disables clipping.
    pub max_grad_norm: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_ratio: 0.2,
            epochs: 4,
            minibatch: 64,
            lr: 3e-4,
            entropy_coef: 0.0,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            gamma: 0.99,
            lambda: 0.95,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.clip_ratio > 0.0
            && self.epochs >= 1
            && self.minibatch >= 1
            && self.lr > 0.0
            && self.entropy_coef >= 0.0
            && self.vf_coef >= 0.0
            && self.max_grad_norm >= 0.0
            && (0.0..=1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.lambda);
        if ok {
            Ok(())
        } else {
            Err(IppError::Config(format!("invalid PPO settings {self:?}")))
        }
    }
}

/// Loss terms of one minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub mean_ratio: f64,
    pub clip_frac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoGrads {
    pub actor: Vec<f64>,
    pub log_std: Vec<f64>,
    pub critic: Vec<f64>,
}

impl PpoGrads {
    fn norm(&self) -> f64 {
        self.actor.iter().chain(&self.log_std).chain(&self.critic).map(|g| g * g).sum::<f64>().sqrt()
    }

    fn scale(&mut self, s: f64) {
        for g in self.actor.iter_mut().chain(self.log_std.iter_mut()).chain(self.critic.iter_mut()) {
            *g *= s;
        }
    }
}

/// Averages over the minibatch `idx`:
/// `-min(r A, clip(r) A) + vf_coef (V - R)^2 - entropy_coef H`.
pub fn ppo_loss_grad(
    policy: &PolicyNetwork,
    batch: &[Transition],
    advantages: &[f64],
    returns: &[f64],
    idx: &[usize],
    cfg: &PpoConfig,
) -> Result<(LossParts, PpoGrads)> {
    if idx.is_empty() {
        return Err(IppError::NoData);
    }
    let n = idx.len() as f64;
    let mut grads = PpoGrads {
        actor: vec![0.0; policy.actor.params().len()],
        log_std: vec![0.0; 4],
        critic: vec![0.0; policy.critic.params().len()],
    };
    let mut parts = LossParts::default();
    for &i in idx {
        let tr = &batch[i];
        let a = advantages[i];
        let (mean, cache) = policy.actor.forward(&tr.features)?;
        let head = crate::nn::GaussianHead { mean, log_std: policy.log_std.clone() };
        let logp = head.gaussian_log_prob(&tr.u) - squash_correction(&tr.u);
        let ratio = (logp - tr.log_prob).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio);
        let (s1, s2) = (ratio * a, clipped * a);
        parts.policy -= s1.min(s2) / n;
        parts.mean_ratio += ratio / n;
        if (ratio - 1.0).abs() > cfg.clip_ratio {
            parts.clip_frac += 1.0 / n;
        }
        // gradient flows only when the unclipped term is the active minimum
        if s1 <= s2 {
            let dlogp = -ratio * a / n;
            let (gm, gs) = head.log_prob_grad(&tr.u);
            let grad_out: Vec<f64> = gm.iter().map(|g| g * dlogp).collect();
            policy.actor.backward_into(&cache, &grad_out, &mut grads.actor)?;
            for (acc, g) in grads.log_std.iter_mut().zip(&gs) {
                *acc += g * dlogp;
            }
        }

        let (v, vcache) = policy.critic.forward(&tr.features)?;
        let err = v[0] - returns[i];
        parts.value += err * err / n;
        policy.critic.backward_into(&vcache, &[cfg.vf_coef * 2.0 * err / n], &mut grads.critic)?;
    }
    parts.entropy = crate::nn::GaussianHead { mean: vec![0.0; 4], log_std: policy.log_std.clone() }.entropy();
    for g in &mut grads.log_std {
        *g -= cfg.entropy_coef;
    }
    parts.total = parts.policy + cfg.vf_coef * parts.value - cfg.entropy_coef * parts.entropy;
    Ok((parts, grads))
}

/// Averages of the per-minibatch statistics of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_frac: f64,
    /// Ratio statistics of the very first minibatch, before any step.
    pub first_mean_ratio: f64,
    pub first_clip_frac: f64,
    pub minibatches: usize,
}

/// Owns the optimizer state across updates.
#[derive(Debug, Clone)]
pub struct PpoTrainer {
    pub cfg: PpoConfig,
    actor_opt: Adam,
    log_std_opt: Adam,
    critic_opt: Adam,
}

impl PpoTrainer {
    pub fn new(policy: &PolicyNetwork, cfg: PpoConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(PpoTrainer {
            actor_opt: Adam::new(policy.actor.params().len(), cfg.lr),
            log_std_opt: Adam::new(4, cfg.lr),
            critic_opt: Adam::new(policy.critic.params().len(), cfg.lr),
            cfg,
        })
    }

    /// Runs `epochs` passes of shuffled minibatches over the batch.
    /// `advantages` should already be normalized.
    pub fn update<R: Rng>(
        &mut self,
        policy: &mut PolicyNetwork,
        batch: &[Transition],
        advantages: &[f64],
        returns: &[f64],
        rng: &mut R,
    ) -> Result<PpoStats> {
        if batch.is_empty() {
            return Err(IppError::NoData);
        }
        if advantages.len() != batch.len() || returns.len() != batch.len() {
            return Err(IppError::ShapeMismatch { expected: batch.len(), got: advantages.len().min(returns.len()) });
        }
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut stats = PpoStats::default();
        for _ in 0..self.cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.cfg.minibatch) {
                let (parts, mut grads) = ppo_loss_grad(policy, batch, advantages, returns, chunk, &self.cfg)?;
                if stats.minibatches == 0 {
                    stats.first_mean_ratio = parts.mean_ratio;
                    stats.first_clip_frac = parts.clip_frac;
                }
                stats.minibatches += 1;
                stats.policy_loss += parts.policy;
                stats.value_loss += parts.value;
                stats.entropy += parts.entropy;
                stats.mean_ratio += parts.mean_ratio;
                stats.clip_frac += parts.clip_frac;
                if self.cfg.max_grad_norm > 0.0 {
                    let norm = grads.norm();
                    if norm > self.cfg.max_grad_norm {
                        grads.scale(self.cfg.max_grad_norm / norm);
                    }
                }
                self.actor_opt.step(policy.actor.params_mut(), &grads.actor);
                self.log_std_opt.step(&mut policy.log_std, &grads.log_std);
                for v in &mut policy.log_std {
                    *v = clamp_log_std(*v);
                }
                self.critic_opt.step(policy.critic.params_mut(), &grads.critic);
            }
        }
        let k = stats.minibatches as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
        stats.mean_ratio /= k;
        stats.clip_frac /= k;
        Ok(stats)
    }
}
