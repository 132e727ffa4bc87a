//! The outer decision process: featurize the episode, pick solver
//! parameters with a learned policy, shape rewards, train with PPO.

mod env;
mod policy;
mod ppo;
mod train;

pub use env::{Decision, EnvSetup, EpisodeEnv, GpSpec, StepRecord, WorldSource, HISTORY_LEN};
pub use policy::{FeatureVariant, NormTable, PolicyNetwork};
pub use ppo::{ppo_loss_grad, LossParts, PpoConfig, PpoGrads, PpoStats, PpoTrainer};
pub use train::{train, write_train_log, TrainConfig, TrainLogRow, TrainOutcome};

use crate::error::{IppError, Result};
use crate::objective::Objective;
use crate::pomcp::SolverParams;

/// Episode progress as seen by the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metadata {
    pub remaining_gc: u64,
    pub remaining_gc_frac: f64,
    pub remaining_steps: usize,
    pub remaining_steps_frac: f64,
    pub objective: Objective,
}

impl Metadata {
    pub fn objective_onehot(&self) -> [f64; 3] {
        self.objective.one_hot()
    }
}

/// Divisors turning the two remaining counts into order-one features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetadataScale {
    pub steps: f64,
    pub generator_calls: f64,
}

impl Default for MetadataScale {
    fn default() -> Self {
        MetadataScale { steps: 50.0, generator_calls: default_gc_budget(50, 0.3) as f64 }
    }
}

/// Mission-wide generator-call budget: every step planned at the largest
/// rollout count and depth, scaled down.
pub fn default_gc_budget(budget_steps: usize, scale: f64) -> u64 {
    let full = budget_steps * SolverParams::ROLLOUTS.1 * SolverParams::DEPTH.1;
    (full as f64 * scale).round() as u64
}

pub const METADATA_LEN: usize = 7;

/// Builds the policy input. `history` holds `(unit x, unit y, unit z,
/// standardized value)` rows, newest first; only the first
/// [`HISTORY_LEN`] are used and missing rows are zero.
pub fn featurize(meta: &Metadata, scale: &MetadataScale, history: &[[f64; 4]], variant: FeatureVariant) -> Vec<f64> {
    let mut f = Vec::with_capacity(variant.input_len());
    f.push(meta.remaining_gc as f64 / scale.generator_calls);
    f.push(meta.remaining_gc_frac);
    f.push(meta.remaining_steps as f64 / scale.steps);
    f.push(meta.remaining_steps_frac);
    f.extend(meta.objective_onehot());
    if variant == FeatureVariant::FixedLength10 {
        for i in 0..HISTORY_LEN {
            f.extend(history.get(i).copied().unwrap_or([0.0; 4]));
        }
    }
    f
}

/// Uniform draw from the action box, as used by the random-parameter
/// baseline and the warmup episodes.
pub fn random_raw<R: rand::Rng>(rng: &mut R) -> [f64; 4] {
    [0; 4].map(|_| rng.random_range(-1.0..=1.0))
}

fn unit_to_range(raw: f64) -> f64 {
    let r = if raw.is_nan() { 0.0 } else { raw.clamp(-1.0, 1.0) };
    (r + 1.0) / 2.0
}

fn affine(raw: f64, (lo, hi): (f64, f64)) -> f64 {
    let t = unit_to_range(raw);
    if t >= 1.0 {
        hi
    } else {
        lo + t * (hi - lo)
    }
}

/// Maps a policy action in `[-1, 1]^4` (rollouts, gamma, ttest, depth) to
/// solver parameters. The t-test level is log-uniform.
pub fn decode_params(raw: &[f64; 4]) -> SolverParams {
    let (r0, r1) = SolverParams::ROLLOUTS;
    let (d0, d1) = SolverParams::DEPTH;
    let (t0, t1) = SolverParams::TTEST;
    let tt = unit_to_range(raw[2]);
    let ttest_value = if tt >= 1.0 {
        t1
    } else if tt <= 0.0 {
        t0
    } else {
        (t0.ln() + tt * (t1.ln() - t0.ln())).exp()
    };
    SolverParams {
        num_rollouts: affine(raw[0], (r0 as f64, r1 as f64)).round() as usize,
        gamma: affine(raw[1], SolverParams::GAMMA),
        ttest_value,
        max_depth: affine(raw[3], (d0 as f64, d1 as f64)).round() as usize,
    }
}

/// Normalization constants for the environment reward of one objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardNorm {
    pub mu: f64,
    pub sigma: f64,
}

impl RewardNorm {
    pub const SURVIVAL_BONUS: f64 = 1.0;
    pub const GC_PENALTY: f64 = 1e-5;
    pub const CLIP: f64 = 3.0;

    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(IppError::Config(format!("reward normalization needs finite mu and sigma > 0, got ({mu}, {sigma})")));
        }
        Ok(RewardNorm { mu, sigma })
    }

    /// Mean and standard deviation of `samples`; sigma is floored at 1e-8.
    pub fn estimate(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(IppError::NoData);
        }
        let n = samples.len() as f64;
        let mu = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / n;
        RewardNorm::new(mu, var.sqrt().max(1e-8))
    }
}

impl Default for RewardNorm {
    fn default() -> Self {
        RewardNorm { mu: 0.0, sigma: 1.0 }
    }
}

pub fn shape_reward(r_env: f64, generator_calls: u64, norm: &RewardNorm) -> f64 {
    let z = ((r_env - norm.mu) / norm.sigma).clamp(-RewardNorm::CLIP, RewardNorm::CLIP);
    z + RewardNorm::SURVIVAL_BONUS - RewardNorm::GC_PENALTY * generator_calls as f64
}

/// One agent decision as stored for PPO.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub features: Vec<f64>,
    /// Squashed action in (-1, 1).
    pub raw_action: [f64; 4],
    /// Pre-squash Gaussian sample; `raw_action = tanh(u)`.
    pub u: [f64; 4],
    pub log_prob: f64,
    pub shaped_reward: f64,
    pub value_estimate: f64,
    pub done: bool,
}

/// GAE(lambda) over one ordered trajectory, or several concatenated ones
/// separated by `done` flags. A trajectory not ending in `done` is
/// bootstrapped with zero. Returns raw advantages and value targets.
pub fn gae_advantages(trajectory: &[Transition], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = trajectory.len();
    let mut adv = vec![0.0; n];
    let mut next_value = 0.0;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let tr = &trajectory[t];
        if tr.done {
            next_value = 0.0;
            next_adv = 0.0;
        }
        let delta = tr.shaped_reward + gamma * next_value - tr.value_estimate;
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = tr.value_estimate;
    }
    let returns = adv.iter().zip(trajectory).map(|(a, tr)| a + tr.value_estimate).collect();
    (adv, returns)
}

/// Rescales to zero mean and unit variance (no-op scale when degenerate).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}
