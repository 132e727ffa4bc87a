//! Warmup normalization, parallel episode collection, PPO updates.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    decode_params, gae_advantages, normalize_advantages, random_raw, shape_reward, EnvSetup, EpisodeEnv,
    FeatureVariant, PolicyNetwork, PpoConfig, PpoTrainer, RewardNorm, Transition, WorldSource,
};
use crate::error::{IppError, Result};
use crate::objective::ObjectiveKind;
use crate::rng::{derive, stream};
use crate::world::EpisodeConfig;

const WARMUP_TAG: u64 = 0x7761_726d;
const TRAIN_TAG: u64 = 0x7472_6169;
const INIT_TAG: u64 = 0x696e_6974;
const SHUFFLE_TAG: u64 = 0x7368_7566;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub world: WorldSource,
    pub setup: EnvSetup,
    pub budget_steps: usize,
    pub seed_samples: usize,
    /// Worker `w` trains on `objectives[w % len]`.
    pub objectives: Vec<ObjectiveKind>,
    pub variant: FeatureVariant,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub n_workers: usize,
    pub n_updates: usize,
    /// Random-parameter episodes per objective used to fix the reward
    /// normalization.
    pub warmup_episodes: usize,
    pub ppo: PpoConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(IppError::Config(m.to_string()));
        if self.n_workers == 0 {
            return bad("agent.workers must be at least 1");
        }
        if self.budget_steps == 0 {
            return bad("world.budget_steps must be at least 1");
        }
        if self.objectives.is_empty() {
            return bad("agent.objectives must not be empty");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("agent.hidden must list positive layer widths");
        }
        if self.n_updates > 0 && self.warmup_episodes == 0 {
            return bad("agent.warmup_episodes must be at least 1");
        }
        self.ppo.validate()
    }

    fn episode(&self, seed: u64, objective: ObjectiveKind) -> EpisodeConfig {
        EpisodeConfig { budget_steps: self.budget_steps, seed_samples: self.seed_samples, objective, rng_seed: seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainLogRow {
    pub update: usize,
    pub mean_shaped_return: f64,
    pub mean_env_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_frac: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: PolicyNetwork,
    pub log: Vec<TrainLogRow>,
}

/// Decision-level environment rewards of one random-parameter episode.
fn warmup_episode(cfg: &TrainConfig, seed: u64, objective: ObjectiveKind) -> Result<Vec<f64>> {
    let field = cfg.world.field_for(seed)?;
    let mut env = EpisodeEnv::new(field, &cfg.setup, cfg.episode(seed, objective))?;
    let mut rng = stream(seed, 5);
    let mut rewards = Vec::new();
    while !env.done() {
        let params = decode_params(&random_raw(&mut rng));
        rewards.push(env.step(&params)?.env_reward);
    }
    Ok(rewards)
}

struct Rollout {
    transitions: Vec<Transition>,
    shaped_return: f64,
    env_return: f64,
}

fn collect_episode(
    cfg: &TrainConfig,
    policy: &PolicyNetwork,
    seed: u64,
    objective: ObjectiveKind,
) -> Result<Rollout> {
    let field = cfg.world.field_for(seed)?;
    let mut env = EpisodeEnv::new(field, &cfg.setup, cfg.episode(seed, objective))?;
    let norm = policy.norms.get(objective.tag);
    let mut rng = stream(seed, 6);
    let mut out = Rollout { transitions: Vec::new(), shaped_return: 0.0, env_return: 0.0 };
    while !env.done() {
        let features = env.features(cfg.variant);
        let sample = policy.act(&features, &mut rng, false)?;
        let value_estimate = policy.value(&features)?;
        let raw: [f64; 4] = sample.action.clone().try_into().expect("4 actions");
        let decision = env.step(&decode_params(&raw))?;
        let shaped = shape_reward(decision.env_reward, decision.generator_calls, &norm);
        out.shaped_return += shaped;
        out.env_return += decision.env_reward;
        out.transitions.push(Transition {
            features,
            raw_action: raw,
            u: sample.u.try_into().expect("4 actions"),
            log_prob: sample.log_prob,
            shaped_reward: shaped,
            value_estimate,
            done: env.done(),
        });
    }
    Ok(out)
}

/// Trains a policy. Deterministic given `cfg.seed`.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut policy =
        PolicyNetwork::new(cfg.variant, &cfg.hidden, cfg.init_log_std, &mut stream(derive(cfg.seed, INIT_TAG), 0))?;
    if cfg.n_updates == 0 {
        return Ok(TrainOutcome { policy, log: Vec::new() });
    }

    let mut seen = Vec::new();
    for obj in &cfg.objectives {
        if seen.contains(&obj.tag) {
            continue;
        }
        seen.push(obj.tag);
        let base = derive(cfg.seed, WARMUP_TAG + obj.tag.index() as u64);
        let rewards: Vec<Vec<f64>> = (0..cfg.warmup_episodes)
            .into_par_iter()
            .map(|i| warmup_episode(cfg, derive(base, i as u64), *obj))
            .collect::<Result<_>>()?;
        let flat: Vec<f64> = rewards.into_iter().flatten().collect();
        policy.norms.set(obj.tag, RewardNorm::estimate(&flat)?);
    }

    let mut trainer = PpoTrainer::new(&policy, cfg.ppo)?;
    let mut log = Vec::with_capacity(cfg.n_updates);
    for update in 0..cfg.n_updates {
        let base = derive(cfg.seed, TRAIN_TAG + update as u64);
        let snapshot = &policy;
        let rollouts: Vec<Rollout> = (0..cfg.n_workers)
            .into_par_iter()
            .map(|w| collect_episode(cfg, snapshot, derive(base, w as u64), cfg.objectives[w % cfg.objectives.len()]))
            .collect::<Result<_>>()?;

        let n = rollouts.len() as f64;
        let mean_shaped_return = rollouts.iter().map(|r| r.shaped_return).sum::<f64>() / n;
        let mean_env_return = rollouts.iter().map(|r| r.env_return).sum::<f64>() / n;
        let batch: Vec<Transition> = rollouts.into_iter().flat_map(|r| r.transitions).collect();
        let (mut adv, returns) = gae_advantages(&batch, cfg.ppo.gamma, cfg.ppo.lambda);
        normalize_advantages(&mut adv);
        let stats =
            trainer.update(&mut policy, &batch, &adv, &returns, &mut stream(derive(cfg.seed, SHUFFLE_TAG), update as u64))?;
        log.push(TrainLogRow {
            update,
            mean_shaped_return,
            mean_env_return,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            clip_frac: stats.clip_frac,
            entropy: stats.entropy,
        });
    }
    Ok(TrainOutcome { policy, log })
}

pub fn write_train_log(rows: &[TrainLogRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| IppError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| IppError::csv(path, e))?;
    }
    w.flush().map_err(|e| IppError::io(path, e))
}
