//! Generic POMCP search loop over any [`SearchModel`].

use rand::Rng;

use super::tree::{ucb1_select, NodeId, SearchTree};
use crate::error::Result;
use crate::world::Action;

/// A simulator the tree search drives. The model holds the "current"
/// simulated belief; `reset` rewinds it to the planning root.
pub trait SearchModel {
    fn reset(&mut self);
    /// Bit `i` set when `Action::ALL[i]` is legal from the current state.
    fn legal_mask(&self) -> u8;
    /// One generator call: advance the state and return the step reward.
    fn step(&mut self, action: Action) -> Result<f64>;
}

/// Knobs the search loop needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub num_rollouts: usize,
    pub gamma: f64,
    pub max_depth: usize,
    /// Multiplier on the observed root-return range.
    pub exploration: f64,
}

pub(crate) fn random_legal<R: Rng>(mask: u8, rng: &mut R) -> Action {
    let k = rng.random_range(0..mask.count_ones());
    let mut seen = 0;
    for a in Action::ALL {
        if mask & (1 << a.index()) != 0 {
            if seen == k {
                return a;
            }
            seen += 1;
        }
    }
    unreachable!("mask has {} bits", mask.count_ones())
}

fn rollout_into<M, R>(model: &mut M, steps: usize, rng: &mut R, rewards: &mut Vec<f64>) -> Result<()>
where
    M: SearchModel + ?Sized,
    R: Rng,
{
    for _ in 0..steps {
        let mask = model.legal_mask();
        if mask == 0 {
            break;
        }
        let a = random_legal(mask, rng);
        rewards.push(model.step(a)?);
    }
    Ok(())
}

/// Uniform-random rollout of `depth_remaining` steps from the model's
/// current state; returns the discounted sum of rewards.
pub fn rollout<M, R>(model: &mut M, depth_remaining: usize, gamma: f64, rng: &mut R) -> Result<f64>
where
    M: SearchModel + ?Sized,
    R: Rng,
{
    let mut rewards = Vec::with_capacity(depth_remaining);
    rollout_into(model, depth_remaining, rng, &mut rewards)?;
    Ok(discounted(&rewards, gamma))
}

fn discounted(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |g, r| r + gamma * g)
}

/// Result of one search.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub tree: SearchTree,
    pub generator_calls: u64,
}

/// Runs `num_rollouts` simulations. Each simulation descends the tree with
/// UCB1, expands one new node, finishes with a random rollout so that every
/// simulation spans `max_depth` generator calls, then backs discounted
/// returns up the visited path. `trace`, when given, receives every
/// `(node, return)` credit in order.
pub fn search<M, R>(
    model: &mut M,
    cfg: &SearchConfig,
    rng: &mut R,
    mut trace: Option<&mut Vec<(NodeId, f64)>>,
) -> Result<SearchOutcome>
where
    M: SearchModel + ?Sized,
    R: Rng,
{
    let mut tree = SearchTree::new();
    let mut calls = 0u64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut rewards: Vec<f64> = Vec::with_capacity(cfg.max_depth);
    let mut path: Vec<NodeId> = Vec::with_capacity(cfg.max_depth + 1);
    let mut returns: Vec<f64> = Vec::with_capacity(cfg.max_depth);

    for _ in 0..cfg.num_rollouts {
        model.reset();
        rewards.clear();
        path.clear();
        path.push(SearchTree::ROOT);
        let c = if hi > lo { cfg.exploration * (hi - lo) } else { 0.0 };

        let mut node = SearchTree::ROOT;
        while rewards.len() < cfg.max_depth {
            let mask = model.legal_mask();
            if mask == 0 {
                break;
            }
            let a = ucb1_select(&tree, node, mask, c);
            rewards.push(model.step(a)?);
            match tree.child(node, a) {
                Some(child) => {
                    node = child;
                    path.push(child);
                }
                None => {
                    path.push(tree.add_child(node, a));
                    break;
                }
            }
        }
        let remaining = cfg.max_depth - rewards.len();
        rollout_into(model, remaining, rng, &mut rewards)?;
        calls += rewards.len() as u64;

        returns.clear();
        returns.resize(rewards.len(), 0.0);
        let mut g = 0.0;
        for (d, r) in rewards.iter().enumerate().rev() {
            g = r + cfg.gamma * g;
            returns[d] = g;
        }
        let root_return = returns.first().copied().unwrap_or(0.0);
        for (j, &id) in path.iter().enumerate() {
            let ret = if j == 0 { root_return } else { returns[j - 1] };
            tree.node_mut(id).stats.push(ret);
            if let Some(t) = trace.as_deref_mut() {
                t.push((id, ret));
            }
        }
        lo = lo.min(root_return);
        hi = hi.max(root_return);
    }
    Ok(SearchOutcome { tree, generator_calls: calls })
}
