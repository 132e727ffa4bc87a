//! The real IPP loop: plan with chosen parameters, execute the chain on the
//! hidden field, condition the GP on what was measured.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use super::{default_gc_budget, featurize, FeatureVariant, Metadata, MetadataScale};
use crate::error::{IppError, Result};
use crate::gp::{GpModel, KernelHyper, Point, Prediction};
use crate::objective::ImprovementState;
use crate::pomcp::{plan_traced, Belief, Problem, SolverParams};
use crate::rng::{stream, Rng as StreamRng};
use crate::world::{
    apply_action, make_synthetic_field, observe, sense_path, Action, BlobSpec, EpisodeConfig, RobotPose,
    SensingConfig, WorldField,
};

/// Number of recent samples visible to the fixed-length history features.
pub const HISTORY_LEN: usize = 10;

/// GP hyperparameters relative to the world size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpSpec {
    /// Lengthscale as a fraction of the longest world axis.
    pub lengthscale_frac: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub prior_mean: f64,
}

impl Default for GpSpec {
    fn default() -> Self {
        GpSpec { lengthscale_frac: 0.12, signal_variance: 1.0, noise_variance: 1e-4, prior_mean: 0.0 }
    }
}

impl GpSpec {
    pub fn hyper(&self, extent: f64) -> Result<KernelHyper> {
        let h = KernelHyper::new(
            self.lengthscale_frac * extent,
            self.signal_variance,
            self.noise_variance,
            self.prior_mean,
        )?;
        h.validate()?;
        Ok(h)
    }
}

/// Settings shared by every episode of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSetup {
    pub sensing: SensingConfig,
    pub gp: GpSpec,
    /// Standard deviation of measurement noise; 0 means exact readings.
    pub noise_std: f64,
    pub exploration: f64,
    /// Fraction of the worst-case generator calls granted as mission budget.
    pub gc_budget_scale: f64,
    pub metadata_scale: MetadataScale,
}

impl Default for EnvSetup {
    fn default() -> Self {
        EnvSetup {
            sensing: SensingConfig::default(),
            gp: GpSpec::default(),
            noise_std: 0.0,
            exploration: crate::pomcp::DEFAULT_EXPLORATION,
            gc_budget_scale: 0.3,
            metadata_scale: MetadataScale::default(),
        }
    }
}

/// Where episode worlds come from.
#[derive(Debug, Clone)]
pub enum WorldSource {
    /// A fresh blob field per episode, seeded from the episode seed.
    Synthetic { dims: [usize; 3], spacing: [f64; 3], blobs: BlobSpec },
    Fixed(Arc<WorldField>),
}

impl WorldSource {
    pub fn field_for(&self, seed: u64) -> Result<Arc<WorldField>> {
        match self {
            WorldSource::Synthetic { dims, spacing, blobs } => {
                make_synthetic_field(seed, blobs, *dims, *spacing).map(Arc::new)
            }
            WorldSource::Fixed(f) => Ok(Arc::clone(f)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            WorldSource::Synthetic { dims, .. } => format!("synthetic-{}x{}x{}", dims[0], dims[1], dims[2]),
            WorldSource::Fixed(f) => {
                let d = f.dims();
                format!("grid-{}x{}x{}", d[0], d[1], d[2])
            }
        }
    }
}

/// One executed environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub action: Action,
    /// Pose after the step.
    pub pose: RobotPose,
    pub samples_added: usize,
    pub env_reward: f64,
}

/// Outcome of one planning call and the executed part of its chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub index: usize,
    pub params: SolverParams,
    /// Chain length returned by the planner, before budget truncation.
    pub chain_len: usize,
    pub generator_calls: u64,
    pub steps: Vec<StepRecord>,
    /// Sum of the executed steps' environment rewards.
    pub env_reward: f64,
}

/// A running episode over one hidden field.
pub struct EpisodeEnv {
    field: Arc<WorldField>,
    setup: EnvSetup,
    cfg: EpisodeConfig,
    belief: Belief,
    gc_budget: u64,
    gc_used: u64,
    steps_taken: usize,
    decisions: usize,
    planner_rng: StreamRng,
    noise_rng: StreamRng,
    history: VecDeque<(Point, f64)>,
    value_stats: (u64, f64, f64),
}

impl EpisodeEnv {
    /// Seeds the GP with `cfg.seed_samples` uniform random measurements and
    /// places the robot on a uniform random cell.
    pub fn new(field: Arc<WorldField>, setup: &EnvSetup, cfg: EpisodeConfig) -> Result<Self> {
        cfg.validate()?;
        if !(setup.noise_std >= 0.0) || !(setup.exploration >= 0.0) || !(setup.gc_budget_scale > 0.0) {
            return Err(IppError::Config("invalid environment setup".into()));
        }
        let hyper = setup.gp.hyper(field.extent())?;
        let mut init_rng = stream(cfg.rng_seed, 2);
        let dims = field.dims();
        let start = RobotPose::new([0, 1, 2].map(|a| init_rng.random_range(0..dims[a])));
        let up = field.upper();
        let seeds: Vec<Point> =
            (0..cfg.seed_samples).map(|_| [0, 1, 2].map(|a| init_rng.random_range(0.0..=up[a]))).collect();

        let mut env = EpisodeEnv {
            belief: Belief { model: GpModel::new(hyper), pose: start, improvement: ImprovementState::new(f64::NEG_INFINITY) },
            gc_budget: default_gc_budget(cfg.budget_steps, setup.gc_budget_scale).max(1),
            gc_used: 0,
            steps_taken: 0,
            decisions: 0,
            planner_rng: stream(cfg.rng_seed, 1),
            noise_rng: stream(cfg.rng_seed, 3),
            history: VecDeque::with_capacity(HISTORY_LEN + 1),
            value_stats: (0, 0.0, 0.0),
            setup: setup.clone(),
            field,
            cfg,
        };
        env.measure(&seeds)?;
        if env.belief.improvement.best_mean() == f64::NEG_INFINITY {
            // nothing sensed yet: compare against the prior
            env.belief.improvement = ImprovementState::new(hyper.prior_mean);
        }
        Ok(env)
    }

    pub fn field(&self) -> &WorldField {
        &self.field
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn pose(&self) -> RobotPose {
        self.belief.pose
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn remaining_steps(&self) -> usize {
        self.cfg.budget_steps - self.steps_taken
    }

    pub fn generator_calls(&self) -> u64 {
        self.gc_used
    }

    pub fn done(&self) -> bool {
        self.steps_taken >= self.cfg.budget_steps
    }

    pub fn metadata(&self) -> Metadata {
        let remaining_gc = self.gc_budget.saturating_sub(self.gc_used);
        Metadata {
            remaining_gc,
            remaining_gc_frac: remaining_gc as f64 / self.gc_budget as f64,
            remaining_steps: self.remaining_steps(),
            remaining_steps_frac: self.remaining_steps() as f64 / self.cfg.budget_steps as f64,
            objective: self.cfg.objective.tag,
        }
    }

    /// Recent samples, newest first, with unit-cube coordinates and values
    /// standardized by the statistics of every measurement so far.
    pub fn history_features(&self) -> Vec<[f64; 4]> {
        let (n, mean, m2) = self.value_stats;
        let std = if n > 1 { (m2 / (n - 1) as f64).sqrt() } else { 0.0 };
        let lattice = self.field.lattice();
        self.history
            .iter()
            .rev()
            .map(|(x, v)| {
                let u = lattice.to_unit(x);
                let z = if std > 1e-12 { (v - mean) / std } else { 0.0 };
                [u[0], u[1], u[2], z]
            })
            .collect()
    }

    pub fn features(&self, variant: FeatureVariant) -> Vec<f64> {
        featurize(&self.metadata(), &self.setup.metadata_scale, &self.history_features(), variant)
    }

    /// Measures the field at `xs`, conditions the GP, and refreshes the best
    /// posterior mean. Returns the number of samples the GP accepted.
    fn measure(&mut self, xs: &[Point]) -> Result<usize> {
        let obs = observe(&self.field, xs, self.setup.noise_std, &mut self.noise_rng)?;
        let mut added = Vec::with_capacity(obs.len());
        for &(x, y) in &obs {
            if self.belief.model.push_sample(x, y).is_ok() {
                added.push(x);
            }
            self.history.push_back((x, y));
            if self.history.len() > HISTORY_LEN {
                self.history.pop_front();
            }
            let (n, mean, m2) = &mut self.value_stats;
            *n += 1;
            let d = y - *mean;
            *mean += d / *n as f64;
            *m2 += d * (y - *mean);
        }
        for x in &added {
            let m = self.belief.model.predict(x).mean;
            self.belief.improvement.observe(m);
        }
        Ok(added.len())
    }

    /// Objective of the points about to be sensed, using true field values
    /// as means and the current GP variance.
    fn env_reward(&self, xs: &[Point]) -> Result<f64> {
        let mut r = 0.0;
        for x in xs {
            let pred = Prediction { mean: self.field.value_at(x)?, variance: self.belief.model.predict(x).variance };
            r += self.cfg.objective.score(&pred, &self.belief.improvement);
        }
        Ok(r)
    }

    /// Plans with `params`, executes the chain up to the remaining budget.
    pub fn step(&mut self, params: &SolverParams) -> Result<Decision> {
        if self.done() {
            return Err(IppError::Config("episode budget already spent".into()));
        }
        let problem =
            Problem { lattice: self.field.lattice(), sensing: self.setup.sensing, objective: self.cfg.objective };
        let (plan, _) =
            plan_traced(&self.belief, &problem, params, self.setup.exploration, &mut self.planner_rng, None)?;
        self.gc_used += plan.generator_calls;
        let take = plan.actions.len().min(self.remaining_steps());
        let mut steps = Vec::with_capacity(take);
        let mut total = 0.0;
        for &action in &plan.actions[..take] {
            let (pose, reward, added) = match apply_action(self.belief.pose, action, self.field.lattice()) {
                Ok(next) => {
                    let xs = sense_path(&self.setup.sensing, self.belief.pose, next, self.field.lattice());
                    let reward = self.env_reward(&xs)?;
                    self.belief.pose = next;
                    let added = self.measure(&xs)?;
                    (next, reward, added)
                }
                // no-op: the step is spent, nothing is sensed
                Err(IppError::IllegalMove { .. }) => (self.belief.pose, 0.0, 0),
                Err(e) => return Err(e),
            };
            total += reward;
            steps.push(StepRecord { step: self.steps_taken, action, pose, samples_added: added, env_reward: reward });
            self.steps_taken += 1;
        }
        let d = Decision {
            index: self.decisions,
            params: *params,
            chain_len: plan.actions.len(),
            generator_calls: plan.generator_calls,
            steps,
            env_reward: total,
        };
        self.decisions += 1;
        Ok(d)
    }
}
