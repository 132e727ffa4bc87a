//! TOML configuration with sections `world`, `gp`, `pomcp`, `agent` and
//! `harness`. Every key is optional; see `configs/desk.toml` for the full
//! list with defaults.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::agent::{EnvSetup, FeatureVariant, GpSpec, MetadataScale, NormTable, PpoConfig, TrainConfig, WorldSource};
use crate::error::{IppError, Result};
use crate::harness::{ExperimentMatrix, PolicyKind, PolicySpec};
use crate::objective::{Objective, ObjectiveKind, ZMode};
use crate::pomcp::SolverParams;
use crate::rng::derive;
use crate::world::{load_grid_csv, BlobSpec, SensingConfig, WorldPreset};

const EVAL_TAG: u64 = 0x6576_616c;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub world: WorldSection,
    pub gp: GpSection,
    pub pomcp: PomcpSection,
    pub agent: AgentSection,
    pub harness: HarnessSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    /// `desk` or `field`; overrides `dims`/`spacing` when set.
    pub preset: Option<String>,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Fixed ground truth instead of synthetic blob fields.
    pub grid_csv: Option<PathBuf>,
    pub budget_steps: usize,
    pub seed_samples: usize,
    pub samples_per_edge: usize,
    pub noise_std: f64,
    pub blobs: BlobSpec,
}

impl Default for WorldSection {
    fn default() -> Self {
        WorldSection {
            preset: None,
            dims: WorldPreset::DESK.dims,
            spacing: WorldPreset::DESK.spacing,
            grid_csv: None,
            budget_steps: 50,
            seed_samples: 5,
            samples_per_edge: 4,
            noise_std: 0.0,
            blobs: BlobSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSection {
    pub lengthscale_frac: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub prior_mean: f64,
}

impl Default for GpSection {
    fn default() -> Self {
        let g = GpSpec::default();
        GpSection {
            lengthscale_frac: g.lengthscale_frac,
            signal_variance: g.signal_variance,
            noise_variance: g.noise_variance,
            prior_mean: g.prior_mean,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PomcpSection {
    pub exploration: f64,
    /// `variance` or `std`.
    pub z_mode: String,
    pub naive_rollouts: usize,
    pub naive_gamma: f64,
    pub naive_ttest: f64,
    pub naive_depth: usize,
}

impl Default for PomcpSection {
    fn default() -> Self {
        let n = SolverParams::NAIVE;
        PomcpSection {
            exploration: crate::pomcp::DEFAULT_EXPLORATION,
            z_mode: "variance".into(),
            naive_rollouts: n.num_rollouts,
            naive_gamma: n.gamma,
            naive_ttest: n.ttest_value,
            naive_depth: n.max_depth,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    /// `metadata` or `fixed10`.
    pub variant: String,
    pub workers: usize,
    pub updates: usize,
    pub warmup_episodes: usize,
    pub objectives: Vec<String>,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub gc_budget_scale: f64,
    pub steps_scale: f64,
    pub gc_scale: f64,
    pub clip_ratio: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let p = PpoConfig::default();
        let m = MetadataScale::default();
        AgentSection {
            variant: "metadata".into(),
            workers: 8,
            updates: 60,
            warmup_episodes: 20,
            objectives: vec!["ei".into()],
            hidden: vec![64, 64],
            init_log_std: -0.5,
            gc_budget_scale: 0.3,
            steps_scale: m.steps,
            gc_scale: m.generator_calls,
            clip_ratio: p.clip_ratio,
            epochs: p.epochs,
            minibatch: p.minibatch,
            lr: p.lr,
            entropy_coef: p.entropy_coef,
            vf_coef: p.vf_coef,
            max_grad_norm: p.max_grad_norm,
            gamma: p.gamma,
            lambda: p.lambda,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessSection {
    pub seeds: usize,
    pub policies: Vec<String>,
    pub objectives: Vec<String>,
    /// Checkpoint for `learned-metadata`.
    pub checkpoint: Option<PathBuf>,
    /// Checkpoint for `learned-fixed10`.
    pub checkpoint_fixed10: Option<PathBuf>,
}

impl Default for HarnessSection {
    fn default() -> Self {
        HarnessSection {
            seeds: 20,
            policies: vec!["naive".into(), "random".into()],
            objectives: vec!["ei".into()],
            checkpoint: None,
            checkpoint_fixed10: None,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0);
            IppError::Parse { line, msg: e.message().to_string() }
        })
    }

    /// Loads a file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| IppError::io(path, e))?;
        let mut cfg = Config::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut cfg.world.grid_csv);
        fix(&mut cfg.harness.checkpoint);
        fix(&mut cfg.harness.checkpoint_fixed10);
        Ok(cfg)
    }

    fn z_mode(&self) -> Result<ZMode> {
        match self.pomcp.z_mode.as_str() {
            "variance" => Ok(ZMode::PaperVariance),
            "std" => Ok(ZMode::StandardDeviation),
            other => Err(IppError::Config(format!("pomcp.z_mode must be `variance` or `std`, got `{other}`"))),
        }
    }

    pub fn objectives(&self, names: &[String]) -> Result<Vec<ObjectiveKind>> {
        let z = self.z_mode()?;
        if names.is_empty() {
            return Err(IppError::Config("objective list is empty".into()));
        }
        names
            .iter()
            .map(|n| {
                Objective::parse(n)
                    .map(|o| ObjectiveKind::new(o).with_z_mode(z))
                    .ok_or_else(|| IppError::Config(format!("unknown objective `{n}` (use entropy, ei or pi)")))
            })
            .collect()
    }

    pub fn naive_params(&self) -> SolverParams {
        SolverParams {
            num_rollouts: self.pomcp.naive_rollouts,
            gamma: self.pomcp.naive_gamma,
            ttest_value: self.pomcp.naive_ttest,
            max_depth: self.pomcp.naive_depth,
        }
    }

    pub fn env_setup(&self) -> Result<EnvSetup> {
        if self.world.samples_per_edge == 0 {
            return Err(IppError::Config("world.samples_per_edge must be at least 1".into()));
        }
        if !(self.world.noise_std >= 0.0) {
            return Err(IppError::Config("world.noise_std must be non-negative".into()));
        }
        if !(self.pomcp.exploration >= 0.0) {
            return Err(IppError::Config("pomcp.exploration must be non-negative".into()));
        }
        if !(self.agent.gc_budget_scale > 0.0 && self.agent.steps_scale > 0.0 && self.agent.gc_scale > 0.0) {
            return Err(IppError::Config("agent scales must be positive".into()));
        }
        let gp = GpSpec {
            lengthscale_frac: self.gp.lengthscale_frac,
            signal_variance: self.gp.signal_variance,
            noise_variance: self.gp.noise_variance,
            prior_mean: self.gp.prior_mean,
        };
        gp.hyper(1.0)?;
        Ok(EnvSetup {
            sensing: SensingConfig { samples_per_edge: self.world.samples_per_edge },
            gp,
            noise_std: self.world.noise_std,
            exploration: self.pomcp.exploration,
            gc_budget_scale: self.agent.gc_budget_scale,
            metadata_scale: MetadataScale { steps: self.agent.steps_scale, generator_calls: self.agent.gc_scale },
        })
    }

    /// World source and a short name for logs.
    pub fn world_source(&self) -> Result<(String, WorldSource)> {
        if let Some(path) = &self.world.grid_csv {
            let field = load_grid_csv(path)?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "grid".into());
            return Ok((name, WorldSource::Fixed(Arc::new(field))));
        }
        let (dims, spacing) = match &self.world.preset {
            Some(p) => {
                let preset = WorldPreset::by_name(p)
                    .ok_or_else(|| IppError::Config(format!("unknown world.preset `{p}` (use desk or field)")))?;
                (preset.dims, preset.spacing)
            }
            None => (self.world.dims, self.world.spacing),
        };
        crate::world::Lattice::new(dims, spacing)?;
        let source = WorldSource::Synthetic { dims, spacing, blobs: self.world.blobs };
        Ok((source.describe(), source))
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let a = &self.agent;
        let variant = FeatureVariant::parse(&a.variant)
            .ok_or_else(|| IppError::Config(format!("agent.variant must be `metadata` or `fixed10`, got `{}`", a.variant)))?;
        let cfg = TrainConfig {
            world: self.world_source()?.1,
            setup: self.env_setup()?,
            budget_steps: self.world.budget_steps,
            seed_samples: self.world.seed_samples,
            objectives: self.objectives(&a.objectives)?,
            variant,
            hidden: a.hidden.clone(),
            init_log_std: a.init_log_std,
            n_workers: a.workers,
            n_updates: a.updates,
            warmup_episodes: a.warmup_episodes,
            ppo: PpoConfig {
                clip_ratio: a.clip_ratio,
                epochs: a.epochs,
                minibatch: a.minibatch,
                lr: a.lr,
                entropy_coef: a.entropy_coef,
                vf_coef: a.vf_coef,
                max_grad_norm: a.max_grad_norm,
                gamma: a.gamma,
                lambda: a.lambda,
            },
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Evaluation seeds derived from the master seed.
    pub fn eval_seeds(&self, seed: u64) -> Vec<u64> {
        (0..self.harness.seeds as u64).map(|i| derive(derive(seed, EVAL_TAG), i)).collect()
    }

    pub fn policy_spec(&self, name: &str) -> Result<PolicySpec> {
        let kind = PolicyKind::parse(name).ok_or_else(|| {
            IppError::Config(format!("unknown policy `{name}` (use naive, random, learned-metadata or learned-fixed10)"))
        })?;
        Ok(match kind {
            PolicyKind::NaiveFixed => PolicySpec::naive(self.naive_params()),
            PolicyKind::RandomParams => PolicySpec::random(),
            PolicyKind::LearnedMetadata => PolicySpec {
                kind,
                checkpoint: self.harness.checkpoint.clone(),
                fixed: SolverParams::NAIVE,
            },
            PolicyKind::LearnedFixedLength => PolicySpec {
                kind,
                checkpoint: self.harness.checkpoint_fixed10.clone(),
                fixed: SolverParams::NAIVE,
            },
        })
    }

    /// Reward normalization for logged shaped rewards: taken from the first
    /// loadable learned checkpoint, else the identity.
    pub fn eval_norms(&self, policies: &[PolicySpec]) -> NormTable {
        policies
            .iter()
            .filter_map(|p| p.checkpoint.as_ref())
            .find_map(|path| crate::agent::PolicyNetwork::load(path).ok())
            .map(|net| net.norms)
            .unwrap_or_default()
    }

    pub fn matrix(&self, seed: u64) -> Result<ExperimentMatrix> {
        if self.world.budget_steps == 0 {
            return Err(IppError::Config("world.budget_steps must be at least 1".into()));
        }
        if self.harness.seeds == 0 || self.harness.policies.is_empty() {
            return Err(IppError::Config("harness needs at least one seed and one policy".into()));
        }
        let policies: Vec<PolicySpec> =
            self.harness.policies.iter().map(|p| self.policy_spec(p)).collect::<Result<_>>()?;
        let norms = self.eval_norms(&policies);
        Ok(ExperimentMatrix {
            worlds: vec![self.world_source()?],
            objectives: self.objectives(&self.harness.objectives)?,
            policies,
            seeds: self.eval_seeds(seed),
            setup: self.env_setup()?,
            budget_steps: self.world.budget_steps,
            seed_samples: self.world.seed_samples,
            norms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c.world.dims, [16, 16, 8]);
        assert_eq!(c.world.budget_steps, 50);
        assert_eq!(c.naive_params(), SolverParams::NAIVE);
        let t = c.train_config(1).unwrap();
        assert_eq!((t.n_workers, t.n_updates, t.warmup_episodes), (8, 60, 20));
        assert_eq!(t.ppo, PpoConfig::default());
        assert_eq!(c.matrix(1).unwrap().seeds.len(), 20);
    }

    #[test]
    fn shipped_config_lists_the_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
        let c = Config::load(&path).unwrap();
        let d = Config::default();
        assert_eq!(c.world.dims, d.world.dims);
        assert_eq!(c.world.blobs, d.world.blobs);
        assert_eq!(c.env_setup().unwrap(), d.env_setup().unwrap());
        assert_eq!(c.naive_params(), d.naive_params());
        let (a, b) = (c.train_config(3).unwrap(), d.train_config(3).unwrap());
        assert_eq!((a.ppo, a.hidden, a.n_workers, a.n_updates), (b.ppo, b.hidden, b.n_workers, b.n_updates));
        assert!(c.harness.checkpoint.unwrap().ends_with("../out/policy.txt"));
    }

    #[test]
    fn sections_override_defaults() {
        let c = Config::from_toml(
            r#"
            [world]
            preset = "field"
            budget_steps = 12
            [world.blobs]
            count_min = 1
            count_max = 1
            [pomcp]
            z_mode = "std"
            naive_rollouts = 40
            [agent]
            objectives = ["entropy", "pi"]
            variant = "fixed10"
            [harness]
            policies = ["naive"]
            seeds = 3
            "#,
        )
        .unwrap();
        let t = c.train_config(0).unwrap();
        assert_eq!(t.budget_steps, 12);
        assert_eq!(t.variant, FeatureVariant::FixedLength10);
        assert_eq!(t.objectives[1], ObjectiveKind::new(Objective::ProbabilityOfImprovement).with_z_mode(ZMode::StandardDeviation));
        match &t.world {
            WorldSource::Synthetic { dims, blobs, .. } => {
                assert_eq!(*dims, [15, 15, 1]);
                assert_eq!(blobs.count_max, 1);
            }
            _ => panic!("expected synthetic world"),
        }
        let m = c.matrix(0).unwrap();
        assert_eq!(m.seeds.len(), 3);
        assert_eq!(m.policies[0].fixed.num_rollouts, 40);
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in [
            "[agent]\nworkers = 0",
            "[agent]\nvariant = \"lstm\"",
            "[agent]\nobjectives = [\"ucb\"]",
            "[pomcp]\nz_mode = \"cube\"",
            "[world]\npreset = \"ocean\"",
            "[gp]\nlengthscale_frac = -1.0",
        ] {
            let c = Config::from_toml(text).unwrap();
            assert!(c.train_config(0).is_err(), "{text}");
        }
        assert!(matches!(Config::from_toml("[world]\nbogus = 1"), Err(IppError::Parse { .. })));
        assert!(matches!(Config::from_toml("[harness]\nseeds = \"x\""), Err(IppError::Parse { .. })));
        let c = Config::from_toml("[harness]\npolicies = [\"oracle\"]").unwrap();
        assert!(c.matrix(0).is_err());
    }

    #[test]
    fn eval_seeds_are_deterministic_and_distinct() {
        let c = Config::default();
        let a = c.eval_seeds(5);
        assert_eq!(a, c.eval_seeds(5));
        assert_ne!(a, c.eval_seeds(6));
        let mut s = a.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), a.len());
    }
}
