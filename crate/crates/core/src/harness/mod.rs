//! Episodes, experiment matrices, baselines and their output files.

mod output;
mod plot;

pub use output::{emit_outputs, read_episode_csv, write_episode_csv, write_plots, OutputFiles};
pub use plot::{cumulative_reward_svg, parameter_trajectory_svg};

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    decode_params, random_raw, shape_reward, EnvSetup, EpisodeEnv, FeatureVariant, NormTable, PolicyNetwork,
    WorldSource,
};
use crate::error::{IppError, Result};
use crate::objective::ObjectiveKind;
use crate::pomcp::SolverParams;
use crate::rng::stream;
use crate::world::{EpisodeConfig, WorldField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    NaiveFixed,
    RandomParams,
    LearnedMetadata,
    LearnedFixedLength,
}

impl PolicyKind {
    pub fn id(self) -> &'static str {
        match self {
            PolicyKind::NaiveFixed => "naive",
            PolicyKind::RandomParams => "random",
            PolicyKind::LearnedMetadata => "learned-metadata",
            PolicyKind::LearnedFixedLength => "learned-fixed10",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [PolicyKind::NaiveFixed, PolicyKind::RandomParams, PolicyKind::LearnedMetadata, PolicyKind::LearnedFixedLength]
            .into_iter()
            .find(|k| k.id() == s)
    }

    fn variant(self) -> Option<FeatureVariant> {
        match self {
            PolicyKind::LearnedMetadata => Some(FeatureVariant::MetadataOnly),
            PolicyKind::LearnedFixedLength => Some(FeatureVariant::FixedLength10),
            _ => None,
        }
    }
}

/// How solver parameters are chosen during an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub checkpoint: Option<PathBuf>,
    pub fixed: SolverParams,
}

impl PolicySpec {
    pub fn naive(fixed: SolverParams) -> Self {
        PolicySpec { kind: PolicyKind::NaiveFixed, checkpoint: None, fixed }
    }

    pub fn random() -> Self {
        PolicySpec { kind: PolicyKind::RandomParams, checkpoint: None, fixed: SolverParams::NAIVE }
    }

    pub fn learned(kind: PolicyKind, checkpoint: impl Into<PathBuf>) -> Self {
        PolicySpec { kind, checkpoint: Some(checkpoint.into()), fixed: SolverParams::NAIVE }
    }

    pub fn id(&self) -> &'static str {
        self.kind.id()
    }

    /// Loads the checkpoint of learned kinds.
    pub fn resolve(&self) -> Result<ResolvedPolicy> {
        match self.kind.variant() {
            None if self.kind == PolicyKind::NaiveFixed => {
                self.fixed.validate_for_planning()?;
                Ok(ResolvedPolicy::Fixed(self.fixed))
            }
            None => Ok(ResolvedPolicy::Random),
            Some(variant) => {
                let path = self
                    .checkpoint
                    .as_ref()
                    .ok_or_else(|| IppError::Checkpoint(format!("policy {} needs a checkpoint", self.id())))?;
                let net = PolicyNetwork::load(path)?;
                if net.variant != variant {
                    return Err(IppError::Checkpoint(format!(
                        "{} holds a {} policy, expected {}",
                        path.display(),
                        net.variant.name(),
                        variant.name()
                    )));
                }
                Ok(ResolvedPolicy::Learned(Arc::new(net)))
            }
        }
    }
}

/// A [`PolicySpec`] ready to act.
#[derive(Debug, Clone)]
pub enum ResolvedPolicy {
    Fixed(SolverParams),
    Random,
    /// Acts with the mean of the learned distribution.
    Learned(Arc<PolicyNetwork>),
}

impl ResolvedPolicy {
    pub fn in_memory(net: PolicyNetwork) -> Self {
        ResolvedPolicy::Learned(Arc::new(net))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub seed: u64,
    pub objective: String,
    pub world: String,
    pub policy: String,
}

/// One environment step of an episode log. Rows of the same decision
/// repeat its parameters, chain length, generator calls and shaped reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    pub decision: usize,
    pub chain_pos: usize,
    pub action: String,
    pub ix: usize,
    pub iy: usize,
    pub iz: usize,
    pub rollouts: usize,
    pub gamma: f64,
    pub ttest: f64,
    pub depth: usize,
    pub chain_len: usize,
    pub samples_added: usize,
    pub env_reward: f64,
    pub shaped_reward: f64,
    pub cumulative_reward: f64,
    pub generator_calls: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub rows: Vec<StepRow>,
}

impl EpisodeLog {
    pub fn final_reward(&self) -> f64 {
        self.rows.last().map(|r| r.cumulative_reward).unwrap_or(0.0)
    }

    /// Generator calls summed over decisions.
    pub fn total_generator_calls(&self) -> u64 {
        self.rows.iter().filter(|r| r.chain_pos == 0).map(|r| r.generator_calls).sum()
    }
}

/// Runs one episode to its budget. `norms` only affects the logged shaped
/// rewards.
pub fn run_episode(
    field: Arc<WorldField>,
    world_name: &str,
    policy: &ResolvedPolicy,
    policy_id: &str,
    setup: &EnvSetup,
    cfg: EpisodeConfig,
    norms: &NormTable,
) -> Result<EpisodeLog> {
    let mut env = EpisodeEnv::new(field, setup, cfg)?;
    let norm = norms.get(cfg.objective.tag);
    let mut rng = stream(cfg.rng_seed, 5);
    let mut rows = Vec::with_capacity(cfg.budget_steps);
    let mut cumulative = 0.0;
    while !env.done() {
        let params = match policy {
            ResolvedPolicy::Fixed(p) => *p,
            ResolvedPolicy::Random => decode_params(&random_raw(&mut rng)),
            ResolvedPolicy::Learned(net) => {
                let a = net.act(&env.features(net.variant), &mut rng, true)?.action;
                decode_params(&[a[0], a[1], a[2], a[3]])
            }
        };
        let d = env.step(&params)?;
        let shaped = shape_reward(d.env_reward, d.generator_calls, &norm);
        for (pos, s) in d.steps.iter().enumerate() {
            cumulative += s.env_reward;
            rows.push(StepRow {
                step: s.step,
                decision: d.index,
                chain_pos: pos,
                action: s.action.name().to_string(),
                ix: s.pose.cell[0],
                iy: s.pose.cell[1],
                iz: s.pose.cell[2],
                rollouts: params.num_rollouts,
                gamma: params.gamma,
                ttest: params.ttest_value,
                depth: params.max_depth,
                chain_len: d.chain_len,
                samples_added: s.samples_added,
                env_reward: s.env_reward,
                shaped_reward: shaped,
                cumulative_reward: cumulative,
                generator_calls: d.generator_calls,
            });
        }
    }
    Ok(EpisodeLog {
        header: EpisodeHeader {
            seed: cfg.rng_seed,
            objective: cfg.objective.tag.short_name().to_string(),
            world: world_name.to_string(),
            policy: policy_id.to_string(),
        },
        rows,
    })
}

/// Cartesian product of worlds, objectives, policies and seeds.
#[derive(Debug, Clone)]
pub struct ExperimentMatrix {
    pub worlds: Vec<(String, WorldSource)>,
    pub objectives: Vec<ObjectiveKind>,
    pub policies: Vec<PolicySpec>,
    pub seeds: Vec<u64>,
    pub setup: EnvSetup,
    pub budget_steps: usize,
    pub seed_samples: usize,
    pub norms: NormTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub world: String,
    pub objective: String,
    pub policy: String,
    pub seed: u64,
    pub final_reward: Option<f64>,
    pub generator_calls: Option<u64>,
    /// Empty when the cell succeeded.
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub objective: String,
    pub policy: String,
    pub n: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_generator_calls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTestRow {
    pub objective: String,
    pub policy_a: String,
    pub policy_b: String,
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    /// One-sided p-value for "a beats b".
    pub p_a_better: f64,
    pub p_b_better: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub logs: Vec<EpisodeLog>,
    pub aggregates: Vec<AggregateRow>,
    pub sign_tests: Vec<SignTestRow>,
    /// Wall time per row in milliseconds; kept out of the reproducible tables.
    pub wall_ms: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(X >= wins)` for `X ~ Binomial(wins + losses, 1/2)`.
    pub p_value: f64,
}

/// One-sided paired sign test that `a` tends to exceed `b`; ties dropped.
pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        if x > y {
            wins += 1;
        } else if x < y {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    SignTest { wins, losses, ties, p_value: binomial_upper_tail(wins, wins + losses) }
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_upper_tail(k: usize, n: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let ln_choose = |n: usize, j: usize| {
        libm::lgamma(n as f64 + 1.0) - libm::lgamma(j as f64 + 1.0) - libm::lgamma((n - j) as f64 + 1.0)
    };
    let half_n = n as f64 * std::f64::consts::LN_2;
    (k..=n).map(|j| (ln_choose(n, j) - half_n).exp()).sum::<f64>().min(1.0)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let s = if xs.len() > 1 { (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (m, s)
}

/// Runs every cell of the matrix in parallel. Failing cells are recorded
/// with their error and do not stop the others.
pub fn run_experiment(matrix: &ExperimentMatrix) -> Result<ExperimentResults> {
    if matrix.worlds.is_empty() || matrix.objectives.is_empty() || matrix.policies.is_empty() || matrix.seeds.is_empty()
    {
        return Err(IppError::Config("experiment matrix is empty".into()));
    }
    let resolved: Vec<std::result::Result<ResolvedPolicy, String>> =
        matrix.policies.iter().map(|p| p.resolve().map_err(|e| format!("{}: {e}", e.kind()))).collect();

    let mut cells = Vec::new();
    for w in 0..matrix.worlds.len() {
        for o in 0..matrix.objectives.len() {
            for p in 0..matrix.policies.len() {
                for &seed in &matrix.seeds {
                    cells.push((w, o, p, seed));
                }
            }
        }
    }
    let outcomes: Vec<(ResultRow, Option<EpisodeLog>, f64)> = cells
        .par_iter()
        .map(|&(w, o, p, seed)| {
            let (world_name, source) = &matrix.worlds[w];
            let objective = matrix.objectives[o];
            let policy_id = matrix.policies[p].id();
            let start = Instant::now();
            let log = resolved[p].clone().and_then(|policy| {
                let cfg = EpisodeConfig {
                    budget_steps: matrix.budget_steps,
                    seed_samples: matrix.seed_samples,
                    objective,
                    rng_seed: seed,
                };
                source
                    .field_for(seed)
                    .and_then(|field| {
                        run_episode(field, world_name, &policy, policy_id, &matrix.setup, cfg, &matrix.norms)
                    })
                    .map_err(|e| format!("{}: {e}", e.kind()))
            });
            let row = ResultRow {
                world: world_name.clone(),
                objective: objective.tag.short_name().to_string(),
                policy: policy_id.to_string(),
                seed,
                final_reward: log.as_ref().ok().map(|l| l.final_reward()),
                generator_calls: log.as_ref().ok().map(|l| l.total_generator_calls()),
                error: log.as_ref().err().cloned().unwrap_or_default(),
            };
            (row, log.ok(), start.elapsed().as_secs_f64() * 1e3)
        })
        .collect();

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut logs = Vec::new();
    let mut wall_ms = Vec::with_capacity(outcomes.len());
    for (row, log, ms) in outcomes {
        rows.push(row);
        logs.extend(log);
        wall_ms.push(ms);
    }

    let mut aggregates = Vec::new();
    let mut sign_tests = Vec::new();
    for obj in &matrix.objectives {
        let obj_name = obj.tag.short_name();
        let ok = |policy: &str| -> Vec<&ResultRow> {
            rows.iter().filter(|r| r.objective == obj_name && r.policy == policy && r.error.is_empty()).collect()
        };
        for spec in &matrix.policies {
            let cell = ok(spec.id());
            let rewards: Vec<f64> = cell.iter().filter_map(|r| r.final_reward).collect();
            let gcs: Vec<f64> = cell.iter().filter_map(|r| r.generator_calls).map(|g| g as f64).collect();
            let (mean_reward, std_reward) = mean_std(&rewards);
            aggregates.push(AggregateRow {
                objective: obj_name.to_string(),
                policy: spec.id().to_string(),
                n: rewards.len(),
                mean_reward,
                std_reward,
                mean_generator_calls: mean_std(&gcs).0,
            });
        }
        for i in 0..matrix.policies.len() {
            for j in i + 1..matrix.policies.len() {
                let (pa, pb) = (matrix.policies[i].id(), matrix.policies[j].id());
                let b_rows = ok(pb);
                let mut xa = Vec::new();
                let mut xb = Vec::new();
                for ra in ok(pa) {
                    if let Some(rb) = b_rows.iter().find(|r| r.world == ra.world && r.seed == ra.seed) {
                        xa.push(ra.final_reward.unwrap_or(f64::NAN));
                        xb.push(rb.final_reward.unwrap_or(f64::NAN));
                    }
                }
                let ab = sign_test(&xa, &xb);
                let ba = sign_test(&xb, &xa);
                sign_tests.push(SignTestRow {
                    objective: obj_name.to_string(),
                    policy_a: pa.to_string(),
                    policy_b: pb.to_string(),
                    wins_a: ab.wins,
                    wins_b: ab.losses,
                    ties: ab.ties,
                    p_a_better: ab.p_value,
                    p_b_better: ba.p_value,
                });
            }
        }
    }
    Ok(ExperimentResults { rows, logs, aggregates, sign_tests, wall_ms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::Objective;
    use crate::world::BlobSpec;

    #[test]
    fn binomial_tail_values() {
        assert_eq!(binomial_upper_tail(0, 10), 1.0);
        assert!((binomial_upper_tail(10, 10) - 1.0 / 1024.0).abs() < 1e-15);
        // P(X >= 15 | n = 20) = 21700 / 2^20
        assert!((binomial_upper_tail(15, 20) - 21700.0 / 1048576.0).abs() < 1e-12);
        assert!((binomial_upper_tail(14, 20) - 60460.0 / 1048576.0).abs() < 1e-12);
        assert!((binomial_upper_tail(3, 6) - 42.0 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn sign_test_drops_ties() {
        let t = sign_test(&[1.0, 2.0, 3.0, 4.0], &[0.0, 2.0, 5.0, 1.0]);
        assert_eq!((t.wins, t.losses, t.ties), (2, 1, 1));
        assert!((t.p_value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn policy_kinds_round_trip() {
        for k in [PolicyKind::NaiveFixed, PolicyKind::RandomParams, PolicyKind::LearnedMetadata, PolicyKind::LearnedFixedLength] {
            assert_eq!(PolicyKind::parse(k.id()), Some(k));
        }
        assert!(PolicyKind::parse("oracle").is_none());
    }

    #[test]
    fn learned_policy_requires_loadable_checkpoint() {
        let spec = PolicySpec { kind: PolicyKind::LearnedMetadata, checkpoint: None, fixed: SolverParams::NAIVE };
        assert!(matches!(spec.resolve(), Err(IppError::Checkpoint(_))));
        let spec = PolicySpec::learned(PolicyKind::LearnedMetadata, "/nonexistent.txt");
        assert!(matches!(spec.resolve(), Err(IppError::Checkpoint(_))));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        let net = PolicyNetwork::new(FeatureVariant::FixedLength10, &[4], 0.0, &mut stream(0, 0)).unwrap();
        net.save(&path).unwrap();
        let spec = PolicySpec::learned(PolicyKind::LearnedMetadata, &path);
        assert!(matches!(spec.resolve(), Err(IppError::Checkpoint(_))));
        assert!(PolicySpec::learned(PolicyKind::LearnedFixedLength, &path).resolve().is_ok());
    }

    fn small_matrix(policies: Vec<PolicySpec>, seeds: Vec<u64>) -> ExperimentMatrix {
        ExperimentMatrix {
            worlds: vec![(
                "tiny".into(),
                WorldSource::Synthetic { dims: [5, 5, 2], spacing: [1.0; 3], blobs: BlobSpec::default() },
            )],
            objectives: vec![ObjectiveKind::new(Objective::ExpectedImprovement)],
            policies,
            seeds,
            setup: EnvSetup::default(),
            budget_steps: 6,
            seed_samples: 3,
            norms: NormTable::default(),
        }
    }

    #[test]
    fn experiment_counts_rows_and_aggregates() {
        let fast = SolverParams { num_rollouts: 20, gamma: 0.9, ttest_value: 0.05, max_depth: 3 };
        let m = small_matrix(vec![PolicySpec::naive(fast), PolicySpec::random()], (0..5).collect());
        let r = run_experiment(&m).unwrap();
        assert_eq!(r.rows.len(), 10);
        assert_eq!(r.aggregates.len(), 2);
        assert_eq!(r.sign_tests.len(), 1);
        assert_eq!(r.logs.len(), 10);
        for (row, log) in r.rows.iter().zip(&r.logs) {
            assert_eq!(row.final_reward, Some(log.final_reward()));
            assert_eq!(log.rows.len(), 6);
        }
        let st = &r.sign_tests[0];
        assert_eq!(st.wins_a + st.wins_b + st.ties, 5);
    }

    #[test]
    fn failing_cells_are_reported_and_others_continue() {
        let broken = PolicySpec::learned(PolicyKind::LearnedMetadata, "/nonexistent.txt");
        let fast = SolverParams { num_rollouts: 10, gamma: 0.9, ttest_value: 0.05, max_depth: 3 };
        let m = small_matrix(vec![broken, PolicySpec::naive(fast)], vec![1, 2]);
        let r = run_experiment(&m).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert!(r.rows[..2].iter().all(|row| row.error.starts_with("checkpoint_error")));
        assert!(r.rows[2..].iter().all(|row| row.error.is_empty() && row.final_reward.is_some()));
        assert_eq!(r.logs.len(), 2);
    }

    #[test]
    fn single_cell_matches_episode() {
        let fast = SolverParams { num_rollouts: 15, gamma: 0.8, ttest_value: 0.1, max_depth: 3 };
        let m = small_matrix(vec![PolicySpec::naive(fast)], vec![7]);
        let r = run_experiment(&m).unwrap();
        assert_eq!(r.rows.len(), 1);
        let (_, src) = &m.worlds[0];
        let cfg = EpisodeConfig { budget_steps: 6, seed_samples: 3, objective: m.objectives[0], rng_seed: 7 };
        let log = run_episode(src.field_for(7).unwrap(), "tiny", &ResolvedPolicy::Fixed(fast), "naive", &m.setup, cfg, &m.norms)
            .unwrap();
        assert_eq!(r.rows[0].final_reward, Some(log.final_reward()));
        assert_eq!(r.logs[0], log);
    }

    #[test]
    fn log_invariants() {
        let m = small_matrix(vec![PolicySpec::random()], vec![3]);
        let r = run_experiment(&m).unwrap();
        let log = &r.logs[0];
        let mut acc = 0.0;
        for (i, row) in log.rows.iter().enumerate() {
            assert_eq!(row.step, i);
            acc += row.env_reward;
            assert!((row.cumulative_reward - acc).abs() < 1e-9);
            let p = SolverParams { num_rollouts: row.rollouts, gamma: row.gamma, ttest_value: row.ttest, max_depth: row.depth };
            assert!(p.in_table_ranges());
        }
    }
}
