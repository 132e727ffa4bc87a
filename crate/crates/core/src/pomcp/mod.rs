//! POMCP over the GP belief, with the t-test rule for executing several
//! actions from one plan.

mod belief;
mod search;
mod tree;
mod ttest;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use belief::{generator, Belief, GeneratorOutcome, GpSearch, Problem, ReferenceSearch};
pub use search::{rollout, search, SearchConfig, SearchModel, SearchOutcome};
pub use tree::{extract_action_chain, ucb1_select, NodeId, ReturnStats, SearchTree, TreeNode};
pub use ttest::welch_p_value;

use crate::error::{IppError, Result};
use crate::world::Action;

/// The four solver parameters chosen at every planning iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub num_rollouts: usize,
    pub gamma: f64,
    pub ttest_value: f64,
    pub max_depth: usize,
}

impl SolverParams {
    pub const ROLLOUTS: (usize, usize) = (10, 300);
    pub const GAMMA: (f64, f64) = (0.1, 0.99);
    pub const TTEST: (f64, f64) = (1e-3, 0.4);
    pub const DEPTH: (usize, usize) = (3, 15);

    /// Fixed conservative parameters of the naive baseline.
    pub const NAIVE: SolverParams =
        SolverParams { num_rollouts: 100, gamma: 0.9, ttest_value: 0.05, max_depth: 8 };

    /// True when every field lies in its closed selection range.
    pub fn in_table_ranges(&self) -> bool {
        (Self::ROLLOUTS.0..=Self::ROLLOUTS.1).contains(&self.num_rollouts)
            && (Self::GAMMA.0..=Self::GAMMA.1).contains(&self.gamma)
            && (Self::TTEST.0..=Self::TTEST.1).contains(&self.ttest_value)
            && (Self::DEPTH.0..=Self::DEPTH.1).contains(&self.max_depth)
    }

    /// Looser check applied by the planner itself, which also serves
    /// oracle experiments outside the selection ranges.
    pub fn validate_for_planning(&self) -> Result<()> {
        let ok = self.num_rollouts >= 1
            && self.max_depth >= 1
            && self.gamma > 0.0
            && self.gamma <= 1.0
            && self.ttest_value > 0.0
            && self.ttest_value <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(IppError::Config(format!("invalid solver parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootValue {
    pub action: Action,
    pub mean: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub actions: Vec<Action>,
    pub generator_calls: u64,
    pub root_values: Vec<RootValue>,
}

/// Default multiplier on the root-return range used as UCB1 exploration constant.
pub const DEFAULT_EXPLORATION: f64 = 1.0;

/// Plans from `belief` and extracts the action chain to execute.
pub fn plan<R: Rng>(
    belief: &Belief,
    problem: &Problem<'_>,
    params: &SolverParams,
    rng: &mut R,
) -> Result<PlanResult> {
    plan_traced(belief, problem, params, DEFAULT_EXPLORATION, rng, None).map(|(r, _)| r)
}

/// [`plan`] with an explicit exploration multiplier, returning the search
/// tree and optionally logging every backed-up return.
pub fn plan_traced<R: Rng>(
    belief: &Belief,
    problem: &Problem<'_>,
    params: &SolverParams,
    exploration: f64,
    rng: &mut R,
    trace: Option<&mut Vec<(NodeId, f64)>>,
) -> Result<(PlanResult, SearchTree)> {
    params.validate_for_planning()?;
    let mut model = GpSearch::new(belief, *problem);
    let cfg = SearchConfig {
        num_rollouts: params.num_rollouts,
        gamma: params.gamma,
        max_depth: params.max_depth,
        exploration,
    };
    let out = search(&mut model, &cfg, rng, trace)?;
    Ok((summarize(&out, params), out.tree))
}

pub(crate) fn summarize(out: &SearchOutcome, params: &SolverParams) -> PlanResult {
    let tree = &out.tree;
    let root_values = tree
        .children(SearchTree::ROOT)
        .map(|(action, id)| {
            let s = tree.node(id).stats;
            RootValue { action, mean: s.mean, count: s.count }
        })
        .collect();
    PlanResult {
        actions: extract_action_chain(tree, params.ttest_value, params.max_depth),
        generator_calls: out.generator_calls,
        root_values,
    }
}
