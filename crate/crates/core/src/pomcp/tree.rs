//! Search tree storage, UCB1 child selection and the multi-step chain rule.

use super::ttest::welch_p_value;
use crate::world::Action;

/// Welford accumulator of discounted returns.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReturnStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl ReturnStats {
    pub fn new(count: u64, mean: f64, m2: f64) -> Self {
        ReturnStats { count, mean, m2 }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let mut s = ReturnStats::default();
        xs.iter().for_each(|&x| s.push(x));
        s
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Unbiased sample variance (0 with fewer than two samples).
    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, Default)]
pub struct TreeNode {
    pub stats: ReturnStats,
    pub children: [Option<NodeId>; 6],
    pub depth: usize,
}

impl TreeNode {
    pub fn visit_count(&self) -> u64 {
        self.stats.count
    }
}

/// Arena of nodes. Node 0 is the root. A child holds the returns credited to
/// the action leading into it, so its mean is that action's value estimate.
#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<TreeNode>,
}

impl Default for SearchTree {
    fn default() -> Self {
        Self::new()
    }
}

impl SearchTree {
    pub const ROOT: NodeId = 0;

    pub fn new() -> Self {
        SearchTree { nodes: vec![TreeNode::default()] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut TreeNode {
        &mut self.nodes[id]
    }

    pub fn child(&self, id: NodeId, action: Action) -> Option<NodeId> {
        self.nodes[id].children[action.index()]
    }

    pub fn add_child(&mut self, parent: NodeId, action: Action) -> NodeId {
        self.add_child_with_stats(parent, action, ReturnStats::default())
    }

    /// Inserts (or replaces the stats of) a child. Handy for frozen test trees.
    pub fn add_child_with_stats(&mut self, parent: NodeId, action: Action, stats: ReturnStats) -> NodeId {
        if let Some(id) = self.child(parent, action) {
            self.nodes[id].stats = stats;
            return id;
        }
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(TreeNode { stats, children: [None; 6], depth });
        self.nodes[parent].children[action.index()] = Some(id);
        id
    }

    /// Children as `(action, id)` in canonical action order.
    pub fn children(&self, id: NodeId) -> impl Iterator<Item = (Action, NodeId)> + '_ {
        self.nodes[id]
            .children
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|c| (Action::from_index(i), c)))
    }

    /// Visited children sorted by mean return, best first; ties keep canonical order.
    pub fn ranked_children(&self, id: NodeId) -> Vec<(Action, NodeId)> {
        let mut v: Vec<(Action, NodeId)> =
            self.children(id).filter(|&(_, c)| self.nodes[c].stats.count > 0).collect();
        v.sort_by(|a, b| {
            let (ma, mb) = (self.nodes[a.1].stats.mean, self.nodes[b.1].stats.mean);
            mb.partial_cmp(&ma).unwrap_or(std::cmp::Ordering::Equal)
        });
        v
    }
}

/// UCB1 over the legal actions in `legal_mask` (bit i = `Action::ALL[i]`).
///
/// Unvisited actions come first in canonical order; otherwise the argmax of
/// `mean + c * sqrt(ln N / n)` wins, with ties going to the earlier action.
pub fn ucb1_select(tree: &SearchTree, node: NodeId, legal_mask: u8, exploration_c: f64) -> Action {
    debug_assert!(legal_mask != 0, "node has no legal action");
    let n_parent = tree.node(node).stats.count.max(1) as f64;
    let ln_n = n_parent.ln();
    let mut best: Option<(Action, f64)> = None;
    for a in Action::ALL {
        if legal_mask & (1 << a.index()) == 0 {
            continue;
        }
        let stats = match tree.child(node, a) {
            Some(c) if tree.node(c).stats.count > 0 => tree.node(c).stats,
            _ => return a,
        };
        let score = stats.mean + exploration_c * (ln_n / stats.count as f64).sqrt();
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((a, score));
        }
    }
    best.map(|(a, _)| a).unwrap_or(Action::ALL[legal_mask.trailing_zeros() as usize])
}

fn confident(tree: &SearchTree, ranked: &[(Action, NodeId)], ttest_value: f64) -> bool {
    let best = tree.node(ranked[0].1).stats;
    let Some(&(_, second)) = ranked.get(1) else {
        return false;
    };
    let second = tree.node(second).stats;
    if best.count < 2 || second.count < 2 {
        return false;
    }
    welch_p_value(&best, &second).map(|p| p <= ttest_value).unwrap_or(false)
}

/// Follows best-mean children from the root. The root's best action is always
/// taken; each further action is taken while the best child at that level is
/// separated from the runner-up by a Welch test at level `ttest_value`.
/// Stops at the first failed test or after `max_depth` actions.
pub fn extract_action_chain(tree: &SearchTree, ttest_value: f64, max_depth: usize) -> Vec<Action> {
    let mut chain = Vec::new();
    let mut node = SearchTree::ROOT;
    while chain.len() < max_depth.max(1) {
        let ranked = tree.ranked_children(node);
        let Some(&(action, child)) = ranked.first() else {
            break;
        };
        let ok = confident(tree, &ranked, ttest_value);
        if chain.is_empty() || ok {
            chain.push(action);
        }
        if !ok {
            break;
        }
        node = child;
    }
    chain
}
