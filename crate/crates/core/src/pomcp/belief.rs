//! Belief states and the generator used inside the planner.
//!
//! During planning the observation for a sensed point is the GP posterior
//! mean there. Conditioning a GP on its own mean leaves the mean function
//! unchanged, so a simulated trajectory only shrinks variances. [`GpSearch`]
//! exploits this: it caches base-posterior quantities per sensed point for
//! the whole plan and keeps only a small Cholesky factor of the posterior
//! covariance among points sensed in the current simulation.

use std::collections::HashMap;

use super::search::SearchModel;
use crate::error::Result;
use crate::gp::{dot, escalate_pivot, kernel_eval, GpModel, Point, Prediction};
use crate::objective::{ImprovementState, ObjectiveKind};
use crate::world::{apply_action, legal_mask, sense_path, Action, Lattice, RobotPose, SensingConfig};

/// Static description of the planning problem.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub lattice: &'a Lattice,
    pub sensing: SensingConfig,
    pub objective: ObjectiveKind,
}

/// GP belief augmented with the robot pose and the running best mean.
#[derive(Debug, Clone)]
pub struct Belief {
    pub model: GpModel,
    pub pose: RobotPose,
    pub improvement: ImprovementState,
}

#[derive(Debug, Clone)]
pub struct GeneratorOutcome {
    pub belief: Belief,
    /// Sensed points paired with the predicted (mean) observation.
    pub observations: Vec<(Point, f64)>,
    pub reward: f64,
}

/// One simulated transition on the full GP. Scores are taken under the
/// pre-move belief; points whose conditioning fails numerically are skipped.
pub fn generator(
    belief: &Belief,
    action: Action,
    problem: &Problem<'_>,
    calls: &mut u64,
) -> Result<GeneratorOutcome> {
    let next = apply_action(belief.pose, action, problem.lattice)?;
    *calls += 1;
    let points = sense_path(&problem.sensing, belief.pose, next, problem.lattice);
    let preds: Vec<Prediction> = points.iter().map(|p| belief.model.predict(p)).collect();
    let reward = preds.iter().map(|p| problem.objective.score(p, &belief.improvement)).sum();
    let observations: Vec<(Point, f64)> = points.iter().zip(&preds).map(|(x, p)| (*x, p.mean)).collect();

    let mut model = belief.model.clone();
    let mut improvement = belief.improvement;
    for &(x, y) in &observations {
        if model.push_sample(x, y).is_ok() {
            improvement.observe(y);
        }
    }
    Ok(GeneratorOutcome {
        belief: Belief { model, pose: next, improvement },
        observations,
        reward,
    })
}

/// [`SearchModel`] that runs [`generator`] on full GP copies. Slow; kept as
/// the reference the fast model is checked against.
pub struct ReferenceSearch<'a> {
    root: Belief,
    current: Belief,
    problem: Problem<'a>,
    pub calls: u64,
}

impl<'a> ReferenceSearch<'a> {
    pub fn new(root: Belief, problem: Problem<'a>) -> Self {
        ReferenceSearch { current: root.clone(), root, problem, calls: 0 }
    }

    pub fn current(&self) -> &Belief {
        &self.current
    }
}

impl SearchModel for ReferenceSearch<'_> {
    fn reset(&mut self) {
        self.current = self.root.clone();
    }

    fn legal_mask(&self) -> u8 {
        legal_mask(self.current.pose, self.problem.lattice)
    }

    fn step(&mut self, action: Action) -> Result<f64> {
        let out = generator(&self.current, action, &self.problem, &mut self.calls)?;
        self.current = out.belief;
        Ok(out.reward)
    }
}

/// Base-posterior quantities for one sensed point.
struct CachedPoint {
    x: Point,
    /// `L^-1 k(X, x)` against the root model.
    v: Vec<f64>,
    mean: f64,
    /// `k(x, x) - |v|^2`, unclamped.
    var: f64,
}

/// Fast [`SearchModel`] over a fixed root belief.
pub struct GpSearch<'a> {
    base: &'a GpModel,
    problem: Problem<'a>,
    root_pose: RobotPose,
    root_improvement: ImprovementState,
    quantum: [f64; 3],
    index: HashMap<[i64; 3], u32>,
    cache: Vec<CachedPoint>,
    // current simulated state
    pose: RobotPose,
    improvement: ImprovementState,
    overlay_ids: Vec<u32>,
    /// Packed lower-triangular factor of the base-posterior covariance
    /// (plus noise) among `overlay_ids`.
    overlay: Vec<f64>,
    rows: Vec<Vec<f64>>,
    step_ids: Vec<u32>,
}

impl<'a> GpSearch<'a> {
    pub fn new(root: &'a Belief, problem: Problem<'a>) -> Self {
        let k = problem.sensing.samples_per_edge.max(1) as f64;
        let quantum = problem.lattice.spacing().map(|s| s / k);
        GpSearch {
            base: &root.model,
            problem,
            root_pose: root.pose,
            root_improvement: root.improvement,
            quantum,
            index: HashMap::new(),
            cache: Vec::new(),
            pose: root.pose,
            improvement: root.improvement,
            overlay_ids: Vec::new(),
            overlay: Vec::new(),
            rows: Vec::new(),
            step_ids: Vec::new(),
        }
    }

    pub fn pose(&self) -> RobotPose {
        self.pose
    }

    pub fn improvement(&self) -> ImprovementState {
        self.improvement
    }

    /// Number of distinct points whose base quantities are cached.
    pub fn cached_points(&self) -> usize {
        self.cache.len()
    }

    fn point_id(&mut self, x: &Point) -> u32 {
        let key = [0, 1, 2].map(|a| (x[a] / self.quantum[a]).round() as i64);
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let v = self.base.whiten(x);
        let h = self.base.hyper();
        let mean = h.prior_mean + dot(&v, self.base.weights());
        let var = kernel_eval(x, x, h) - dot(&v, &v);
        let id = self.cache.len() as u32;
        self.cache.push(CachedPoint { x: *x, v, mean, var });
        self.index.insert(key, id);
        id
    }

    /// Base-posterior covariance between two cached points.
    fn base_cov(&self, a: u32, b: u32) -> f64 {
        let (pa, pb) = (&self.cache[a as usize], &self.cache[b as usize]);
        kernel_eval(&pa.x, &pb.x, self.base.hyper()) - dot(&pa.v, &pb.v)
    }

    /// Posterior prediction at cached point `id` under the current overlay.
    /// Leaves the whitened overlay row in `row`.
    fn overlay_predict(&self, id: u32, row: &mut Vec<f64>) -> Prediction {
        row.clear();
        let mut ss = 0.0;
        for (i, &q) in self.overlay_ids.iter().enumerate() {
            let start = i * (i + 1) / 2;
            let lrow = &self.overlay[start..start + i + 1];
            let w = (self.base_cov(id, q) - dot(&lrow[..i], row)) / lrow[i];
            ss += w * w;
            row.push(w);
        }
        let p = &self.cache[id as usize];
        Prediction { mean: p.mean, variance: (p.var - ss).max(0.0) }
    }

    /// Extends `row` (already whitened against the first `row.len()` overlay
    /// points) to the full overlay, then appends the point.
    fn overlay_push(&mut self, id: u32, row: &mut Vec<f64>) -> bool {
        for i in row.len()..self.overlay_ids.len() {
            let q = self.overlay_ids[i];
            let start = i * (i + 1) / 2;
            let lrow = &self.overlay[start..start + i + 1];
            let w = (self.base_cov(id, q) - dot(&lrow[..i], row)) / lrow[i];
            row.push(w);
        }
        let pivot = self.cache[id as usize].var + self.base.hyper().noise_variance - dot(row, row);
        if let Some((pivot, _)) = escalate_pivot(pivot) {
            self.overlay.extend_from_slice(row);
            self.overlay.push(pivot.sqrt());
            self.overlay_ids.push(id);
            true
        } else {
            false
        }
    }
}

impl SearchModel for GpSearch<'_> {
    fn reset(&mut self) {
        self.pose = self.root_pose;
        self.improvement = self.root_improvement;
        self.overlay_ids.clear();
        self.overlay.clear();
    }

    fn legal_mask(&self) -> u8 {
        legal_mask(self.pose, self.problem.lattice)
    }

    fn step(&mut self, action: Action) -> Result<f64> {
        let next = apply_action(self.pose, action, self.problem.lattice)?;
        let points = sense_path(&self.problem.sensing, self.pose, next, self.problem.lattice);
        let mut ids = std::mem::take(&mut self.step_ids);
        ids.clear();
        ids.extend(points.iter().map(|p| self.point_id(p)));

        let mut rows = std::mem::take(&mut self.rows);
        rows.resize_with(ids.len(), Vec::new);
        let mut reward = 0.0;
        for (j, &id) in ids.iter().enumerate() {
            let pred = self.overlay_predict(id, &mut rows[j]);
            reward += self.problem.objective.score(&pred, &self.improvement);
        }
        for (j, &id) in ids.iter().enumerate() {
            if self.overlay_push(id, &mut rows[j]) {
                self.improvement.observe(self.cache[id as usize].mean);
            }
        }
        self.rows = rows;
        self.step_ids = ids;
        self.pose = next;
        Ok(reward)
    }
}
