//! Per-location rewards computed from a GP prediction, and their sum along a
//! sensed path.

use serde::{Deserialize, Serialize};

use crate::gp::{GpModel, Point, Prediction};

pub use crate::special::std_normal;

/// Variance below which a location counts as fully observed.
pub const VAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Entropy,
    ExpectedImprovement,
    ProbabilityOfImprovement,
}

impl Objective {
    /// Fixed one-hot order: (Entropy, ExpectedImprovement, ProbabilityOfImprovement).
    pub const ALL: [Objective; 3] = [
        Objective::Entropy,
        Objective::ExpectedImprovement,
        Objective::ProbabilityOfImprovement,
    ];

    pub fn index(self) -> usize {
        match self {
            Objective::Entropy => 0,
            Objective::ExpectedImprovement => 1,
            Objective::ProbabilityOfImprovement => 2,
        }
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Objective::Entropy => "entropy",
            Objective::ExpectedImprovement => "ei",
            Objective::ProbabilityOfImprovement => "pi",
        }
    }

    pub fn parse(s: &str) -> Option<Objective> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entropy" | "en" => Some(Objective::Entropy),
            "ei" | "expected_improvement" => Some(Objective::ExpectedImprovement),
            "pi" | "probability_of_improvement" => Some(Objective::ProbabilityOfImprovement),
            _ => None,
        }
    }
}

/// How the improvement is scaled into a z-score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMode {
    /// `Z = I / sigma^2`.
    #[default]
    PaperVariance,
    /// `Z = I / sigma`, the usual Bayesian-optimization form.
    StandardDeviation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveKind {
    pub tag: Objective,
    pub z_mode: ZMode,
}

impl ObjectiveKind {
    pub fn new(tag: Objective) -> Self {
        ObjectiveKind { tag, z_mode: ZMode::default() }
    }

    pub fn with_z_mode(mut self, z_mode: ZMode) -> Self {
        self.z_mode = z_mode;
        self
    }

    /// Per-location reward.
    pub fn score(&self, pred: &Prediction, state: &ImprovementState) -> f64 {
        match self.tag {
            Objective::Entropy => entropy_score(pred),
            Objective::ExpectedImprovement => expected_improvement(pred, state, self.z_mode),
            Objective::ProbabilityOfImprovement => prob_improvement(pred, state, self.z_mode),
        }
    }
}

/// Running maximum of the posterior mean over sensed locations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImprovementState {
    best_mean: f64,
}

impl ImprovementState {
    pub fn new(best_mean: f64) -> Self {
        ImprovementState { best_mean }
    }

    pub fn best_mean(&self) -> f64 {
        self.best_mean
    }

    /// Folds in the posterior mean at a newly sensed location.
    pub fn observe(&mut self, mean: f64) {
        if mean > self.best_mean {
            self.best_mean = mean;
        }
    }
}

/// Improvement over the running best and its z-score.
pub fn improvement_z(pred: &Prediction, state: &ImprovementState, mode: ZMode) -> (f64, f64) {
    let i = pred.mean - state.best_mean;
    let z = match mode {
        ZMode::PaperVariance => i / pred.variance,
        ZMode::StandardDeviation => i / pred.variance.sqrt(),
    };
    (i, z)
}

/// Differential entropy of the predictive Gaussian.
pub fn entropy_score(pred: &Prediction) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * pred.variance.max(VAR_FLOOR)).ln()
}

pub fn prob_improvement(pred: &Prediction, state: &ImprovementState, mode: ZMode) -> f64 {
    if pred.variance <= VAR_FLOOR {
        let i = pred.mean - state.best_mean;
        return if i > 0.0 { 1.0 } else { 0.0 };
    }
    let (_, z) = improvement_z(pred, state, mode);
    std_normal(z).0
}

pub fn expected_improvement(pred: &Prediction, state: &ImprovementState, mode: ZMode) -> f64 {
    if pred.variance <= VAR_FLOOR {
        return (pred.mean - state.best_mean).max(0.0);
    }
    let (i, z) = improvement_z(pred, state, mode);
    let (cdf, pdf) = std_normal(z);
    // With Z = I / sigma^2 and sigma > 1 the closed form can dip below zero.
    (i * cdf + pred.variance.sqrt() * pdf).max(0.0)
}

/// Sum of per-point scores, all evaluated against the same model and state.
pub fn aggregate_path(
    kind: &ObjectiveKind,
    model: &GpModel,
    state: &ImprovementState,
    points: &[Point],
) -> f64 {
    points.iter().map(|x| kind.score(&model.predict(x), state)).sum()
}
