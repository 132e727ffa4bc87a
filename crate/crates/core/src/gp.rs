//! Gaussian-process belief over sensed locations.
//!
//! The model keeps a packed lower-triangular Cholesky factor `L` of
//! `K(X, X) + noise * I` and the whitened residuals `w = L^-1 (y - m)`.
//! Adding a sample appends one row to `L` and one entry to `w`, so
//! conditioning costs O(n^2) per sample and the posterior mean is
//! `m + (L^-1 k*) . w`.

use crate::error::{IppError, Result};

pub type Point = [f64; 3];

/// Jitter ladder tried when a new pivot is not positive.
const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Squared-exponential kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelHyper {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub prior_mean: f64,
}

impl KernelHyper {
    pub fn new(
        lengthscale: f64,
        signal_variance: f64,
        noise_variance: f64,
        prior_mean: f64,
    ) -> Result<Self> {
        let h = KernelHyper { lengthscale, signal_variance, noise_variance, prior_mean };
        h.validate()?;
        Ok(h)
    }

    /// Defaults scaled to a world whose longest axis spans `extent`.
    ///
    /// A lengthscale of `frac * extent` on raw coordinates is the same kernel
    /// as lengthscale `frac` on coordinates normalized by `extent`.
    pub fn for_extent(extent: f64, lengthscale_frac: f64) -> Self {
        KernelHyper {
            lengthscale: lengthscale_frac * extent.max(f64::MIN_POSITIVE),
            signal_variance: 1.0,
            noise_variance: 1e-4,
            prior_mean: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lengthscale > 0.0
            && self.signal_variance > 0.0
            && self.noise_variance >= 0.0
            && self.lengthscale.is_finite()
            && self.signal_variance.is_finite()
            && self.noise_variance.is_finite()
            && self.prior_mean.is_finite();
        if ok {
            Ok(())
        } else {
            Err(IppError::Config(format!("invalid kernel hyperparameters {self:?}")))
        }
    }
}

pub fn sq_dist(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// `signal_variance * exp(-|a - b|^2 / (2 l^2))`.
pub fn kernel_eval(a: &Point, b: &Point, h: &KernelHyper) -> f64 {
    h.signal_variance * (-sq_dist(a, b) / (2.0 * h.lengthscale * h.lengthscale)).exp()
}

/// Posterior mean and latent-function variance at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: KernelHyper,
    locations: Vec<Point>,
    values: Vec<f64>,
    /// Row-major packed lower triangle.
    factor: Vec<f64>,
    weights: Vec<f64>,
    /// Diagonal jitter added per sample (0 unless escalation kicked in).
    jitter: Vec<f64>,
}

impl GpModel {
    pub fn new(hyper: KernelHyper) -> Self {
        GpModel {
            hyper,
            locations: Vec::new(),
            values: Vec::new(),
            factor: Vec::new(),
            weights: Vec::new(),
            jitter: Vec::new(),
        }
    }

    pub fn hyper(&self) -> &KernelHyper {
        &self.hyper
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[Point] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn jitter(&self) -> &[f64] {
        &self.jitter
    }

    /// Whitened residuals `L^-1 (y - prior_mean)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn factor_row(&self, i: usize) -> &[f64] {
        &self.factor[row_start(i)..row_start(i + 1)]
    }

    /// Factor entry `L[i][j]` (zero above the diagonal).
    pub fn factor_at(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.factor[row_start(i) + j]
        }
    }

    /// Returns a new model that also contains `new_samples`.
    pub fn condition(&self, new_samples: &[(Point, f64)]) -> Result<GpModel> {
        let mut next = self.clone();
        next.factor.reserve(new_samples.len() * (self.len() + new_samples.len()));
        for &(x, y) in new_samples {
            next.push_sample(x, y)?;
        }
        Ok(next)
    }

    /// Appends one sample in place. On error the model is left unchanged.
    pub fn push_sample(&mut self, x: Point, y: f64) -> Result<()> {
        let kx = self.cross_cov(&x);
        let row = self.solve_lower(&kx);
        let base = kernel_eval(&x, &x, &self.hyper) + self.hyper.noise_variance;
        let pivot = base - dot(&row, &row);
        let (pivot, jitter) = escalate_pivot(pivot).ok_or_else(|| {
            IppError::NumericalFailure(format!(
                "non-positive pivot {pivot:e} when adding {x:?} (near-duplicate sample?)"
            ))
        })?;
        let diag = pivot.sqrt();
        let w = (y - self.hyper.prior_mean - dot(&row, &self.weights)) / diag;
        self.factor.extend_from_slice(&row);
        self.factor.push(diag);
        self.weights.push(w);
        self.locations.push(x);
        self.values.push(y);
        self.jitter.push(jitter);
        Ok(())
    }

    /// Kernel vector between `q` and every stored location.
    pub fn cross_cov(&self, q: &Point) -> Vec<f64> {
        self.locations.iter().map(|x| kernel_eval(x, q, &self.hyper)).collect()
    }

    /// Forward substitution `L^-1 b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        debug_assert_eq!(b.len(), n);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let row = self.factor_row(i);
            let s = b[i] - dot(&row[..i], &out);
            out.push(s / row[i]);
        }
        out
    }

    /// `L^-1 k(X, q)`, the whitened cross-covariance of a query.
    pub fn whiten(&self, q: &Point) -> Vec<f64> {
        self.solve_lower(&self.cross_cov(q))
    }

    pub fn predict(&self, q: &Point) -> Prediction {
        let v = self.whiten(q);
        self.predict_from_whitened(q, &v)
    }

    pub(crate) fn predict_from_whitened(&self, q: &Point, v: &[f64]) -> Prediction {
        let mean = self.hyper.prior_mean + dot(v, &self.weights);
        let variance = (kernel_eval(q, q, &self.hyper) - dot(v, v)).max(0.0);
        Prediction { mean, variance }
    }

    /// Weight vector `alpha = (K + noise I)^-1 (y - m)` by back substitution.
    pub fn alpha(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = self.weights[i];
            for (j, o) in out.iter().enumerate().skip(i + 1) {
                s -= self.factor_at(j, i) * o;
            }
            out[i] = s / self.factor_at(i, i);
        }
        out
    }

    /// Dense Cholesky of the full kernel matrix recomputed from scratch,
    /// packed the same way as the incremental factor.
    pub fn batch_factor(&self) -> Result<Vec<f64>> {
        let n = self.len();
        let mut l = vec![0.0; row_start(n)];
        for i in 0..n {
            for j in 0..=i {
                let mut s = kernel_eval(&self.locations[i], &self.locations[j], &self.hyper);
                if i == j {
                    s += self.hyper.noise_variance + self.jitter[i];
                }
                for k in 0..j {
                    s -= l[row_start(i) + k] * l[row_start(j) + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(IppError::NumericalFailure(format!(
                            "batch factor pivot {s:e} at {i}"
                        )));
                    }
                    l[row_start(i) + i] = s.sqrt();
                } else {
                    l[row_start(i) + j] = s / l[row_start(j) + j];
                }
            }
        }
        Ok(l)
    }

    pub fn packed_factor(&self) -> &[f64] {
        &self.factor
    }
}

/// Returns the accepted pivot and the jitter that made it positive.
pub(crate) fn escalate_pivot(pivot: f64) -> Option<(f64, f64)> {
    if pivot > 0.0 && pivot.is_finite() {
        return Some((pivot, 0.0));
    }
    if !pivot.is_finite() {
        return None;
    }
    JITTER_LADDER
        .iter()
        .map(|&j| (pivot + j, j))
        .find(|&(p, _)| p > 0.0)
}
