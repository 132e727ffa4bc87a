//! Hidden ground-truth field, lattice kinematics and the sensing function.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{IppError, Result};
use crate::gp::Point;
use crate::objective::ObjectiveKind;

/// Tolerance used when checking points against the world box.
const BOUNDS_EPS: f64 = 1e-9;

/// Grid geometry shared by the field and the planner: node counts and spacing.
/// Node `(ix, iy, iz)` sits at `(ix*sx, iy*sy, iz*sz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    dims: [usize; 3],
    spacing: [f64; 3],
}

impl Lattice {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if dims[0] < 2 || dims[1] < 2 || dims[2] < 1 {
            return Err(IppError::Shape(format!("grid dims {dims:?} need nx, ny >= 2 and nz >= 1")));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(IppError::Shape(format!("grid spacing {spacing:?} must be positive")));
        }
        Ok(Lattice { dims, spacing })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_planar(&self) -> bool {
        self.dims[2] == 1
    }

    /// Upper corner of the box; the lower corner is the origin.
    pub fn upper(&self) -> Point {
        [0, 1, 2].map(|a| (self.dims[a] - 1) as f64 * self.spacing[a])
    }

    /// Length of the longest axis.
    pub fn extent(&self) -> f64 {
        self.upper().into_iter().fold(0.0, f64::max)
    }

    pub fn index(&self, cell: [usize; 3]) -> usize {
        cell[0] + self.dims[0] * (cell[1] + self.dims[1] * cell[2])
    }

    pub fn position(&self, cell: [usize; 3]) -> Point {
        [0, 1, 2].map(|a| cell[a] as f64 * self.spacing[a])
    }

    pub fn contains(&self, x: &Point) -> bool {
        let up = self.upper();
        (0..3).all(|a| x[a] >= -BOUNDS_EPS && x[a] <= up[a] + BOUNDS_EPS)
    }

    pub fn contains_cell(&self, cell: [usize; 3]) -> bool {
        (0..3).all(|a| cell[a] < self.dims[a])
    }

    /// Maps a point into the unit cube (each axis divided by its own span).
    pub fn to_unit(&self, x: &Point) -> Point {
        let up = self.upper();
        [0, 1, 2].map(|a| if up[a] > 0.0 { x[a] / up[a] } else { 0.0 })
    }
}

/// Dense scalar grid, interpolated trilinearly (bilinearly when `nz == 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct WorldField {
    lattice: Lattice,
    values: Vec<f64>,
}

impl WorldField {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], values: Vec<f64>) -> Result<Self> {
        let lattice = Lattice::new(dims, spacing)?;
        let n = lattice.len();
        if values.len() != n {
            return Err(IppError::Shape(format!("expected {n} grid values, got {}", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(IppError::Shape(format!("grid value {i} is not finite")));
        }
        Ok(WorldField { lattice, values })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dims(&self) -> [usize; 3] {
        self.lattice.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.lattice.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_planar(&self) -> bool {
        self.lattice.is_planar()
    }

    pub fn upper(&self) -> Point {
        self.lattice.upper()
    }

    pub fn extent(&self) -> f64 {
        self.lattice.extent()
    }

    pub fn index(&self, cell: [usize; 3]) -> usize {
        self.lattice.index(cell)
    }

    pub fn node(&self, cell: [usize; 3]) -> f64 {
        self.values[self.lattice.index(cell)]
    }

    pub fn position(&self, cell: [usize; 3]) -> Point {
        self.lattice.position(cell)
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.lattice.contains(x)
    }

    pub fn contains_cell(&self, cell: [usize; 3]) -> bool {
        self.lattice.contains_cell(cell)
    }

    /// Min and max grid value.
    pub fn value_range(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    /// Interpolated field value at `x`.
    pub fn value_at(&self, x: &Point) -> Result<f64> {
        if !self.contains(x) {
            return Err(IppError::OutOfBounds(*x));
        }
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            if self.lattice.dims[a] == 1 {
                continue;
            }
            let t = (x[a] / self.lattice.spacing[a]).clamp(0.0, (self.lattice.dims[a] - 1) as f64);
            let i = (t.floor() as usize).min(self.lattice.dims[a] - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let zc = if self.lattice.dims[2] == 1 { 1 } else { 2 };
        let mut acc = 0.0;
        for dz in 0..zc {
            let wz = if dz == 0 { 1.0 - frac[2] } else { frac[2] };
            for dy in 0..2 {
                let wy = if dy == 0 { 1.0 - frac[1] } else { frac[1] };
                for dx in 0..2 {
                    let wx = if dx == 0 { 1.0 - frac[0] } else { frac[0] };
                    let w = wx * wy * wz;
                    if w != 0.0 {
                        acc += w * self.node([base[0] + dx, base[1] + dy, base[2] + dz]);
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Writes the grid in the `nx,ny,nz,sx,sy,sz` / `ix,iy,iz,value` CSV format.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| IppError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let [nx, ny, nz] = self.lattice.dims;
        let [sx, sy, sz] = self.lattice.spacing;
        let mut body = format!("{nx},{ny},{nz},{sx},{sy},{sz}\n");
        for iz in 0..nz {
            for iy in 0..ny {
                for ix in 0..nx {
                    body.push_str(&format!("{ix},{iy},{iz},{}\n", self.node([ix, iy, iz])));
                }
            }
        }
        w.write_all(body.as_bytes()).map_err(|e| IppError::io(path, e))?;
        w.flush().map_err(|e| IppError::io(path, e))
    }
}

/// Reads a grid written in the `nx,ny,nz,sx,sy,sz` / `ix,iy,iz,value` format.
pub fn load_grid_csv(path: &Path) -> Result<WorldField> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => IppError::io(path, io),
            other => IppError::Parse { line: 0, msg: format!("{other:?}") },
        })?;

    let mut dims = None;
    let mut spacing = [0.0; 3];
    let mut values: Vec<Option<f64>> = Vec::new();
    let mut rows = 0usize;
    for rec in reader.records() {
        let rec = rec.map_err(|e| IppError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let bad = |msg: String| IppError::Parse { line, msg };
        match dims {
            None => {
                if rec.len() != 6 {
                    return Err(bad(format!("header needs 6 fields, found {}", rec.len())));
                }
                let mut d = [0usize; 3];
                for a in 0..3 {
                    d[a] = rec[a]
                        .parse()
                        .map_err(|_| bad(format!("grid count {:?} is not an integer", &rec[a])))?;
                    spacing[a] = rec[a + 3]
                        .parse()
                        .map_err(|_| bad(format!("spacing {:?} is not a number", &rec[a + 3])))?;
                }
                if d.iter().any(|&n| n == 0) {
                    return Err(IppError::Shape(format!("grid dims {d:?} must be positive")));
                }
                values = vec![None; d[0] * d[1] * d[2]];
                dims = Some(d);
            }
            Some(d) => {
                if rec.len() != 4 {
                    return Err(bad(format!("data row needs 4 fields, found {}", rec.len())));
                }
                let mut cell = [0usize; 3];
                for a in 0..3 {
                    cell[a] = rec[a]
                        .parse()
                        .map_err(|_| bad(format!("index {:?} is not an integer", &rec[a])))?;
                    if cell[a] >= d[a] {
                        return Err(bad(format!("index {cell:?} outside grid {d:?}")));
                    }
                }
                let v: f64 = rec[3]
                    .parse()
                    .map_err(|_| bad(format!("value {:?} is not a number", &rec[3])))?;
                let idx = cell[0] + d[0] * (cell[1] + d[1] * cell[2]);
                if values[idx].replace(v).is_some() {
                    return Err(IppError::Shape(format!("duplicate row for cell {cell:?} (line {line})")));
                }
                rows += 1;
            }
        }
    }
    let d = dims.ok_or_else(|| IppError::Parse { line: 1, msg: "missing header line".into() })?;
    if rows != values.len() {
        return Err(IppError::Shape(format!(
            "expected {} data rows for a {}x{}x{} grid, found {rows}",
            values.len(),
            d[0],
            d[1],
            d[2]
        )));
    }
    WorldField::new(d, spacing, values.into_iter().map(|v| v.unwrap_or(0.0)).collect())
}

/// Ranges for the Gaussian-blob field generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobSpec {
    pub count_min: usize,
    pub count_max: usize,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    /// Blob standard deviation as a fraction of the longest axis.
    pub width_min_frac: f64,
    pub width_max_frac: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            count_min: 2,
            count_max: 5,
            amplitude_min: 0.5,
            amplitude_max: 2.0,
            width_min_frac: 0.08,
            width_max_frac: 0.2,
        }
    }
}

/// Sum of axis-aligned Gaussian blobs centered on grid nodes.
pub fn make_synthetic_field(
    seed: u64,
    spec: &BlobSpec,
    dims: [usize; 3],
    spacing: [f64; 3],
) -> Result<WorldField> {
    if spec.count_min > spec.count_max
        || spec.amplitude_min > spec.amplitude_max
        || spec.width_min_frac <= 0.0
        || spec.width_min_frac > spec.width_max_frac
    {
        return Err(IppError::Config(format!("invalid blob spec {spec:?}")));
    }
    let mut field = WorldField::new(dims, spacing, vec![0.0; dims[0] * dims[1] * dims[2]])?;
    let extent = field.extent();
    let mut rng = crate::rng::stream(seed, 0x5EED_F1E1D);
    let count = rng.random_range(spec.count_min..=spec.count_max);
    for _ in 0..count {
        let center_cell = [0, 1, 2].map(|a| rng.random_range(0..dims[a]));
        let center = field.position(center_cell);
        let amp = rng.random_range(spec.amplitude_min..=spec.amplitude_max);
        let width: [f64; 3] =
            [0, 1, 2].map(|_| extent * rng.random_range(spec.width_min_frac..=spec.width_max_frac));
        for iz in 0..dims[2] {
            for iy in 0..dims[1] {
                for ix in 0..dims[0] {
                    let p = field.position([ix, iy, iz]);
                    let e: f64 = (0..3)
                        .map(|a| {
                            let d = (p[a] - center[a]) / width[a];
                            0.5 * d * d
                        })
                        .sum();
                    let i = field.lattice.index([ix, iy, iz]);
                    field.values[i] += amp * (-e).exp();
                }
            }
        }
    }
    Ok(field)
}

/// Lattice move. Up/down change z, left/right change x, forward/back change y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Forward,
    Back,
}

impl Action {
    /// Canonical order used for tie-breaking.
    pub const ALL: [Action; 6] =
        [Action::Up, Action::Down, Action::Left, Action::Right, Action::Forward, Action::Back];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    pub fn delta(self) -> [i64; 3] {
        match self {
            Action::Up => [0, 0, 1],
            Action::Down => [0, 0, -1],
            Action::Left => [-1, 0, 0],
            Action::Right => [1, 0, 0],
            Action::Forward => [0, 1, 0],
            Action::Back => [0, -1, 0],
        }
    }

    pub fn inverse(self) -> Action {
        match self {
            Action::Up => Action::Down,
            Action::Down => Action::Up,
            Action::Left => Action::Right,
            Action::Right => Action::Left,
            Action::Forward => Action::Back,
            Action::Back => Action::Forward,
        }
    }

    pub fn is_vertical(self) -> bool {
        matches!(self, Action::Up | Action::Down)
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
            Action::Forward => "forward",
            Action::Back => "back",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RobotPose {
    pub cell: [usize; 3],
}

impl RobotPose {
    pub fn new(cell: [usize; 3]) -> Self {
        RobotPose { cell }
    }
}

fn step_cell(cell: [usize; 3], action: Action) -> Option<[usize; 3]> {
    let d = action.delta();
    let mut out = cell;
    for a in 0..3 {
        out[a] = (cell[a] as i64 + d[a]).try_into().ok()?;
    }
    Some(out)
}

/// Moves one lattice cell. Vertical moves are not part of the planar action set.
pub fn apply_action(pose: RobotPose, action: Action, lattice: &Lattice) -> Result<RobotPose> {
    let illegal = || IppError::IllegalMove { cell: pose.cell, action };
    if lattice.is_planar() && action.is_vertical() {
        return Err(illegal());
    }
    match step_cell(pose.cell, action) {
        Some(c) if lattice.contains_cell(c) => Ok(RobotPose::new(c)),
        _ => Err(illegal()),
    }
}

/// Bit `i` set when `Action::ALL[i]` is legal from `pose`.
pub fn legal_mask(pose: RobotPose, lattice: &Lattice) -> u8 {
    let mut mask = 0u8;
    for (i, a) in Action::ALL.iter().enumerate() {
        if apply_action(pose, *a, lattice).is_ok() {
            mask |= 1 << i;
        }
    }
    mask
}

pub fn legal_actions(pose: RobotPose, lattice: &Lattice) -> Vec<Action> {
    let m = legal_mask(pose, lattice);
    Action::ALL.iter().copied().filter(|a| m & (1 << a.index()) != 0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensingConfig {
    pub samples_per_edge: usize,
}

impl Default for SensingConfig {
    fn default() -> Self {
        SensingConfig { samples_per_edge: 4 }
    }
}

/// Points sensed while travelling from `from` to `to`: `k` equally spaced
/// points excluding the start and including the end, or the pose itself when
/// the robot stays put.
pub fn sense_path(cfg: &SensingConfig, from: RobotPose, to: RobotPose, lattice: &Lattice) -> Vec<Point> {
    let b = lattice.position(to.cell);
    if from == to {
        return vec![b];
    }
    let a = lattice.position(from.cell);
    let k = cfg.samples_per_edge.max(1);
    (1..=k)
        .map(|j| {
            let t = j as f64 / k as f64;
            [0, 1, 2].map(|i| if j == k { b[i] } else { a[i] + t * (b[i] - a[i]) })
        })
        .collect()
}

/// Measures the field at each point, optionally with seeded Gaussian noise.
pub fn observe<R: Rng>(
    field: &WorldField,
    xs: &[Point],
    noise_std: f64,
    rng: &mut R,
) -> Result<Vec<(Point, f64)>> {
    let noise = if noise_std > 0.0 {
        Some(Normal::new(0.0, noise_std).map_err(|e| IppError::Config(e.to_string()))?)
    } else {
        None
    };
    xs.iter()
        .map(|x| {
            let v = field.value_at(x)?;
            let eps = noise.as_ref().map(|n| n.sample(rng)).unwrap_or(0.0);
            Ok((*x, v + eps))
        })
        .collect()
}

/// Per-episode knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub budget_steps: usize,
    pub seed_samples: usize,
    pub objective: ObjectiveKind,
    pub rng_seed: u64,
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget_steps == 0 {
            return Err(IppError::Config("budget_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Named world geometries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPreset {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl WorldPreset {
    /// 16 x 16 x 8 cube with unit spacing.
    pub const DESK: WorldPreset = WorldPreset { dims: [16, 16, 8], spacing: [1.0, 1.0, 1.0] };
    /// 15 x 15 planar grid at 0.5 m.
    pub const FIELD: WorldPreset = WorldPreset { dims: [15, 15, 1], spacing: [0.5, 0.5, 0.5] };

    pub fn by_name(name: &str) -> Option<WorldPreset> {
        match name {
            "desk" => Some(Self::DESK),
            "field" => Some(Self::FIELD),
            _ => None,
        }
    }
}
