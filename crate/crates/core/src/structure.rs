//! Range-only relative structure of the robot group.
//!
//! Positions are solved in a gauge-fixed frame A: robot 0 at the origin,
//! robot 1 on the +x axis and robot 2 in the xy-plane with y ≥ 0. Only the
//! remaining `3N − 6` coordinates are optimized, so the pinned ones stay
//! exactly zero. A distance matrix fixes positions up to reflection; the
//! estimate therefore carries its mirror twin (z negated) and the choice
//! between them is left to the alignment step.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::range::RangeSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructureConfig {
    /// IRLS regularizer in the weights `1 / (|r² − d²| + δ)`.
    pub irls_delta: f64,
    pub max_iterations: usize,
    /// Stop once the residual changes by less than this between iterations.
    pub tolerance: f64,
    /// Meters of slack allowed in the triangle-inequality precheck.
    pub triangle_slack: f64,
    /// Minimum second singular value (m) of the centered positions.
    pub min_spread: f64,
    /// The solve is declared failed when the final residual exceeds this
    /// multiple of the initial one.
    pub divergence_factor: f64,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            irls_delta: 1e-6,
            max_iterations: 100,
            tolerance: 1e-10,
            triangle_slack: 1.0,
            min_spread: 0.05,
            divergence_factor: 10.0,
        }
    }
}

/// Default acceptance threshold ζ: 0.1 m² per ordered robot pair.
pub fn default_zeta(n: usize) -> f64 {
    0.1 * (n * n.saturating_sub(1)) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureEstimate {
    pub step: u64,
    pub positions: Vec<Vec3>,
    pub mirror_positions: Vec<Vec3>,
    /// Sum over ordered pairs of `|r² − d²|`.
    pub residual: f64,
    /// Third singular value below `min_spread`: the twins nearly coincide.
    pub planar: bool,
}

impl StructureEstimate {
    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        (self.positions[i] - self.positions[j]).norm()
    }

    /// Dense row-major matrix of pairwise distances.
    pub fn distance_matrix(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.distance(i, j);
            }
        }
        out
    }
}

/// L1 residual over ordered pairs: every `i ≠ j` contributes
/// `|r_ij² − ‖x_i − x_j‖²|`, so each unordered pair counts twice.
pub fn structure_residual(positions: &[Vec3], ranges: &RangeSet) -> Result<f64> {
    let n = positions.len();
    if ranges.n() != n {
        return Err(Error::InvalidInput(format!(
            "{} positions for a range set over {} robots",
            n,
            ranges.n()
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = ranges.get(i, j).ok_or(Error::IncompleteRangeSet)?;
            total += 2.0 * (r * r - (positions[i] - positions[j]).norm_squared()).abs();
        }
    }
    Ok(total)
}

/// `true` iff the residual is strictly below `zeta`.
pub fn accept_structure(est: &StructureEstimate, zeta: f64) -> bool {
    est.residual < zeta
}

/// Negates z of every position.
pub fn mirror(positions: &[Vec3]) -> Vec<Vec3> {
    positions
        .iter()
        .map(|p| Vec3::new(p.x, p.y, -p.z))
        .collect()
}

/// Moves positions into frame A. Fails when the first three robots are
/// (numerically) collinear, since the frame is then undefined.
pub fn gauge_normalize(positions: &[Vec3]) -> Result<Vec<Vec3>> {
    if positions.len() < 3 {
        return Err(Error::TooFewRobots(positions.len()));
    }
    let origin = positions[0];
    let q: Vec<Vec3> = positions.iter().map(|p| p - origin).collect();
    let scale = q.iter().map(|v| v.norm()).fold(1e-300, f64::max);
    let n1 = q[1].norm();
    if n1 <= 1e-12 * scale {
        return Err(Error::DegenerateConfiguration);
    }
    let e1 = q[1] / n1;
    let v = q[2] - e1 * e1.dot(&q[2]);
    let nv = v.norm();
    if nv <= 1e-12 * scale {
        return Err(Error::DegenerateConfiguration);
    }
    let e2 = v / nv;
    let e3 = e1.cross(&e2);
    let mut out: Vec<Vec3> = q
        .iter()
        .map(|p| Vec3::new(e1.dot(p), e2.dot(p), e3.dot(p)))
        .collect();
    out[0] = Vec3::zeros();
    out[1] = Vec3::new(n1, 0.0, 0.0);
    out[2].z = 0.0;
    out[2].y = nv;
    Ok(out)
}

/// Picks the twin whose first clearly off-plane robot has z > 0, so the
/// un-mirrored candidate is well defined.
fn canonical_handedness(positions: &mut [Vec3]) {
    let scale = positions
        .iter()
        .map(|p| p.norm())
        .fold(0.0, f64::max)
        .max(1.0);
    if let Some(p) = positions.iter().skip(3).find(|p| p.z.abs() > 1e-9 * scale) {
        if p.z < 0.0 {
            positions.iter_mut().for_each(|p| p.z = -p.z);
        }
    }
}

/// Singular values (descending) of the centered n×3 position matrix.
pub fn spread(positions: &[Vec3]) -> [f64; 3] {
    let n = positions.len().max(1);
    let c = positions.iter().fold(Vec3::zeros(), |a, p| a + p) / n as f64;
    let m = DMatrix::from_fn(positions.len(), 3, |r, k| positions[r][k] - c[k]);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.resize(3, 0.0);
    s.sort_by(|a, b| b.total_cmp(a));
    [s[0], s[1], s[2]]
}

/// Classical MDS: eigen-decomposition of the double-centered squared
/// distance matrix, keeping the three leading components.
pub fn classical_mds(ranges: &RangeSet) -> Result<Vec<Vec3>> {
    let n = ranges.n();
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = ranges.get(i, j).ok_or(Error::IncompleteRangeSet)?;
                d2[(i, j)] = r * r;
            }
        }
    }
    let row_mean: Vec<f64> = (0..n).map(|i| d2.row(i).sum() / n as f64).collect();
    let all_mean = row_mean.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (d2[(i, j)] - row_mean[i] - row_mean[j] + all_mean)
    });
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out = vec![Vec3::zeros(); n];
    for (axis, &k) in order.iter().take(3).enumerate() {
        let s = eig.eigenvalues[k].max(0.0).sqrt();
        for (i, p) in out.iter_mut().enumerate() {
            p[axis] = eig.eigenvectors[(i, k)] * s;
        }
    }
    Ok(out)
}

fn check_triangles(ranges: &RangeSet, slack: f64) -> Result<()> {
    let n = ranges.n();
    for i in 0..n {
        for j in (i + 1)..n {
            let rij = ranges.get(i, j).ok_or(Error::IncompleteRangeSet)?;
            for k in (0..n).filter(|&k| k != i && k != j) {
                let rik = ranges.get(i, k).ok_or(Error::IncompleteRangeSet)?;
                let rkj = ranges.get(k, j).ok_or(Error::IncompleteRangeSet)?;
                if rij > rik + rkj + slack {
                    return Err(Error::TriangleViolation { i, j, k, rij });
                }
            }
        }
    }
    Ok(())
}

/// Maps between gauge-fixed positions and the free parameter vector.
struct Gauge {
    n: usize,
}

impl Gauge {
    fn dim(&self) -> usize {
        3 * self.n - 6
    }

    /// `(robot, axis)` for each free parameter.
    fn slots(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n;
        [(1, 0), (2, 0), (2, 1)]
            .into_iter()
            .chain((3..n).flat_map(|r| (0..3).map(move |a| (r, a))))
    }

    fn pack(&self, positions: &[Vec3]) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.slots().map(|(r, a)| positions[r][a]))
    }

    fn unpack(&self, x: &DVector<f64>) -> Vec<Vec3> {
        let mut out = vec![Vec3::zeros(); self.n];
        for (k, (r, a)) in self.slots().enumerate() {
            out[r][a] = x[k];
        }
        out
    }

    /// Parameter index of `(robot, axis)`, if free.
    fn index(&self, robot: usize, axis: usize) -> Option<usize> {
        match (robot, axis) {
            (0, _) | (1, 1) | (1, 2) | (2, 2) => None,
            (1, 0) => Some(0),
            (2, a) => Some(1 + a),
            (r, a) => Some(3 + 3 * (r - 3) + a),
        }
    }
}

/// Minimizes the ordered-pair L1 residual over frame-A coordinates.
///
/// The absolute value is handled by iteratively reweighted least squares:
/// each outer iteration takes a damped Gauss–Newton step on
/// `Σ w_ij (r² − d²)²` with `w_ij = 1 / (|r² − d²| + δ)` from the previous
/// iterate. Steps that increase the true residual are rejected and the
/// damping is raised.
pub fn estimate_structure(
    ranges: &RangeSet,
    init: Option<&[Vec3]>,
    cfg: &StructureConfig,
) -> Result<StructureEstimate> {
    let n = ranges.n();
    if n < 4 {
        return Err(Error::TooFewRobots(n));
    }
    if !ranges.is_fully_valid() {
        return Err(Error::IncompleteRangeSet);
    }
    check_triangles(ranges, cfg.triangle_slack)?;

    let start = match init {
        Some(p) if p.len() == n => match gauge_normalize(p) {
            Ok(g) => g,
            Err(_) => gauge_normalize(&classical_mds(ranges)?)?,
        },
        Some(p) => {
            return Err(Error::InvalidInput(format!(
                "warm start has {} positions, expected {n}",
                p.len()
            )))
        }
        None => gauge_normalize(&classical_mds(ranges)?)?,
    };

    let gauge = Gauge { n };
    let pairs: Vec<(usize, usize, f64)> = ranges.valid_pairs().collect();
    let mut x = gauge.pack(&start);
    let initial = structure_residual(&start, ranges)?;
    let mut current = initial;
    let mut lambda = 1e-6;

    for _ in 0..cfg.max_iterations {
        if current == 0.0 {
            break;
        }
        let pos = gauge.unpack(&x);
        let m = gauge.dim();
        let mut h = DMatrix::<f64>::zeros(m, m);
        let mut g = DVector::<f64>::zeros(m);
        for &(i, j, r) in &pairs {
            let diff = pos[i] - pos[j];
            let e = r * r - diff.norm_squared();
            let w = 2.0 / (e.abs() + cfg.irls_delta);
            // de/dx_i = -2 diff, de/dx_j = +2 diff
            let mut jac: Vec<(usize, f64)> = Vec::with_capacity(6);
            for a in 0..3 {
                if let Some(k) = gauge.index(i, a) {
                    jac.push((k, -2.0 * diff[a]));
                }
                if let Some(k) = gauge.index(j, a) {
                    jac.push((k, 2.0 * diff[a]));
                }
            }
            for &(k1, v1) in &jac {
                g[k1] += w * v1 * e;
                for &(k2, v2) in &jac {
                    h[(k1, k2)] += w * v1 * v2;
                }
            }
        }

        let mut accepted = None;
        for _ in 0..12 {
            let mut damped = h.clone();
            for k in 0..m {
                damped[(k, k)] += lambda * h[(k, k)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let candidate = &x + &step;
            let value = structure_residual(&gauge.unpack(&candidate), ranges)?;
            if value.is_finite() && value <= current {
                accepted = Some((candidate, value));
                lambda = (lambda / 3.0).max(1e-12);
                break;
            }
            lambda *= 4.0;
        }
        let Some((candidate, value)) = accepted else {
            break;
        };
        x = candidate;
        let change = current - value;
        current = value;
        if change < cfg.tolerance {
            break;
        }
    }

    if !current.is_finite() || current > cfg.divergence_factor * initial.max(f64::MIN_POSITIVE) {
        return Err(Error::StructureFailed);
    }

    let mut positions = gauge.unpack(&x);
    canonical_handedness(&mut positions);
    let [_, s2, s3] = spread(&positions);
    if s2 < cfg.min_spread {
        return Err(Error::DegenerateConfiguration);
    }
    let residual = structure_residual(&positions, ranges)?;
    Ok(StructureEstimate {
        step: ranges.step,
        mirror_positions: mirror(&positions),
        positions,
        residual,
        planar: s3 < cfg.min_spread,
    })
}

/// Keeps the last accepted structure as the warm start for the next solve.
#[derive(Clone, Debug, Default)]
pub struct StructureEstimator {
    pub config: StructureConfig,
    last_accepted: Option<Vec<Vec3>>,
}

impl StructureEstimator {
    pub fn new(config: StructureConfig) -> Self {
        Self {
            config,
            last_accepted: None,
        }
    }

    pub fn estimate(&self, ranges: &RangeSet) -> Result<StructureEstimate> {
        let warm = self
            .last_accepted
            .as_deref()
            .filter(|p| p.len() == ranges.n());
        estimate_structure(ranges, warm, &self.config)
    }

    /// Records an estimate that passed the ζ gate.
    pub fn accept(&mut self, est: &StructureEstimate) {
        self.last_accepted = Some(est.positions.clone());
    }
}
