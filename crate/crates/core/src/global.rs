//! Per-step world-frame pose estimation of all robots from filtered ranges
//! and each robot's odometry relative to its own initial pose.
//!
//! The world frame is robot 0's local frame. The cost is
//! `λ_r Σ_i Σ_j |r_ij² − ‖x_i − x_j‖²| + λ_v Σ_i ‖T0_i⁻¹ T_i − L_i‖²_F`
//! with the range pairs counted in both orders and the Frobenius norm taken
//! over the 3×4 `[R | t]` block.

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{skew, RigidPose, Timestamp, Trajectory, Vec3};
use crate::range::RangeSet;
use crate::structure::StructureEstimate;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub lambda_r: f64,
    pub lambda_v: f64,
    pub max_iterations: usize,
    /// Stop when the parameter step norm drops below this.
    pub tolerance: f64,
    pub irls_delta: f64,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            lambda_r: 1.0,
            lambda_v: 1.0,
            max_iterations: 100,
            tolerance: 1e-10,
            irls_delta: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPoseMode {
    #[default]
    Known,
    Unknown,
}

/// World-frame state of the group.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub initials: Vec<RigidPose>,
    pub current: Vec<RigidPose>,
    /// Per-robot trajectory, including corrections applied at anchor epochs.
    pub trajectories: Vec<Trajectory>,
}

impl WorldState {
    pub fn new(initials: Vec<RigidPose>, dt: f64) -> Self {
        let n = initials.len();
        Self {
            current: initials.clone(),
            initials,
            trajectories: vec![Trajectory::new(dt); n],
        }
    }

    pub fn n(&self) -> usize {
        self.initials.len()
    }

    /// Sets the current poses and appends them to the trajectories.
    pub fn record(&mut self, step: u64, poses: Vec<RigidPose>) -> Result<()> {
        if poses.len() != self.n() {
            return Err(Error::InvalidInput(
                "pose count does not match robot count".into(),
            ));
        }
        for (traj, pose) in self.trajectories.iter_mut().zip(&poses) {
            traj.push(Timestamp::new(step), *pose)?;
        }
        self.current = poses;
        Ok(())
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.current.iter().map(|p| p.translation).collect()
    }
}

/// `T0 · L` for every robot: the pose implied by odometry alone.
pub fn propagate(initials: &[RigidPose], vio: &[RigidPose]) -> Vec<RigidPose> {
    initials.iter().zip(vio).map(|(t0, l)| t0 * l).collect()
}

fn check_inputs(
    poses: &[RigidPose],
    ranges: &RangeSet,
    vio: &[RigidPose],
    initials: &[RigidPose],
) -> Result<()> {
    let n = poses.len();
    if vio.len() != n || initials.len() != n || ranges.n() != n {
        return Err(Error::InvalidInput(format!(
            "inconsistent robot counts: poses {n}, vio {}, initials {}, ranges {}",
            vio.len(),
            initials.len(),
            ranges.n()
        )));
    }
    Ok(())
}

fn range_term(poses: &[RigidPose], ranges: &RangeSet) -> f64 {
    ranges
        .valid_pairs()
        .map(|(i, j, r)| {
            let d2 = (poses[i].translation - poses[j].translation).norm_squared();
            2.0 * (r * r - d2).abs()
        })
        .sum()
}

fn vio_term(poses: &[RigidPose], vio: &[RigidPose], initials: &[RigidPose]) -> f64 {
    poses
        .iter()
        .zip(vio)
        .zip(initials)
        .map(|((t, l), t0)| vio_residual(t, l, t0).norm_squared())
        .sum()
}

/// The 12 entries of `T0⁻¹ T − L`, rotation column-major then translation.
fn vio_residual(t: &RigidPose, l: &RigidPose, t0: &RigidPose) -> DVector<f64> {
    let rel = t0.inverse() * *t;
    let dr = rel.rotation - l.rotation;
    let dt = rel.translation - l.translation;
    DVector::from_iterator(12, dr.iter().copied().chain(dt.iter().copied()))
}

pub fn global_cost(
    poses: &[RigidPose],
    ranges: &RangeSet,
    vio: &[RigidPose],
    initials: &[RigidPose],
    cfg: &GlobalConfig,
) -> Result<f64> {
    check_inputs(poses, ranges, vio, initials)?;
    Ok(cfg.lambda_r * range_term(poses, ranges) + cfg.lambda_v * vio_term(poses, vio, initials))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepSolution {
    pub poses: Vec<RigidPose>,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
}

fn retract_all(poses: &[RigidPose], x: &DVector<f64>) -> Vec<RigidPose> {
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let b = 6 * i;
            let rot = Vec3::new(x[b], x[b + 1], x[b + 2]);
            let trans = Vec3::new(x[b + 3], x[b + 4], x[b + 5]);
            // Translation perturbation is expressed in the body frame.
            p.retract(&rot, &(p.rotation * trans))
        })
        .collect()
}

/// Damped Gauss–Newton from `warm`, with IRLS on the absolute-value range
/// term. A step is taken only if it does not raise the true cost, so the
/// result never costs more than the warm start.
pub fn optimize_step(
    warm: &[RigidPose],
    ranges: &RangeSet,
    vio: &[RigidPose],
    initials: &[RigidPose],
    cfg: &GlobalConfig,
) -> Result<StepSolution> {
    check_inputs(warm, ranges, vio, initials)?;
    let n = warm.len();
    let initial_cost = global_cost(warm, ranges, vio, initials, cfg)?;
    if !initial_cost.is_finite() {
        return Err(Error::OptimizerDiverged);
    }

    // No usable range: the odometry term alone is minimized at T0·L.
    if ranges.num_valid_pairs() == 0 || cfg.lambda_r == 0.0 {
        let poses = propagate(initials, vio);
        let cost = global_cost(&poses, ranges, vio, initials, cfg)?;
        return Ok(StepSolution {
            poses,
            cost,
            initial_cost,
            iterations: 0,
        });
    }

    let pairs: Vec<(usize, usize, f64)> = ranges.valid_pairs().collect();
    let dim = 6 * n;
    let mut poses = warm.to_vec();
    let mut current = initial_cost;
    let mut lambda = 1e-6;
    let mut iterations = 0;

    while iterations < cfg.max_iterations && current > 0.0 {
        iterations += 1;
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let mut g = DVector::<f64>::zeros(dim);

        for &(i, j, r) in &pairs {
            let diff = poses[i].translation - poses[j].translation;
            let e = r * r - diff.norm_squared();
            // Both orders of the pair; |e| ≈ e² / (|e| + δ).
            let w = 2.0 * cfg.lambda_r / (e.abs() + cfg.irls_delta);
            let ji = -2.0 * poses[i].rotation.transpose() * diff;
            let jj = 2.0 * poses[j].rotation.transpose() * diff;
            let blocks = [(6 * i + 3, ji), (6 * j + 3, jj)];
            for &(a, ja) in &blocks {
                for p in 0..3 {
                    g[a + p] += w * ja[p] * e;
                    for &(b, jb) in &blocks {
                        for q in 0..3 {
                            h[(a + p, b + q)] += w * ja[p] * jb[q];
                        }
                    }
                }
            }
        }

        for i in 0..n {
            let res = vio_residual(&poses[i], &vio[i], &initials[i]);
            let a: Matrix3<f64> = initials[i].rotation.transpose() * poses[i].rotation;
            let mut jac = DMatrix::<f64>::zeros(12, 6);
            for k in 0..3 {
                let d = a * skew(&Vec3::ith(k, 1.0));
                for (row, v) in d.iter().enumerate() {
                    jac[(row, k)] = *v;
                }
            }
            for r in 0..3 {
                for c in 0..3 {
                    jac[(9 + r, 3 + c)] = a[(r, c)];
                }
            }
            let jt = jac.transpose();
            let hb = cfg.lambda_v * &jt * &jac;
            let gb = cfg.lambda_v * &jt * res;
            let b = 6 * i;
            for p in 0..6 {
                g[b + p] += gb[p];
                for q in 0..6 {
                    h[(b + p, b + q)] += hb[(p, q)];
                }
            }
        }

        let mut accepted = None;
        for _ in 0..12 {
            let mut damped = h.clone();
            for k in 0..dim {
                damped[(k, k)] += lambda * h[(k, k)].max(1e-9);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            if !step.iter().all(|v| v.is_finite()) {
                return Err(Error::OptimizerDiverged);
            }
            let candidate = retract_all(&poses, &step);
            let value = global_cost(&candidate, ranges, vio, initials, cfg)?;
            if !value.is_finite() {
                return Err(Error::OptimizerDiverged);
            }
            if value <= current {
                accepted = Some((candidate, value, step.norm()));
                lambda = (lambda / 3.0).max(1e-12);
                break;
            }
            lambda *= 4.0;
        }
        let Some((candidate, value, step_norm)) = accepted else {
            break;
        };
        poses = candidate;
        current = value;
        if step_norm < cfg.tolerance {
            break;
        }
    }

    Ok(StepSolution {
        poses: poses.iter().map(RigidPose::renormalized).collect(),
        cost: current,
        initial_cost,
        iterations,
    })
}

/// Initial world poses from ground truth, re-expressed in robot 0's frame.
pub fn initials_from_ground_truth(gt_initial: &[RigidPose]) -> Result<Vec<RigidPose>> {
    let first = gt_initial.first().ok_or(Error::InitializationFailed)?;
    let inv = first.inverse();
    Ok(gt_initial.iter().map(|p| &inv * p).collect())
}

/// Initial world poses from a range-only structure.
///
/// `local` holds each robot's odometry position at the structure's step
/// (all zeros when the structure comes from the start). Rotations are
/// identity, i.e. every robot is assumed to start with the same heading as
/// robot 0; positions are shifted so robot 0 starts at the origin.
pub fn initials_from_structure(positions: &[Vec3], local: &[Vec3]) -> Result<Vec<RigidPose>> {
    if positions.is_empty() || positions.len() != local.len() {
        return Err(Error::InitializationFailed);
    }
    let origin = positions[0] - local[0];
    Ok(positions
        .iter()
        .zip(local)
        .map(|(p, l)| RigidPose::from_translation(p - l - origin))
        .collect())
}

/// Dispatches on the initial-pose mode.
pub fn initialize_world(
    mode: InitialPoseMode,
    structure: Option<&StructureEstimate>,
    local: &[Vec3],
    gt_initial: Option<&[RigidPose]>,
) -> Result<Vec<RigidPose>> {
    match mode {
        InitialPoseMode::Known => {
            initials_from_ground_truth(gt_initial.ok_or(Error::InitializationFailed)?)
        }
        InitialPoseMode::Unknown => {
            let s = structure.ok_or(Error::InitializationFailed)?;
            initials_from_structure(&s.positions, local)
        }
    }
}
