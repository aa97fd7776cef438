//! Rigid poses, timestamps and trajectories shared by the whole pipeline.
//!
//! Rotations are plain 3×3 matrices. The odometry residual of the global
//! estimator is a Frobenius norm over matrix entries, so keeping matrices
//! avoids converting back and forth. Quaternions only appear at the CSV
//! boundary.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Mul;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance used when checking rotation orthonormality.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a pose, rejecting matrices that are not proper rotations.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
        };
        if !pose.is_valid() {
            return Err(Error::InvalidInput(
                "rotation is not orthonormal with det +1".into(),
            ));
        }
        Ok(pose)
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        Self {
            rotation: rotation_from_vector(axis.normalize() * angle),
            translation,
        }
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    /// Unit quaternion of the rotation, scalar part kept non-negative.
    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        let q =
            UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation));
        if q.w < 0.0 {
            UnitQuaternion::new_unchecked(-q.into_inner())
        } else {
            q
        }
    }

    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.rotation.transpose();
        RigidPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Checks RᵀR = I and det R = +1 entrywise within [`ROTATION_TOL`], and a finite translation.
    pub fn is_valid(&self) -> bool {
        let r = &self.rotation;
        if !r.iter().all(|v| v.is_finite()) || !self.translation.iter().all(|v| v.is_finite()) {
            return false;
        }
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        ortho <= ROTATION_TOL && (r.determinant() - 1.0).abs() <= ROTATION_TOL
    }

    /// Projects the rotation back onto SO(3). Long composition chains
    /// accumulate rounding error; call this periodically.
    pub fn renormalized(&self) -> RigidPose {
        RigidPose {
            rotation: project_to_rotation(&self.rotation),
            translation: self.translation,
        }
    }

    /// Right-perturbation update `R·exp(δθ)`, `t + δt`.
    pub fn retract(&self, delta_rot: &Vec3, delta_trans: &Vec3) -> RigidPose {
        RigidPose {
            rotation: self.rotation * rotation_from_vector(*delta_rot),
            translation: self.translation + delta_trans,
        }
    }
}

impl Mul for RigidPose {
    type Output = RigidPose;
    fn mul(self, rhs: RigidPose) -> RigidPose {
        self.compose(&rhs)
    }
}

impl Mul<&RigidPose> for &RigidPose {
    type Output = RigidPose;
    fn mul(self, rhs: &RigidPose) -> RigidPose {
        self.compose(rhs)
    }
}

/// Frobenius norm of the difference of the 3×4 `[R|t]` blocks.
pub fn frobenius_pose_distance(a: &RigidPose, b: &RigidPose) -> f64 {
    frobenius_pose_distance_sq(a, b).sqrt()
}

pub fn frobenius_pose_distance_sq(a: &RigidPose, b: &RigidPose) -> f64 {
    (a.rotation - b.rotation).norm_squared() + (a.translation - b.translation).norm_squared()
}

/// Rodrigues formula for the rotation vector `w` (axis · angle).
pub fn rotation_from_vector(w: Vec3) -> Matrix3<f64> {
    Rotation3::new(w).into_inner()
}

pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Nearest proper rotation in the Frobenius sense (SVD polar factor).
pub fn project_to_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        r = u2 * v_t;
    }
    r
}

/// Discrete time on the pipeline grid. The step count is canonical; seconds are derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp {
    pub step: u64,
}

impl Timestamp {
    pub fn new(step: u64) -> Self {
        Self { step }
    }

    pub fn seconds(&self, dt: f64) -> f64 {
        self.step as f64 * dt
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}", self.step)
    }
}

/// Time-ordered sequence of poses on a fixed step grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dt: f64,
    steps: Vec<u64>,
    poses: Vec<RigidPose>,
}

impl Trajectory {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            steps: Vec::new(),
            poses: Vec::new(),
        }
    }

    pub fn with_capacity(dt: f64, n: usize) -> Self {
        Self {
            dt,
            steps: Vec::with_capacity(n),
            poses: Vec::with_capacity(n),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn push(&mut self, ts: Timestamp, pose: RigidPose) -> Result<()> {
        if let Some(&last) = self.steps.last() {
            if ts.step <= last {
                return Err(Error::InvalidInput(format!(
                    "trajectory timestamps must increase ({} after {})",
                    ts.step, last
                )));
            }
        }
        self.steps.push(ts.step);
        self.poses.push(pose);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn poses(&self) -> &[RigidPose] {
        &self.poses
    }

    pub fn poses_mut(&mut self) -> &mut [RigidPose] {
        &mut self.poses
    }

    pub fn first(&self) -> Option<&RigidPose> {
        self.poses.first()
    }

    pub fn last(&self) -> Option<&RigidPose> {
        self.poses.last()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Timestamp, &RigidPose)> {
        self.steps
            .iter()
            .zip(self.poses.iter())
            .map(|(&s, p)| (Timestamp::new(s), p))
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.poses.iter().map(|p| p.translation)
    }

    pub fn same_grid(&self, other: &Trajectory) -> bool {
        self.steps == other.steps
    }

    /// Writes `step,t,x,y,z,qw,qx,qy,qz` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,t,x,y,z,qw,qx,qy,qz")?;
        for (ts, p) in self.iter() {
            let q = p.quaternion();
            let t = p.translation;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                ts.step,
                ts.seconds(self.dt),
                t.x,
                t.y,
                t.z,
                q.w,
                q.i,
                q.j,
                q.k
            )?;
        }
        Ok(())
    }

    /// Reads the CSV produced by [`Trajectory::write_csv`]. `dt` is recovered
    /// from the first row with a non-zero step.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Trajectory> {
        let mut steps = Vec::new();
        let mut poses = Vec::new();
        let mut dt = None;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with("step") || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 9 {
                return Err(Error::Parse(format!(
                    "line {}: expected 9 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let step: u64 = fields[0]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: step: {e}", lineno + 1)))?;
            let nums = fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if dt.is_none() && step > 0 {
                dt = Some(nums[0] / step as f64);
            }
            let q = nalgebra::Quaternion::new(nums[4], nums[5], nums[6], nums[7]);
            if q.norm() < 1e-12 {
                return Err(Error::Parse(format!(
                    "line {}: zero quaternion",
                    lineno + 1
                )));
            }
            steps.push(step);
            poses.push(RigidPose::from_quaternion(
                UnitQuaternion::from_quaternion(q),
                Vec3::new(nums[1], nums[2], nums[3]),
            ));
        }
        let mut traj = Trajectory::with_capacity(dt.unwrap_or(1.0), steps.len());
        for (s, p) in steps.into_iter().zip(poses) {
            traj.push(Timestamp::new(s), p)?;
        }
        Ok(traj)
    }
}
