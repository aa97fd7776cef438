//! Adaptive per-robot weights for anchor alignment.
//!
//! Three cues are averaged over the epoch `(τ_{k−1}, τ_k]`:
//! * velocity: how much of the mean feature depth survives one step of motion,
//!   with forward motion penalized quadratically;
//! * rotation: how much of the field of view survives one step of yaw/pitch;
//! * consistency: how well odometry-derived inter-robot distances agree with
//!   the range-derived ones.
//!
//! Each cue is normalized by its maximum over the robots and the three are summed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RigidPose, Timestamp, Vec3};

/// Odometry output of one robot at one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdomSample {
    pub robot: usize,
    pub step: u64,
    pub local_pose: RigidPose,
    /// Body/camera frame, forward = +x (m/s).
    pub velocity: Vec3,
    /// |yaw rate| (rad/s).
    pub omega_h: f64,
    /// |pitch rate| (rad/s).
    pub omega_v: f64,
    /// Mean depth of tracked features (m), strictly positive.
    pub depth: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraFov {
    pub horizontal: f64,
    pub vertical: f64,
}

impl Default for CameraFov {
    /// Roughly a D435-class stereo camera: 87° × 58°.
    fn default() -> Self {
        Self {
            horizontal: 87f64.to_radians(),
            vertical: 58f64.to_radians(),
        }
    }
}

impl CameraFov {
    pub fn new(horizontal: f64, vertical: f64) -> Result<Self> {
        let fov = Self {
            horizontal,
            vertical,
        };
        fov.validate()?;
        Ok(fov)
    }

    pub fn validate(&self) -> Result<()> {
        let pi = std::f64::consts::PI;
        if !(self.vertical > 0.0 && self.vertical <= self.horizontal && self.horizontal < pi) {
            return Err(Error::InvalidInput(format!(
                "field of view must satisfy 0 < vertical <= horizontal < pi, got {} x {}",
                self.horizontal, self.vertical
            )));
        }
        Ok(())
    }
}

/// Number of pose nodes in an epoch, `(τ_k − τ_{k−1}) / Δt`, in exact step arithmetic.
pub fn epoch_length(tau_k: Timestamp, tau_prev: Timestamp) -> Result<usize> {
    if tau_k.step <= tau_prev.step {
        return Err(Error::InvalidEpoch);
    }
    Ok((tau_k.step - tau_prev.step) as usize)
}

/// Same as [`epoch_length`] for times given in seconds on a `dt` grid.
pub fn epoch_length_seconds(tau_k: f64, tau_prev: f64, dt: f64) -> Result<usize> {
    let to_step = |t: f64| {
        let s = (t / dt).round();
        if s < 0.0 || ((s * dt) - t).abs() > 1e-9 * dt.max(t.abs()) {
            Err(Error::InvalidInput(format!(
                "time {t} is not on the {dt} s grid"
            )))
        } else {
            Ok(Timestamp::new(s as u64))
        }
    };
    epoch_length(to_step(tau_k)?, to_step(tau_prev)?)
}

fn velocity_term(s: &OdomSample, dt: f64) -> Result<f64> {
    let l = s.depth;
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::InvalidDepth(l));
    }
    let v = s.velocity;
    let fwd = (l - v.x.max(0.0) * dt).max(0.0) / l;
    let lat = (l - v.y.abs() * dt).max(0.0) / l;
    let vert = (l - v.z.abs() * dt).max(0.0) / l;
    Ok(fwd * fwd + lat + vert)
}

/// Velocity weight in `[0, 3]`, averaged over the epoch's samples.
pub fn velocity_weight(samples: &[OdomSample], dt: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyEpoch);
    }
    let mut sum = 0.0;
    for s in samples {
        sum += velocity_term(s, dt)?;
    }
    Ok(sum / samples.len() as f64)
}

/// Rotation weight in `[0, 1]`, averaged over the epoch's samples.
pub fn rotation_weight(samples: &[OdomSample], fov: &CameraFov, dt: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyEpoch);
    }
    let sum: f64 = samples
        .iter()
        .map(|s| {
            let h = (fov.horizontal - s.omega_h.abs() * dt).max(0.0) / fov.horizontal;
            let v = (fov.vertical - s.omega_v.abs() * dt).max(0.0) / fov.vertical;
            h * v
        })
        .sum();
    Ok(sum / samples.len() as f64)
}

/// Global consistency weight of `robot`.
///
/// `world[h]` holds every robot's odometry-derived world position at the
/// h-th step of the epoch and `reference[h]` the row-major N×N reference
/// distances at that step (`NaN` marks an unavailable pair, which is
/// skipped). Only pairs that include `robot` contribute:
/// `(1/m) Σ_h Σ_{j≠robot} d̃ / (|d − d̃| + ε)`.
pub fn consistency_weight(
    world: &[Vec<Vec3>],
    reference: &[Vec<f64>],
    robot: usize,
    eps: f64,
) -> Result<f64> {
    if world.is_empty() {
        return Err(Error::EmptyEpoch);
    }
    if world.len() != reference.len() {
        return Err(Error::InvalidInput(
            "world positions and reference distances cover different steps".into(),
        ));
    }
    let mut total = 0.0;
    for (pos, dref) in world.iter().zip(reference) {
        let n = pos.len();
        if dref.len() != n * n || robot >= n {
            return Err(Error::InvalidInput(
                "reference distance table has wrong size".into(),
            ));
        }
        for j in (0..n).filter(|&j| j != robot) {
            let dt = dref[robot * n + j];
            if dt.is_nan() {
                continue;
            }
            let d = (pos[robot] - pos[j]).norm();
            total += dt / ((d - dt).abs() + eps);
        }
    }
    Ok(total / world.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightTriple {
    pub velocity: f64,
    pub rotation: f64,
    pub consistency: f64,
}

impl WeightTriple {
    pub fn sum(&self) -> f64 {
        self.velocity + self.rotation + self.consistency
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotWeights {
    pub raw: WeightTriple,
    pub normalized: WeightTriple,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub epoch: usize,
    pub robots: Vec<RobotWeights>,
}

impl WeightSet {
    pub fn totals(&self) -> Vec<f64> {
        self.robots.iter().map(|r| r.total).collect()
    }
}

/// Divides each weight type by its maximum over robots and sums the three.
/// A type whose values are all zero normalizes to all zeros.
pub fn normalize_and_total(epoch: usize, raw: &[WeightTriple]) -> WeightSet {
    let max_of = |f: fn(&WeightTriple) -> f64| raw.iter().map(f).fold(0.0, f64::max);
    let mv = max_of(|w| w.velocity);
    let ma = max_of(|w| w.rotation);
    let mr = max_of(|w| w.consistency);
    let norm = |v: f64, m: f64| if m > 0.0 { v / m } else { 0.0 };
    let robots = raw
        .iter()
        .map(|w| {
            let normalized = WeightTriple {
                velocity: norm(w.velocity, mv),
                rotation: norm(w.rotation, ma),
                consistency: norm(w.consistency, mr),
            };
            RobotWeights {
                raw: *w,
                total: normalized.rotation + normalized.velocity + normalized.consistency,
                normalized,
            }
        })
        .collect();
    WeightSet { epoch, robots }
}
