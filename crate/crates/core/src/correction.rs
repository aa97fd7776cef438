//! Anchor-based pose correction: per-axis scale error between consecutive
//! anchors, linear redistribution of the endpoint discrepancy across the
//! epoch, and scale feedback into later odometry increments.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Frame in which per-axis scale factors multiply odometry increments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackFrame {
    /// Rotate the increment into the world frame, scale, rotate back.
    #[default]
    World,
    /// Scale the local increment directly.
    Local,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionConfig {
    /// Axes whose estimated displacement over an epoch is below this (m)
    /// yield a factor of 1.
    pub eps_motion: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// Seconds between consecutive anchor sets.
    pub min_anchor_spacing: f64,
    pub feedback_frame: FeedbackFrame,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            eps_motion: 0.05,
            s_min: 0.5,
            s_max: 2.0,
            min_anchor_spacing: 1.0,
            feedback_frame: FeedbackFrame::World,
        }
    }
}

impl CorrectionConfig {
    fn clamp(&self, v: Vec3) -> Vec3 {
        v.map(|c| c.clamp(self.s_min, self.s_max))
    }
}

/// Cumulative per-axis scale factor of one robot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleState {
    pub factors: Vec3,
    pub last_epoch: Option<usize>,
}

impl Default for ScaleState {
    fn default() -> Self {
        Self {
            factors: Vec3::new(1.0, 1.0, 1.0),
            last_epoch: None,
        }
    }
}

/// Per-axis ratio `|Δ anchor| / |Δ estimate|` between two anchor epochs.
pub fn scale_error(
    prev_anchor: &Vec3,
    cur_anchor: &Vec3,
    prev_est: &Vec3,
    cur_est: &Vec3,
    cfg: &CorrectionConfig,
) -> Vec3 {
    let da = cur_anchor - prev_anchor;
    let de = cur_est - prev_est;
    let raw = Vec3::from_fn(|k, _| {
        if de[k].abs() < cfg.eps_motion {
            1.0
        } else {
            da[k].abs() / de[k].abs()
        }
    });
    cfg.clamp(raw)
}

/// Hadamard update `e_S ← e_S ⊙ factors`, clamped to `[s_min, s_max]`.
pub fn update_scale_state(
    state: &ScaleState,
    factors: &Vec3,
    cfg: &CorrectionConfig,
    epoch: usize,
) -> ScaleState {
    ScaleState {
        factors: cfg.clamp(state.factors.component_mul(factors)),
        last_epoch: Some(epoch),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionBatch {
    pub robot: usize,
    pub epoch: usize,
    pub before: Vec<Vec3>,
    pub after: Vec<Vec3>,
    pub discrepancy: Vec3,
}

/// Spreads `anchor − nodes[m]` linearly over `nodes[0..=m]`.
///
/// `nodes[0]` is the previous anchor (corrected in the last epoch) and is
/// left untouched; `nodes[m]` lands exactly on `anchor`.
pub fn correct_epoch(
    robot: usize,
    epoch: usize,
    nodes: &[Vec3],
    anchor: &Vec3,
) -> Result<CorrectionBatch> {
    if nodes.len() < 2 {
        return Err(Error::EmptyEpoch);
    }
    let m = nodes.len() - 1;
    let discrepancy = anchor - nodes[m];
    let mut after: Vec<Vec3> = nodes
        .iter()
        .enumerate()
        .map(|(n, x)| x + discrepancy * (n as f64 / m as f64))
        .collect();
    after[0] = nodes[0];
    after[m] = *anchor;
    Ok(CorrectionBatch {
        robot,
        epoch,
        before: nodes.to_vec(),
        after,
        discrepancy,
    })
}

/// Component-wise product of an odometry translation increment with `e_S`.
pub fn apply_scale_feedback(delta: &Vec3, state: &ScaleState) -> Vec3 {
    delta.component_mul(&state.factors)
}

/// Scales a body-frame increment in the configured frame. `world_rotation`
/// is the robot's current world orientation.
pub fn scale_increment(
    delta_local: &Vec3,
    world_rotation: &Matrix3<f64>,
    state: &ScaleState,
    frame: FeedbackFrame,
) -> Vec3 {
    match frame {
        FeedbackFrame::Local => apply_scale_feedback(delta_local, state),
        FeedbackFrame::World => {
            let world = world_rotation * delta_local;
            world_rotation.transpose() * apply_scale_feedback(&world, state)
        }
    }
}
