//! The full per-step localization loop, independent of where its inputs
//! come from (simulation or logs).

use crate::alignment::{select_mirror, AnchorNodeSet};
use crate::correction::{
    correct_epoch, scale_error, scale_increment, update_scale_state, ScaleState,
};
use crate::error::{Error, Result};
use crate::geometry::{RigidPose, Timestamp, Trajectory, Vec3};
use crate::global::{initialize_world, optimize_step, InitialPoseMode, WorldState};
use crate::range::{filter_step, mix_seed, RangeLog, RangeSet};
use crate::structure::{accept_structure, StructureEstimate, StructureEstimator};
use crate::weights::{
    consistency_weight, normalize_and_total, rotation_weight, velocity_weight, OdomSample,
    WeightSet, WeightTriple,
};

use super::config::{AnchorWorldSource, ConsistencyReference, PipelineConfig};

#[derive(Clone, Debug)]
pub struct PipelineInputs {
    pub dt: f64,
    /// Raw odometry per robot, starting at identity on steps `0..=K`.
    pub vio: Vec<Trajectory>,
    pub odom: Vec<Vec<OdomSample>>,
    pub ranges: RangeLog,
    pub mode: InitialPoseMode,
    /// Required for [`InitialPoseMode::Known`].
    pub gt_initial: Option<Vec<RigidPose>>,
    pub seed: u64,
}

/// Everything produced at one anchor epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorEpoch {
    pub anchors: AnchorNodeSet,
    pub weights: WeightSet,
    pub structure: StructureEstimate,
    /// Per-robot factors observed this epoch (ones at the first epoch).
    pub factors: Vec<Vec3>,
    /// Per-robot cumulative scale after the update.
    pub scales: Vec<ScaleState>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub initials: Vec<RigidPose>,
    /// Step of the structure used for unknown-initial start-up.
    pub init_step: Option<u64>,
    /// Per-step optimizer output, never revised.
    pub global: Vec<Trajectory>,
    /// Corrected trajectories (optimizer output revised at anchor epochs).
    pub world: WorldState,
    /// Scale-corrected odometry in the world frame, restarted at each anchor.
    pub propagated: Vec<Trajectory>,
    pub filtered: Vec<RangeSet>,
    pub epochs: Vec<AnchorEpoch>,
    /// Steps where the optimizer failed and odometry was used instead.
    pub flagged_steps: Vec<u64>,
}

impl PipelineOutput {
    pub fn corrected(&self) -> &[Trajectory] {
        &self.world.trajectories
    }
}

fn check_inputs(inp: &PipelineInputs) -> Result<(usize, usize)> {
    let n = inp.vio.len();
    if n < 4 {
        return Err(Error::TooFewRobots(n));
    }
    if inp.odom.len() != n || inp.ranges.n > n {
        return Err(Error::InvalidInput(
            "odometry and range logs disagree on robot count".into(),
        ));
    }
    let len = inp.vio[0].len();
    if len == 0 {
        return Err(Error::EmptyTrajectory);
    }
    for (i, (v, o)) in inp.vio.iter().zip(&inp.odom).enumerate() {
        if !v.same_grid(&inp.vio[0]) || o.len() != len {
            return Err(Error::GridMismatch);
        }
        if v.steps().iter().enumerate().any(|(k, &s)| s != k as u64) {
            return Err(Error::InvalidInput(format!(
                "robot {}: odometry steps must be 0, 1, 2, ...",
                i + 1
            )));
        }
    }
    Ok((n, len))
}

/// Finds the first accepted structure within the start-up window and turns
/// it into initial poses.
fn unknown_initials(
    inp: &PipelineInputs,
    cfg: &PipelineConfig,
    filter: &crate::range::RangeFilterConfig,
    estimator: &StructureEstimator,
    n: usize,
    len: usize,
) -> Result<(Vec<RigidPose>, u64)> {
    let last = ((cfg.startup_window / inp.dt).floor() as usize).min(len - 1);
    for s in 0..=last as u64 {
        let rs = filter_step(&inp.ranges, s, filter);
        if rs.n() != n || !rs.is_fully_valid() {
            continue;
        }
        let Ok(est) = estimator.estimate(&rs) else {
            continue;
        };
        if accept_structure(&est, cfg.zeta(n)) {
            let local: Vec<Vec3> = inp
                .vio
                .iter()
                .map(|v| v.poses()[s as usize].translation)
                .collect();
            let init = initialize_world(InitialPoseMode::Unknown, Some(&est), &local, None)?;
            return Ok((init, s));
        }
    }
    Err(Error::InitializationFailed)
}

pub fn run(inp: &PipelineInputs, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let (n, len) = check_inputs(inp)?;
    let dt = inp.dt;
    let mut filter = cfg.filter;
    filter.ransac.seed = mix_seed(filter.ransac.seed, &[inp.seed]);
    let zeta = cfg.zeta(n);
    let ccfg = &cfg.correction;
    let mut estimator = StructureEstimator::new(cfg.structure);

    let (initials, init_step) = match inp.mode {
        InitialPoseMode::Known => (
            initialize_world(InitialPoseMode::Known, None, &[], inp.gt_initial.as_deref())?,
            None,
        ),
        InitialPoseMode::Unknown => {
            let (init, s) = unknown_initials(inp, cfg, &filter, &estimator, n, len)?;
            (init, Some(s))
        }
    };
    if initials.len() != n {
        return Err(Error::InitializationFailed);
    }

    let mut world = WorldState::new(initials.clone(), dt);
    let mut global = vec![Trajectory::with_capacity(dt, len); n];
    let mut propagated = vec![Trajectory::with_capacity(dt, len); n];
    let mut filtered = Vec::with_capacity(len);
    let mut epochs: Vec<AnchorEpoch> = Vec::new();
    let mut flagged_steps = Vec::new();
    let mut scales = vec![ScaleState::default(); n];
    // Scale-corrected odometry chain, restarted at every anchor.
    let mut chain = vec![RigidPose::identity(); n];
    let mut last_anchor: Option<(u64, Vec<Vec3>)> = None;
    let spacing_steps = ccfg.min_anchor_spacing / dt - 1e-9;

    for k in 0..len {
        let step = k as u64;
        let ranges = filter_step(&inp.ranges, step, &filter);
        let ranges = if ranges.n() == n {
            ranges
        } else {
            let mut padded = RangeSet::empty(step, n);
            for (i, j, d) in ranges.valid_pairs() {
                padded.set(i, j, d)?;
            }
            padded
        };

        let mut warm = Vec::with_capacity(n);
        for i in 0..n {
            if k == 0 {
                warm.push(initials[i] * chain[i]);
                continue;
            }
            let raw = inp.vio[i].poses()[k - 1].inverse() * inp.vio[i].poses()[k];
            let world_rot = (initials[i] * chain[i]).rotation;
            let inc = RigidPose {
                rotation: raw.rotation,
                translation: scale_increment(
                    &raw.translation,
                    &world_rot,
                    &scales[i],
                    ccfg.feedback_frame,
                ),
            };
            chain[i] = (chain[i] * inc).renormalized();
            warm.push((world.current[i] * inc).renormalized());
        }

        let poses = match optimize_step(&warm, &ranges, &chain, &initials, &cfg.global) {
            Ok(sol) => sol.poses,
            Err(_) => {
                flagged_steps.push(step);
                warm
            }
        };
        for i in 0..n {
            global[i].push(Timestamp::new(step), poses[i])?;
            propagated[i].push(Timestamp::new(step), initials[i] * chain[i])?;
        }
        world.record(step, poses)?;
        filtered.push(ranges);

        let spacing_ok = last_anchor
            .as_ref()
            .is_none_or(|(s, _)| (step - s) as f64 >= spacing_steps);
        if !(spacing_ok && filtered[k].is_fully_valid()) {
            continue;
        }
        let Ok(est) = estimator.estimate(&filtered[k]) else {
            continue;
        };
        if !accept_structure(&est, zeta) {
            continue;
        }

        let epoch = epochs.len();
        let start = last_anchor.as_ref().map_or(0, |(s, _)| *s as usize + 1);
        let weights = epoch_weights(
            inp,
            cfg,
            &est,
            &propagated,
            &global,
            &filtered,
            start,
            k,
            epoch,
        )?;
        let world_pts: Vec<Vec3> = match cfg.anchor_world_source {
            AnchorWorldSource::Vio => propagated
                .iter()
                .map(|t| t.poses()[k].translation)
                .collect(),
            AnchorWorldSource::Global => global.iter().map(|t| t.poses()[k].translation).collect(),
        };
        let Ok(mut anchors) = select_mirror(&est, &world_pts, &weights.totals(), epoch) else {
            continue;
        };
        anchors.step = step;
        estimator.accept(&est);

        let mut factors = vec![Vec3::new(1.0, 1.0, 1.0); n];
        for i in 0..n {
            let anchor = anchors.anchors[i];
            let est_now = propagated[i].poses()[k].translation;
            if let Some((_, prev)) = &last_anchor {
                factors[i] = scale_error(&prev[i], &anchor, &prev[i], &est_now, ccfg);
                scales[i] = update_scale_state(&scales[i], &factors[i], ccfg, epoch);
            } else {
                scales[i].last_epoch = Some(epoch);
            }

            let traj = &mut world.trajectories[i];
            let s = last_anchor.as_ref().map_or(0, |(s, _)| *s as usize);
            let mut nodes: Vec<Vec3> = traj.poses()[s..=k].iter().map(|p| p.translation).collect();
            if last_anchor.is_none() {
                // No earlier anchor: spread from a virtual node just before step 0.
                nodes.insert(0, nodes[0]);
            }
            let batch = correct_epoch(i, epoch, &nodes, &anchor)?;
            let skip = usize::from(last_anchor.is_none());
            for (p, x) in traj.poses_mut()[s..=k].iter_mut().zip(&batch.after[skip..]) {
                p.translation = *x;
            }
            world.current[i].translation = anchor;

            // Restart the odometry chain at the anchor.
            chain[i].translation = initials[i].inverse().transform_point(&anchor);
            propagated[i].poses_mut()[k].translation = anchor;
        }

        epochs.push(AnchorEpoch {
            anchors: anchors.clone(),
            weights,
            structure: est,
            factors,
            scales: scales.clone(),
        });
        last_anchor = Some((step, anchors.anchors));
    }

    Ok(PipelineOutput {
        initials,
        init_step,
        global,
        world,
        propagated,
        filtered,
        epochs,
        flagged_steps,
    })
}

#[allow(clippy::too_many_arguments)]
fn epoch_weights(
    inp: &PipelineInputs,
    cfg: &PipelineConfig,
    est: &StructureEstimate,
    propagated: &[Trajectory],
    global: &[Trajectory],
    filtered: &[RangeSet],
    start: usize,
    end: usize,
    epoch: usize,
) -> Result<WeightSet> {
    let n = propagated.len();
    let source = match cfg.anchor_world_source {
        AnchorWorldSource::Vio => propagated,
        AnchorWorldSource::Global => global,
    };
    let world: Vec<Vec<Vec3>> = (start..=end)
        .map(|h| source.iter().map(|t| t.poses()[h].translation).collect())
        .collect();
    let structure_d = est.distance_matrix();
    let reference: Vec<Vec<f64>> = (start..=end)
        .map(|h| match cfg.consistency_reference {
            ConsistencyReference::Structure => structure_d.clone(),
            ConsistencyReference::Ranges => {
                let rs = &filtered[h];
                (0..n * n)
                    .map(|c| {
                        let (i, j) = (c / n, c % n);
                        if i == j {
                            0.0
                        } else {
                            rs.get(i, j).unwrap_or(structure_d[c])
                        }
                    })
                    .collect()
            }
        })
        .collect();

    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let samples = &inp.odom[i][start..=end];
        raw.push(WeightTriple {
            velocity: velocity_weight(samples, inp.dt)?,
            rotation: rotation_weight(samples, &cfg.fov, inp.dt)?,
            consistency: consistency_weight(&world, &reference, i, cfg.consistency_eps)?,
        });
    }
    Ok(normalize_and_total(epoch, &raw))
}
