//! Weighted rigid registration of the frame-A structure onto world
//! positions, and the choice between the structure and its mirror twin.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::{RigidPose, Vec3};
use crate::structure::StructureEstimate;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alignment {
    /// Maps frame-A points into the world frame.
    pub transform: RigidPose,
    /// `Σ w_i ‖world_i − T·structure_i‖` (unsquared norm).
    pub cost: f64,
}

/// Weighted Kabsch without scale.
///
/// The rotation minimizes the squared weighted error in closed form; the
/// reported cost uses the unsquared norm so the two mirror candidates are
/// ranked on the same objective the weights were designed for. A negative
/// determinant is repaired by flipping the last singular direction, so the
/// result is always a proper rotation; reflections are handled by
/// [`select_mirror`].
pub fn weighted_align(world: &[Vec3], structure: &[Vec3], weights: &[f64]) -> Result<Alignment> {
    let n = world.len();
    if structure.len() != n || weights.len() != n {
        return Err(Error::InvalidInput(
            "alignment inputs have different lengths".into(),
        ));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidInput(
            "alignment weights must be finite and non-negative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeight);
    }
    if weights.iter().filter(|&&w| w > 0.0).count() < 3 {
        return Err(Error::AlignmentDegenerate);
    }

    let centroid = |pts: &[Vec3]| {
        pts.iter()
            .zip(weights)
            .fold(Vec3::zeros(), |acc, (p, &w)| acc + p * w)
            / total
    };
    let cs = centroid(structure);
    let cw = centroid(world);

    let mut h = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for ((s, x), &w) in structure.iter().zip(world).zip(weights) {
        let a = s - cs;
        h += w * a * (x - cw).transpose();
        spread += w * a * a.transpose();
    }

    let mut sv: Vec<f64> = spread
        .symmetric_eigenvalues()
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[1] <= 1e-9 * sv[0].max(1e-300) || sv[1] <= 1e-12 {
        return Err(Error::AlignmentDegenerate);
    }

    let svd = h.svd(true, true);
    let u = svd.u.ok_or(Error::AlignmentDegenerate)?;
    let v = svd.v_t.ok_or(Error::AlignmentDegenerate)?.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    let transform = RigidPose {
        rotation,
        translation: cw - rotation * cs,
    };
    Ok(Alignment {
        cost: alignment_cost(&transform, world, structure, weights),
        transform,
    })
}

pub fn alignment_cost(t: &RigidPose, world: &[Vec3], structure: &[Vec3], weights: &[f64]) -> f64 {
    world
        .iter()
        .zip(structure)
        .zip(weights)
        .map(|((x, s), w)| w * (x - t.transform_point(s)).norm())
        .sum()
}

/// World-frame anchor nodes produced at one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorNodeSet {
    pub epoch: usize,
    pub step: u64,
    pub transform: RigidPose,
    pub anchors: Vec<Vec3>,
    pub mirrored: bool,
    pub cost_direct: f64,
    pub cost_mirrored: f64,
}

/// Aligns both twins and keeps the cheaper one; ties go to the un-mirrored twin.
pub fn select_mirror(
    est: &StructureEstimate,
    world: &[Vec3],
    weights: &[f64],
    epoch: usize,
) -> Result<AnchorNodeSet> {
    let direct = weighted_align(world, &est.positions, weights)?;
    let flipped = weighted_align(world, &est.mirror_positions, weights)?;
    let mirrored = flipped.cost < direct.cost;
    let (chosen, source) = if mirrored {
        (flipped, &est.mirror_positions)
    } else {
        (direct, &est.positions)
    };
    Ok(AnchorNodeSet {
        epoch,
        step: est.step,
        transform: chosen.transform,
        anchors: source
            .iter()
            .map(|p| chosen.transform.transform_point(p))
            .collect(),
        mirrored,
        cost_direct: direct.cost,
        cost_mirrored: flipped.cost,
    })
}
