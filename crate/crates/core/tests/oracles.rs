//! Library results against independent implementations.

use nalgebra::{Matrix4, Quaternion, UnitQuaternion};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use anchorloc_core::alignment::weighted_align;
use anchorloc_core::eval::{align_initial, ate_rmse, trajectory_length};
use anchorloc_core::range::RangeSet;
use anchorloc_core::sim::{presets, ScenarioConfig};
use anchorloc_core::structure::{
    gauge_normalize, structure_residual, StructureConfig, StructureEstimator,
};
use anchorloc_core::weights::{velocity_weight, OdomSample};
use anchorloc_core::{RigidPose, Timestamp, Trajectory, Vec3};

fn points(seed: u64, n: usize) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vec3::from_fn(|_, _| rng.random_range(-15.0..15.0)))
        .collect()
}

fn exact_ranges(p: &[Vec3]) -> RangeSet {
    let mut rs = RangeSet::empty(0, p.len());
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            rs.set(i, j, (p[i] - p[j]).norm()).unwrap();
        }
    }
    rs
}

/// Frame-A coordinates by trilateration from distances only, with the
/// first clearly off-plane robot placed at z > 0.
fn trilaterate(d: impl Fn(usize, usize) -> f64, n: usize) -> Vec<Vec3> {
    let d12 = d(0, 1);
    let mut out = vec![Vec3::zeros(), Vec3::new(d12, 0.0, 0.0)];
    let x3 = (d12 * d12 + d(0, 2).powi(2) - d(1, 2).powi(2)) / (2.0 * d12);
    let y3 = (d(0, 2).powi(2) - x3 * x3).max(0.0).sqrt();
    out.push(Vec3::new(x3, y3, 0.0));
    let mut sign = 0.0;
    for k in 3..n {
        let x = (d12 * d12 + d(0, k).powi(2) - d(1, k).powi(2)) / (2.0 * d12);
        let y = (x3 * x3 + y3 * y3 + d(0, k).powi(2) - d(2, k).powi(2) - 2.0 * x * x3) / (2.0 * y3);
        let z_abs = (d(0, k).powi(2) - x * x - y * y).max(0.0).sqrt();
        // The sign of later robots follows from their distance to the first
        // off-plane one.
        let z = if sign == 0.0 {
            if z_abs > 1e-6 {
                sign = 1.0;
            }
            z_abs
        } else {
            let r = out.iter().position(|p: &Vec3| p.z.abs() > 1e-6).unwrap();
            let up = Vec3::new(x, y, z_abs);
            let down = Vec3::new(x, y, -z_abs);
            if ((up - out[r]).norm() - d(r, k)).abs() <= ((down - out[r]).norm() - d(r, k)).abs() {
                z_abs
            } else {
                -z_abs
            }
        };
        out.push(Vec3::new(x, y, z));
    }
    out
}

#[test]
fn structure_matches_trilateration() {
    let est = StructureEstimator::new(StructureConfig::default());
    for seed in 0..40 {
        let n = 4 + (seed as usize % 4);
        let truth = points(seed, n);
        let d = |i: usize, j: usize| (truth[i] - truth[j]).norm();
        let oracle = trilaterate(d, n);
        let e = est.estimate(&exact_ranges(&truth)).unwrap();
        for (a, b) in e.positions.iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-6, "seed {seed}: {a} vs {b}");
        }

        let g = gauge_normalize(&truth).unwrap();
        for (a, b) in g.iter().zip(&oracle) {
            assert!((a.xy() - b.xy()).norm() < 1e-9 && (a.z.abs() - b.z.abs()).abs() < 1e-9);
        }
    }
}

#[test]
fn residual_matches_hand_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..20 {
        let p = points(100 + seed, 5);
        let mut rs = RangeSet::empty(0, 5);
        let mut r = [[0.0; 5]; 5];
        for i in 0..5 {
            for j in i + 1..5 {
                let v = (p[i] - p[j]).norm() + rng.random_range(-0.5..0.5);
                rs.set(i, j, v).unwrap();
                r[i][j] = v;
                r[j][i] = v;
            }
        }
        let mut oracle = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    oracle += (r[i][j] * r[i][j] - (p[i] - p[j]).norm_squared()).abs();
                }
            }
        }
        let got = structure_residual(&p, &rs).unwrap();
        assert!((got - oracle).abs() < 1e-9 * oracle.max(1.0));
    }
}

/// Weighted rotation from the dominant eigenvector of Horn's 4×4 matrix.
fn horn(world: &[Vec3], structure: &[Vec3], w: &[f64]) -> (nalgebra::Matrix3<f64>, Vec3) {
    let sw: f64 = w.iter().sum();
    let cw = world.iter().zip(w).map(|(p, w)| p * *w).sum::<Vec3>() / sw;
    let cs = structure.iter().zip(w).map(|(p, w)| p * *w).sum::<Vec3>() / sw;
    let mut m = nalgebra::Matrix3::zeros();
    for ((a, b), wi) in structure.iter().zip(world).zip(w) {
        m += (a - cs) * (b - cw).transpose() * *wi;
    }
    let (sxx, sxy, sxz) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let (syx, syy, syz) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let (szx, szy, szz) = (m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    #[rustfmt::skip]
    let n = Matrix4::new(
        sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
        szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
        sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
    );
    let eig = n.symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(k);
    let q = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]));
    let r = q.to_rotation_matrix().into_inner();
    (r, cw - r * cs)
}

#[test]
fn weighted_align_matches_horn_on_noisy_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..50 {
        let s = points(200 + seed, 6);
        let q = UnitQuaternion::from_euler_angles(
            rng.random_range(-3.0..3.0),
            rng.random_range(-1.5..1.5),
            rng.random_range(-3.0..3.0),
        );
        let t = Vec3::new(3.0, -7.0, 2.0);
        let world: Vec<Vec3> = s
            .iter()
            .map(|p| q * p + t + Vec3::from_fn(|_, _| rng.random_range(-0.3..0.3)))
            .collect();
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(0.2..3.0)).collect();
        let a = weighted_align(&world, &s, &w).unwrap();
        let (r, tr) = horn(&world, &s, &w);
        assert!((a.transform.rotation - r).abs().max() < 1e-8, "seed {seed}");
        assert!((a.transform.translation - tr).norm() < 1e-8, "seed {seed}");
        let cost: f64 = world
            .iter()
            .zip(&s)
            .zip(&w)
            .map(|((x, y), wi)| wi * (x - (r * y + tr)).norm())
            .sum();
        assert!((a.cost - cost).abs() < 1e-8);
    }
}

fn traj(pts: &[Vec3]) -> Trajectory {
    let mut t = Trajectory::new(0.1);
    for (k, p) in pts.iter().enumerate() {
        t.push(Timestamp::new(k as u64), RigidPose::from_translation(*p))
            .unwrap();
    }
    t
}

proptest! {
    #[test]
    fn ate_matches_direct_formula(
        gt in prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 2..40),
        offset in prop::array::uniform3(-5.0f64..5.0),
        noise in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 40),
    ) {
        let g: Vec<Vec3> = gt.iter().map(|p| Vec3::from(*p)).collect();
        let off = Vec3::from(offset);
        let e: Vec<Vec3> = g.iter().zip(&noise).map(|(p, n)| p + off + Vec3::from(*n)).collect();
        // Initial alignment with identity rotations is a shift by the first error.
        let shift = g[0] - e[0];
        let sq: f64 = e.iter().zip(&g).map(|(a, b)| (a + shift - b).norm_squared()).sum();
        let oracle = (sq / g.len() as f64).sqrt();
        let (et, gtt) = (traj(&e), traj(&g));
        let got = ate_rmse(&align_initial(&et, &gtt).unwrap(), &gtt).unwrap();
        prop_assert!((got - oracle).abs() < 1e-9);

        let len: f64 = g.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        prop_assert!((trajectory_length(&gtt).unwrap() - len).abs() < 1e-9);
    }

    #[test]
    fn velocity_weight_matches_formula(
        vs in prop::collection::vec(prop::array::uniform3(-30.0f64..30.0), 1..20),
        depth in 0.5f64..20.0,
        dt in 0.01f64..0.5,
    ) {
        let samples: Vec<OdomSample> = vs
            .iter()
            .enumerate()
            .map(|(k, v)| OdomSample {
                robot: 0,
                step: k as u64,
                local_pose: RigidPose::identity(),
                velocity: Vec3::from(*v),
                omega_h: 0.0,
                omega_v: 0.0,
                depth,
            })
            .collect();
        let clip = |x: f64| if x > 0.0 { x } else { 0.0 };
        let oracle: f64 = vs
            .iter()
            .map(|v| {
                let fwd = clip(depth - clip(v[0]) * dt) / depth;
                fwd * fwd + clip(depth - v[1].abs() * dt) / depth + clip(depth - v[2].abs() * dt) / depth
            })
            .sum::<f64>()
            / vs.len() as f64;
        prop_assert!((velocity_weight(&samples, dt).unwrap() - oracle).abs() < 1e-12);
    }
}

#[test]
fn config_files_match_presets() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["default", "robot4_scale", "noiseless"] {
        let file = ScenarioConfig::load(&dir.join(format!("{name}.toml"))).unwrap();
        assert_eq!(file, presets::by_name(name).unwrap(), "{name}");
    }
}
