//! Synthetic odometry and UWB ranging.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{rotation_from_vector, RigidPose, Timestamp, Trajectory, Vec3};
use crate::range::{PairStream, RangeLog};
use crate::weights::OdomSample;

use super::config::{UwbParams, VioParams};

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated non-negative")
}

fn log_so3(r: &nalgebra::Matrix3<f64>) -> Vec3 {
    nalgebra::Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

/// Odometry of one robot in its own start frame.
///
/// Each step the true body-frame increment `δ` becomes
/// `scale ⊙ δ + drift_rate·δ + n`, `n ~ N(0, σ_p²)` per axis, and the true
/// rotation increment is perturbed by `exp(N(0, σ_R² Δt))`. Odometry
/// samples carry the true body-frame velocity and turn rates.
pub fn simulate_vio(
    gt: &Trajectory,
    params: &VioParams,
    robot: usize,
    seed: u64,
) -> (Trajectory, Vec<OdomSample>) {
    let dt = gt.dt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos_noise = normal(params.sigma_p);
    let rot_noise = normal(params.sigma_r * dt.sqrt());
    let scale = Vec3::from(params.scale);
    let poses = gt.poses();
    let steps = gt.steps();

    let mut vio = Trajectory::with_capacity(dt, poses.len());
    let mut odom = Vec::with_capacity(poses.len());
    let mut current = RigidPose::identity();
    for k in 0..poses.len() {
        if k > 0 {
            let inc = poses[k - 1].inverse() * poses[k];
            let noise = Vec3::from_fn(|_, _| pos_noise.sample(&mut rng));
            let dtrans =
                inc.translation.component_mul(&scale) + inc.translation * params.drift_rate + noise;
            let drot = Vec3::from_fn(|_, _| rot_noise.sample(&mut rng));
            let step = RigidPose {
                rotation: inc.rotation * rotation_from_vector(drot),
                translation: dtrans,
            };
            current = (current * step).renormalized();
        }
        vio.push(Timestamp::new(steps[k]), current)
            .expect("grid from gt");

        // Motion over the step ending here (the first one for k = 0).
        let (a, b) = if k == 0 {
            (0, 1.min(poses.len() - 1))
        } else {
            (k - 1, k)
        };
        let inc = poses[a].inverse() * poses[b];
        let w = log_so3(&inc.rotation) / dt;
        odom.push(OdomSample {
            robot,
            step: steps[k],
            local_pose: current,
            velocity: inc.translation / dt,
            omega_h: w.z.abs(),
            omega_v: w.y.abs(),
            depth: params.depth.at(steps[k] as f64 * dt),
        });
    }
    (vio, odom)
}

/// Odometry samples derived from a logged trajectory alone (no ground truth).
pub fn odom_from_trajectory(vio: &Trajectory, robot: usize, depth: f64) -> Vec<OdomSample> {
    let dt = vio.dt();
    let poses = vio.poses();
    (0..poses.len())
        .map(|k| {
            let (a, b) = if k == 0 {
                (0, 1.min(poses.len() - 1))
            } else {
                (k - 1, k)
            };
            let inc = poses[a].inverse() * poses[b];
            let w = log_so3(&inc.rotation) / dt;
            OdomSample {
                robot,
                step: vio.steps()[k],
                local_pose: poses[k],
                velocity: inc.translation / dt,
                omega_h: w.z.abs(),
                omega_v: w.y.abs(),
                depth,
            }
        })
        .collect()
}

/// Simulated range log plus which samples carry an NLOS bias.
#[derive(Clone, Debug, PartialEq)]
pub struct UwbLog {
    pub log: RangeLog,
    pub nlos: BTreeMap<(usize, usize), Vec<bool>>,
}

/// Ranges for every pair on the sub-step grid `q · Δt / rate_multiple`,
/// `q ∈ [first_index, first_index + count)`. Each sample is the true
/// distance plus `N(0, σ_r²)`, plus a uniform bias in `nlos_bias` with
/// probability `p_nlos`; results are floored at zero.
pub fn simulate_uwb(
    position: impl Fn(usize, f64) -> Vec3,
    n: usize,
    dt: f64,
    first_index: i64,
    count: usize,
    params: &UwbParams,
    seed: u64,
) -> UwbLog {
    let k = params.rate_multiple.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = normal(params.sigma);
    let mut log = RangeLog::new(n, k);
    let mut nlos = BTreeMap::new();
    let mut values: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for q in 0..count {
        let t = (first_index + q as i64) as f64 * dt / k as f64;
        let pos: Vec<Vec3> = (0..n).map(|i| position(i, t)).collect();
        for i in 0..n {
            for j in i + 1..n {
                let mut d = (pos[i] - pos[j]).norm() + noise.sample(&mut rng);
                let hit = rng.random::<f64>() < params.p_nlos;
                if hit {
                    let [lo, hi] = params.nlos_bias;
                    d += if hi > lo {
                        rng.random_range(lo..=hi)
                    } else {
                        lo
                    };
                }
                values.entry((i, j)).or_default().push(d.max(0.0));
                nlos.entry((i, j)).or_insert_with(Vec::new).push(hit);
            }
        }
    }
    for (pair, v) in values {
        log.pairs.insert(
            pair,
            PairStream {
                first_index,
                values: v,
            },
        );
    }
    UwbLog { log, nlos }
}
