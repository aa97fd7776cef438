//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::time::{Duration, Instant};

use nalgebra::UnitQuaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use anchorloc_core::alignment::{select_mirror, weighted_align};
use anchorloc_core::correction::{
    apply_scale_feedback, correct_epoch, scale_error, update_scale_state, CorrectionConfig,
    ScaleState,
};
use anchorloc_core::eval::AlignMode;
use anchorloc_core::global::{
    global_cost, initials_from_ground_truth, optimize_step, GlobalConfig, InitialPoseMode,
};
use anchorloc_core::range::{ransac_values, RangeSet, RansacParams};
use anchorloc_core::sim::config::UwbParams;
use anchorloc_core::sim::output::write_run;
use anchorloc_core::sim::sensors::simulate_uwb;
use anchorloc_core::sim::{groundtruth, presets, run_pipeline};
use anchorloc_core::structure::{
    gauge_normalize, mirror, StructureConfig, StructureEstimate, StructureEstimator,
};
use anchorloc_core::weights::{
    consistency_weight, rotation_weight, velocity_weight, CameraFov, OdomSample,
};
use anchorloc_core::{RigidPose, Vec3};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> Vec<Vec3> {
    loop {
        let pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::from_fn(|_, _| rng.random_range(-half_width..half_width)))
            .collect();
        let separated = (0..n).all(|i| (i + 1..n).all(|j| (pts[i] - pts[j]).norm() > 1.0));
        let c = pts.iter().sum::<Vec3>() / n as f64;
        let mut cov = nalgebra::Matrix3::zeros();
        for p in &pts {
            cov += (p - c) * (p - c).transpose();
        }
        let sv = cov.symmetric_eigenvalues();
        if separated && sv.min() / n as f64 > 1.0 {
            return pts;
        }
    }
}

fn range_set(pts: &[Vec3], noise: Option<(&Normal<f64>, &mut ChaCha8Rng)>) -> RangeSet {
    let n = pts.len();
    let mut rs = RangeSet::empty(0, n);
    let mut noise = noise;
    for i in 0..n {
        for j in i + 1..n {
            let mut d = (pts[i] - pts[j]).norm();
            if let Some((dist, rng)) = noise.as_mut() {
                d += dist.sample(*rng);
            }
            rs.set(i, j, d.max(0.0)).unwrap();
        }
    }
    rs
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn structure_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let est = StructureEstimator::new(StructureConfig::default());
    let mut worst_exact = 0.0f64;
    let mut errors = Vec::new();
    let mut failures = 0;
    for case in 0..100 {
        let n = 4 + case % 3;
        let truth = random_points(&mut rng, n, 10.0);
        match est.estimate(&range_set(&truth, None)) {
            Ok(e) => {
                for i in 0..n {
                    for j in 0..n {
                        let d = (e.positions[i] - e.positions[j]).norm();
                        worst_exact = worst_exact.max((d - (truth[i] - truth[j]).norm()).abs());
                    }
                }
            }
            Err(_) => failures += 1,
        }
        let Ok(e) = est.estimate(&range_set(&truth, Some((&noise, &mut rng)))) else {
            failures += 1;
            continue;
        };
        let gauged = gauge_normalize(&truth).unwrap();
        let err = |cand: &[Vec3]| -> Vec<f64> {
            cand.iter()
                .zip(&gauged)
                .map(|(a, b)| (a - b).norm())
                .collect()
        };
        let (a, b) = (err(&e.positions), err(&e.mirror_positions));
        errors.extend(if a.iter().sum::<f64>() <= b.iter().sum::<f64>() {
            a
        } else {
            b
        });
    }
    let med = median(&mut errors);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures == 0 && worst_exact < 1e-6 && med < 0.3 && secs < 10.0,
        format!("exact max distance error {worst_exact:.2e}, noisy median position error {med:.3} m, {failures} failures, {secs:.2} s"),
    )
}

fn sample(v: Vec3, omega_h: f64, omega_v: f64, depth: f64) -> OdomSample {
    OdomSample {
        robot: 0,
        step: 0,
        local_pose: RigidPose::identity(),
        velocity: v,
        omega_h,
        omega_v,
        depth,
    }
}

fn weight_formulas() -> Outcome {
    let dt = 0.1;
    let wv = velocity_weight(&[sample(Vec3::new(5.0, 2.0, 0.0), 0.0, 0.0, 10.0)], dt).unwrap();
    let wv_oracle = ((10.0 - 5.0 * dt) / 10.0f64).powi(2) + (10.0 - 2.0 * dt) / 10.0 + 1.0;
    let fov = CameraFov::new(1.5, 1.0).unwrap();
    let wa = rotation_weight(&[sample(Vec3::zeros(), 3.0, 1.0, 10.0)], &fov, dt).unwrap();
    let wa_oracle = (1.5 - 3.0 * dt) / 1.5 * ((1.0 - 1.0 * dt) / 1.0);
    let world = vec![vec![Vec3::zeros(), Vec3::new(5.5, 0.0, 0.0)]];
    let reference = vec![vec![0.0, 5.0, 5.0, 0.0]];
    let wr = consistency_weight(&world, &reference, 0, 1e-6).unwrap();
    let wr_oracle = 5.0 / (0.5 + 1e-6);
    let exact = (wv - wv_oracle).abs() < 1e-9
        && (wv - 2.8825).abs() < 1e-9
        && (wa - wa_oracle).abs() < 1e-9
        && (wa - 0.72).abs() < 1e-9
        && (wr - wr_oracle).abs() < 1e-9
        && (wr - 10.0).abs() < 1e-4;

    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut bounds_ok = true;
    for _ in 0..10_000 {
        let m = rng.random_range(1..6);
        let samples: Vec<OdomSample> = (0..m)
            .map(|_| {
                sample(
                    Vec3::from_fn(|_, _| rng.random_range(-20.0..20.0)),
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.0..10.0),
                    rng.random_range(0.1..30.0),
                )
            })
            .collect();
        let h = rng.random_range(0.1..3.0);
        let fov = CameraFov::new(h, rng.random_range(0.05..=h)).unwrap();
        let dt = rng.random_range(0.01..1.0);
        let v = velocity_weight(&samples, dt).unwrap();
        let a = rotation_weight(&samples, &fov, dt).unwrap();
        bounds_ok &= (0.0..=3.0).contains(&v) && (0.0..=1.0).contains(&a);
    }
    outcome(
        exact && bounds_ok,
        format!(
            "w_v {wv:.10}, w_a {wa:.10}, w_r {wr:.6}, bounds on 1e4 inputs {}",
            if bounds_ok { "hold" } else { "violated" }
        ),
    )
}

fn random_rotation(rng: &mut ChaCha8Rng) -> nalgebra::Matrix3<f64> {
    let q = nalgebra::Quaternion::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    UnitQuaternion::from_quaternion(q)
        .to_rotation_matrix()
        .into_inner()
}

fn weighted_alignment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut mirror_hits = 0;
    for case in 0..100 {
        let n = 4 + case % 5;
        let structure = random_points(&mut rng, n, 10.0);
        let r = random_rotation(&mut rng);
        let t = Vec3::from_fn(|_, _| rng.random_range(-50.0..50.0));
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let world: Vec<Vec3> = structure.iter().map(|p| r * p + t).collect();
        let a = weighted_align(&world, &structure, &weights).unwrap();
        worst = worst
            .max((a.transform.rotation - r).abs().max())
            .max((a.transform.translation - t).abs().max());

        let positions = gauge_normalize(&structure).unwrap();
        let est = StructureEstimate {
            step: 0,
            mirror_positions: mirror(&positions),
            positions,
            residual: 0.0,
            planar: false,
        };
        let use_mirror = case % 2 == 1;
        let source = if use_mirror {
            &est.mirror_positions
        } else {
            &est.positions
        };
        let world: Vec<Vec3> = source.iter().map(|p| r * p + t).collect();
        let chosen = select_mirror(&est, &world, &weights, 0).unwrap();
        mirror_hits += usize::from(chosen.mirrored == use_mirror);
    }
    outcome(
        worst < 1e-9 && mirror_hits == 100,
        format!("max transform error {worst:.2e}, mirror selection {mirror_hits}/100"),
    )
}

fn correction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut endpoint_exact = true;
    for _ in 0..100 {
        let m = rng.random_range(2..50);
        let nodes: Vec<Vec3> = (0..m)
            .map(|_| Vec3::from_fn(|_, _| rng.random_range(-100.0..100.0)))
            .collect();
        let anchor = Vec3::from_fn(|_, _| rng.random_range(-100.0..100.0));
        let b = correct_epoch(0, 0, &nodes, &anchor).unwrap();
        endpoint_exact &= b.after[m - 1] == anchor && b.after[0] == nodes[0];
    }

    // Pure-scale robot on a helix: odometry reads 1.3x every true increment,
    // anchors are exact and the odometry chain restarts at each anchor.
    let cfg = CorrectionConfig::default();
    let helix = |k: usize| {
        let t = k as f64 * 0.1;
        Vec3::new(10.0 * (0.1 * t).cos(), 10.0 * (0.1 * t).sin(), 0.2 * t)
    };
    let mut state = ScaleState::default();
    let mut anchor = helix(0);
    for epoch in 1..=3 {
        let mut est = anchor;
        for k in (epoch - 1) * 200..epoch * 200 {
            est += apply_scale_feedback(&((helix(k + 1) - helix(k)) * 1.3), &state);
        }
        let next = helix(epoch * 200);
        let f = scale_error(&anchor, &next, &anchor, &est, &cfg);
        state = update_scale_state(&state, &f, &cfg, epoch);
        anchor = next;
    }
    let target = 1.0 / 1.3;
    let s = state.factors;
    let scale_ok = s.iter().all(|v| ((v - target) / target).abs() < 0.1);
    let detail = format!(
        "scale after 3 epochs ({:.4}, {:.4}, {:.4}), target {target:.4}",
        s.x, s.y, s.z
    );
    outcome(
        endpoint_exact && scale_ok,
        format!("endpoint exact: {endpoint_exact}, {detail}"),
    )
}

fn global_estimator() -> Outcome {
    let mut cfg = presets::noiseless();
    cfg.duration = 60.0;
    let gt = groundtruth::generate_ground_truth(&cfg).unwrap();
    let n = gt.len();
    let first: Vec<RigidPose> = gt.iter().map(|t| *t.first().unwrap()).collect();
    let initials = initials_from_ground_truth(&first).unwrap();
    // World frame is robot 1's start frame.
    let to_world = first[0].inverse();
    let gcfg = GlobalConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for k in 0..gt[0].len() {
        let truth: Vec<RigidPose> = gt.iter().map(|t| to_world * t.poses()[k]).collect();
        let vio: Vec<RigidPose> = (0..n).map(|i| initials[i].inverse() * truth[i]).collect();
        let warm: Vec<RigidPose> = truth
            .iter()
            .map(|p| {
                let mut q = *p;
                q.translation += Vec3::from_fn(|_, _| rng.random_range(-0.05..0.05));
                q
            })
            .collect();
        let positions: Vec<Vec3> = truth.iter().map(|p| p.translation).collect();
        let sol =
            optimize_step(&warm, &range_set(&positions, None), &vio, &initials, &gcfg).unwrap();
        for (p, q) in sol.poses.iter().zip(&truth) {
            worst = worst.max((p.translation - q.translation).norm());
        }
    }

    let two = vec![
        RigidPose::identity(),
        RigidPose::from_translation(Vec3::new(5.0, 0.0, 0.0)),
    ];
    let id2 = vec![RigidPose::identity(); 2];
    let mut rs = RangeSet::empty(0, 2);
    rs.set(0, 1, 6.0).unwrap();
    let c22 = global_cost(&two, &rs, &two, &id2, &gcfg).unwrap();
    rs.set(0, 1, 5.0).unwrap();
    let mut vio = two.clone();
    vio[1].translation += Vec3::new(3.0, 4.0, 0.0);
    let c25 = global_cost(&two, &rs, &vio, &id2, &gcfg).unwrap();
    // |36 − 25| once per ordered pair, then ‖(3,4,0)‖² from odometry alone.
    let (o22, o25) = (2.0 * (36.0f64 - 25.0).abs(), 3.0f64 * 3.0 + 4.0 * 4.0);
    let ok = worst < 1e-6 && (c22 - o22).abs() < 1e-9 && (c25 - o25).abs() < 1e-9;
    outcome(
        ok,
        format!("max position error {worst:.2e} m over 601 steps, costs {c22} and {c25}"),
    )
}

struct E2e {
    r4_ratio: f64,
    avg_ratio: f64,
    avg_corrected: f64,
    elapsed: Duration,
    initialized: bool,
}

fn end_to_end(seed: u64, mode: InitialPoseMode) -> E2e {
    let mut cfg = presets::robot4_scale();
    cfg.seed = seed;
    cfg.initial_pose_mode = mode;
    let start = Instant::now();
    let run = run_pipeline(&cfg).unwrap();
    let elapsed = start.elapsed();
    let rep = run.report(AlignMode::Initial).unwrap();
    let r4 = &rep.per_robot[3];
    E2e {
        r4_ratio: r4.ate_corrected / r4.ate_vio,
        avg_ratio: rep.avg.ate_corrected / rep.avg.ate_vio,
        avg_corrected: rep.avg.ate_corrected,
        elapsed,
        initialized: mode == InitialPoseMode::Known || run.output.init_step.is_some(),
    }
}

fn robustness(known: &[E2e]) -> Outcome {
    let ok = known
        .iter()
        .all(|r| r.r4_ratio <= 0.6 && r.avg_ratio <= 0.8 && r.elapsed.as_secs() < 120);
    let r4: Vec<String> = known.iter().map(|r| format!("{:.2}", r.r4_ratio)).collect();
    let avg: Vec<String> = known
        .iter()
        .map(|r| format!("{:.2}", r.avg_ratio))
        .collect();
    let slowest = known.iter().map(|r| r.elapsed).max().unwrap();
    outcome(
        ok,
        format!(
            "faulty robot corrected/raw [{}], average corrected/raw [{}], slowest run {:.1} s",
            r4.join(" "),
            avg.join(" "),
            slowest.as_secs_f64()
        ),
    )
}

fn unknown_initial(known: &[E2e], unknown: &[E2e]) -> Outcome {
    let ratios: Vec<f64> = known
        .iter()
        .zip(unknown)
        .map(|(k, u)| u.avg_corrected / k.avg_corrected)
        .collect();
    let ok = unknown.iter().all(|u| u.initialized) && ratios.iter().all(|&r| r <= 2.0);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
    outcome(
        ok,
        format!("unknown/known average ATE [{}]", shown.join(" ")),
    )
}

fn determinism() -> Outcome {
    let cfg = presets::robot4_scale();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    write_run(&a, &run_pipeline(&cfg).unwrap()).unwrap();
    write_run(&b, &run_pipeline(&cfg).unwrap()).unwrap();
    let files = [
        "metrics.json",
        "corrected_4.csv",
        "anchors.csv",
        "weights.csv",
    ];
    let same = files
        .iter()
        .all(|f| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap());
    outcome(same, format!("byte-identical {}", files.join(", ")))
}

fn ransac_nlos() -> Outcome {
    let params = UwbParams {
        sigma: 0.1,
        p_nlos: 0.1,
        nlos_bias: [1.0, 3.0],
        rate_multiple: 1,
    };
    let window = 15;
    let windows = 10_000;
    let log = simulate_uwb(
        |i, _| Vec3::new(12.0 * i as f64, 0.0, 0.0),
        2,
        0.1,
        0,
        window * windows,
        &params,
        909,
    );
    let values = &log.log.pairs[&(0, 1)].values;
    let flags = &log.nlos[&(0, 1)];
    let rp = RansacParams::default();
    let (mut injected, mut excluded, mut failed) = (0usize, 0usize, 0usize);
    for w in 0..windows {
        let range = w * window..(w + 1) * window;
        let params = RansacParams {
            seed: w as u64,
            ..rp
        };
        let Ok(c) = ransac_values(&values[range.clone()], &params) else {
            failed += 1;
            continue;
        };
        for (inlier, &nlos) in c.inliers.iter().zip(&flags[range]) {
            if nlos {
                injected += 1;
                excluded += usize::from(!inlier);
            }
        }
    }
    let frac = excluded as f64 / injected as f64;
    outcome(
        frac >= 0.95,
        format!("{excluded}/{injected} NLOS samples excluded ({:.2}%), {failed} windows without consensus", 100.0 * frac),
    )
}

fn main() {
    let known: Vec<E2e> = (1..=5)
        .map(|s| end_to_end(s, InitialPoseMode::Known))
        .collect();
    let unknown: Vec<E2e> = (1..=5)
        .map(|s| end_to_end(s, InitialPoseMode::Unknown))
        .collect();
    let results = [
        ("1 structure recovery", structure_recovery()),
        ("2 weight formulas", weight_formulas()),
        ("3 weighted alignment", weighted_alignment()),
        ("4 anchor correction", correction()),
        ("5 global estimator", global_estimator()),
        ("6 drift and scale robustness", robustness(&known)),
        ("7 unknown initial poses", unknown_initial(&known, &unknown)),
        ("8 determinism", determinism()),
        ("9 RANSAC NLOS rejection", ransac_nlos()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
