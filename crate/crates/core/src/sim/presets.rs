//! Built-in scenarios. The TOML files under `configs/` mirror these.

use crate::correction::{CorrectionConfig, FeedbackFrame};
use crate::global::InitialPoseMode;

use super::config::{
    PipelineConfig, RobotSpec, ScenarioConfig, UwbParams, VioParams, Wiggle, SCHEMA_VERSION,
};
use super::groundtruth::TrajectorySpec;

/// Start positions: robot 1 at the origin, robot 2 on +x, robot 3 in the
/// xy-plane with y > 0, robots 4 and 5 above it.
const OFFSETS: [[f64; 3]; 5] = [
    [0.0, 0.0, 0.0],
    [10.0, 0.0, 0.0],
    [4.0, 8.0, 0.0],
    [7.0, -6.0, 6.0],
    [-3.0, 4.0, 9.0],
];

/// Semi-axes `(a, b)` of each robot's loop. All loops leave along +x, so
/// every robot starts with the same heading; a negative `b` turns right.
/// Each loop is about 240 m long.
const LOOPS: [(f64, f64); 5] = [
    (40.0, 35.0),
    (45.0, -30.0),
    (35.0, 40.0),
    (30.0, -45.0),
    (50.0, 25.0),
];

const WIGGLES: [Option<Wiggle>; 5] = [
    None,
    Some(Wiggle {
        amplitude: [0.0, 1.5, 0.5],
        frequency: 0.02,
    }),
    Some(Wiggle {
        amplitude: [1.0, 0.0, 1.0],
        frequency: 0.015,
    }),
    Some(Wiggle {
        amplitude: [0.0, 1.0, 1.5],
        frequency: 0.025,
    }),
    Some(Wiggle {
        amplitude: [1.5, 1.0, 0.0],
        frequency: 0.01,
    }),
];

fn loop_robots(vio: [VioParams; 5]) -> Vec<RobotSpec> {
    vio.into_iter()
        .enumerate()
        .map(|(i, v)| RobotSpec {
            trajectory: TrajectorySpec::Loop {
                start: [0.0; 3],
                a: LOOPS[i].0,
                b: LOOPS[i].1,
                period: 240.0,
            },
            offset: OFFSETS[i],
            wiggle: WIGGLES[i],
            vio: v,
        })
        .collect()
}

fn mild(scale_x: f64, drift_rate: f64) -> VioParams {
    VioParams {
        scale: [scale_x, 1.0, 1.0],
        drift_rate,
        sigma_p: 0.005,
        sigma_r: 0.003,
        ..Default::default()
    }
}

fn loop_pipeline() -> PipelineConfig {
    // Long epochs and a large motion threshold keep the per-axis ratios
    // well above range noise.
    PipelineConfig {
        zeta: Some(40.0),
        correction: CorrectionConfig {
            eps_motion: 3.0,
            min_anchor_spacing: 40.0,
            feedback_frame: FeedbackFrame::Local,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Five robots on ~240 m loops; robot 4's odometry over-scales by 1.3 on
/// every axis and drifts 2 cm per meter.
pub fn robot4_scale() -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: "robot4_scale".into(),
        seed: 1,
        duration: 240.0,
        dt: 0.1,
        initial_pose_mode: InitialPoseMode::Known,
        robots: loop_robots([
            mild(1.03, 0.01),
            mild(0.97, 0.01),
            mild(1.02, 0.005),
            VioParams {
                scale: [1.3, 1.3, 1.3],
                drift_rate: 0.02,
                sigma_p: 0.005,
                sigma_r: 0.003,
                ..Default::default()
            },
            mild(0.98, 0.01),
        ]),
        uwb: UwbParams {
            sigma: 0.1,
            p_nlos: 0.05,
            nlos_bias: [1.0, 3.0],
            rate_multiple: 5,
        },
        pipeline: loop_pipeline(),
    }
}

/// Same loops, mild odometry errors on every robot.
pub fn default_scenario() -> ScenarioConfig {
    let mut cfg = robot4_scale();
    cfg.name = "default".into();
    cfg.robots[3].vio = mild(1.04, 0.01);
    cfg
}

/// Exact sensors; every estimate should reproduce ground truth.
pub fn noiseless() -> ScenarioConfig {
    let mut cfg = robot4_scale();
    cfg.name = "noiseless".into();
    for r in &mut cfg.robots {
        r.vio = VioParams::default();
    }
    cfg.uwb.sigma = 0.0;
    cfg.uwb.p_nlos = 0.0;
    cfg
}

pub fn by_name(name: &str) -> Option<ScenarioConfig> {
    match name {
        "default" => Some(default_scenario()),
        "robot4_scale" => Some(robot4_scale()),
        "noiseless" => Some(noiseless()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["default", "robot4_scale", "noiseless"] {
            by_name(name).unwrap().validate().unwrap();
        }
        assert!(by_name("nope").is_none());
    }
}
