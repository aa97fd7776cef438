//! Deterministic synthetic scenarios and end-to-end runs.

pub mod config;
pub mod groundtruth;
pub mod output;
pub mod pipeline;
pub mod presets;
pub mod sensors;

use crate::error::Result;
use crate::eval::{AlignMode, AteReport, RobotTrajectories};
use crate::geometry::Trajectory;
use crate::range::mix_seed;
use crate::weights::OdomSample;

pub use config::ScenarioConfig;
pub use pipeline::{PipelineInputs, PipelineOutput};
use sensors::UwbLog;

/// Simulated sensor data of one scenario.
#[derive(Clone, Debug)]
pub struct SensorData {
    pub gt: Vec<Trajectory>,
    pub vio: Vec<Trajectory>,
    pub odom: Vec<Vec<OdomSample>>,
    pub uwb: UwbLog,
}

#[derive(Clone, Debug)]
pub struct SimulatedRun {
    pub config: ScenarioConfig,
    pub sensors: SensorData,
    pub output: PipelineOutput,
}

/// Generates ground truth, odometry and ranges for `cfg`.
pub fn simulate_sensors(cfg: &ScenarioConfig) -> Result<SensorData> {
    let gt = groundtruth::generate_ground_truth(cfg)?;
    let mut vio = Vec::with_capacity(gt.len());
    let mut odom = Vec::with_capacity(gt.len());
    for (i, (g, robot)) in gt.iter().zip(&cfg.robots).enumerate() {
        let (v, o) = sensors::simulate_vio(g, &robot.vio, i, mix_seed(cfg.seed, &[1, i as u64]));
        vio.push(v);
        odom.push(o);
    }

    // Enough raw samples on both sides for the filter windows at the ends.
    let k = cfg.uwb.rate_multiple.max(1);
    let f = &cfg.pipeline.filter;
    let pad = f.smoothing_window + f.ransac_window;
    let count = cfg.steps() as usize * k + 1 + 2 * pad;
    let duration = cfg.duration;
    let uwb = sensors::simulate_uwb(
        |i, t| cfg.robots[i].position(t.clamp(0.0, duration)),
        cfg.n(),
        cfg.dt,
        -(pad as i64),
        count,
        &cfg.uwb,
        mix_seed(cfg.seed, &[2]),
    );
    Ok(SensorData { gt, vio, odom, uwb })
}

pub fn pipeline_inputs(cfg: &ScenarioConfig, sensors: &SensorData) -> PipelineInputs {
    PipelineInputs {
        dt: cfg.dt,
        vio: sensors.vio.clone(),
        odom: sensors.odom.clone(),
        ranges: sensors.uwb.log.clone(),
        mode: cfg.initial_pose_mode,
        gt_initial: Some(
            sensors
                .gt
                .iter()
                .map(|t| *t.first().expect("non-empty"))
                .collect(),
        ),
        seed: cfg.seed,
    }
}

/// Simulates `cfg` and runs the localization pipeline on the result.
pub fn run_pipeline(cfg: &ScenarioConfig) -> Result<SimulatedRun> {
    cfg.validate()?;
    let sensors = simulate_sensors(cfg)?;
    let output = pipeline::run(&pipeline_inputs(cfg, &sensors), &cfg.pipeline)?;
    Ok(SimulatedRun {
        config: cfg.clone(),
        sensors,
        output,
    })
}

impl SimulatedRun {
    pub fn report(&self, mode: AlignMode) -> Result<AteReport> {
        let robots: Vec<RobotTrajectories<'_>> = (0..self.config.n())
            .map(|i| RobotTrajectories {
                gt: &self.sensors.gt[i],
                vio: &self.sensors.vio[i],
                corrected: &self.output.corrected()[i],
                global: &self.output.global[i],
            })
            .collect();
        AteReport::compute(&self.config.name, self.config.seed, &robots, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{align_initial, ate_rmse};

    #[test]
    fn node_count_matches_duration() {
        let mut cfg = presets::noiseless();
        cfg.duration = 60.0;
        let s = simulate_sensors(&cfg).unwrap();
        assert!(s.gt.iter().all(|t| t.len() == 601));
        assert!(s.vio.iter().all(|t| t.len() == 601));
    }

    #[test]
    fn noiseless_run_matches_ground_truth() {
        let mut cfg = presets::noiseless();
        cfg.duration = 30.0;
        // Averaging windows bias ranges on curved paths by millimeters, so
        // keep them short in time.
        cfg.uwb.rate_multiple = 50;
        cfg.pipeline.filter.smoothing_window = 1;
        cfg.pipeline.filter.ransac_window = 5;
        let run = run_pipeline(&cfg).unwrap();
        assert!(!run.output.epochs.is_empty());
        for i in 0..cfg.n() {
            let gt = &run.sensors.gt[i];
            let c = ate_rmse(&align_initial(&run.output.corrected()[i], gt).unwrap(), gt).unwrap();
            assert!(c < 1e-3, "robot {} corrected ATE {c}", i + 1);
        }
    }
}
