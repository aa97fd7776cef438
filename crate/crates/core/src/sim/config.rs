//! Scenario description, loaded from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correction::CorrectionConfig;
use crate::error::{Error, Result};
use crate::global::{GlobalConfig, InitialPoseMode};
use crate::range::RangeFilterConfig;
use crate::structure::{default_zeta, StructureConfig};
use crate::weights::CameraFov;

use super::groundtruth::TrajectorySpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Seconds.
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub initial_pose_mode: InitialPoseMode,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub uwb: UwbParams,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

fn default_dt() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub trajectory: TrajectorySpec,
    /// Added to every position of the path.
    #[serde(default)]
    pub offset: [f64; 3],
    #[serde(default)]
    pub wiggle: Option<Wiggle>,
    #[serde(default)]
    pub vio: VioParams,
}

/// Smooth per-axis excursion `a·(1 − cos 2πft)`; zero position and
/// velocity at t = 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wiggle {
    pub amplitude: [f64; 3],
    /// Hz.
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VioParams {
    /// Per-axis body-frame scale of translation increments.
    pub scale: [f64; 3],
    /// Meters of error per meter traveled, along the motion direction.
    pub drift_rate: f64,
    /// Per-step translation noise (m).
    pub sigma_p: f64,
    /// Rotation random walk (rad/√s).
    pub sigma_r: f64,
    pub depth: DepthProfile,
}

impl Default for VioParams {
    fn default() -> Self {
        Self {
            scale: [1.0; 3],
            drift_rate: 0.0,
            sigma_p: 0.0,
            sigma_r: 0.0,
            depth: DepthProfile::default(),
        }
    }
}

/// Mean feature depth: a constant, or `[time, depth]` breakpoints held
/// until the next breakpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DepthProfile {
    Constant(f64),
    Piecewise(Vec<[f64; 2]>),
}

impl Default for DepthProfile {
    fn default() -> Self {
        DepthProfile::Constant(10.0)
    }
}

impl DepthProfile {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            DepthProfile::Constant(d) => *d,
            DepthProfile::Piecewise(points) => points
                .iter()
                .take_while(|p| p[0] <= t)
                .last()
                .or(points.first())
                .map_or(10.0, |p| p[1]),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            DepthProfile::Constant(d) => *d > 0.0 && d.is_finite(),
            DepthProfile::Piecewise(p) => {
                !p.is_empty()
                    && p.iter().all(|q| q[1] > 0.0 && q[1].is_finite())
                    && p.windows(2).all(|w| w[0][0] < w[1][0])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "depth profile must be positive with increasing times".into(),
            ))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UwbParams {
    /// Gaussian range noise (m).
    pub sigma: f64,
    pub p_nlos: f64,
    /// Uniform positive NLOS bias range (m).
    pub nlos_bias: [f64; 2],
    /// Raw samples per pipeline step.
    pub rate_multiple: usize,
}

impl Default for UwbParams {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            p_nlos: 0.0,
            nlos_bias: [1.0, 3.0],
            rate_multiple: 5,
        }
    }
}

/// Which world positions the structure is registered against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorWorldSource {
    /// Odometry propagated from the last anchor, with scale feedback.
    #[default]
    Vio,
    /// Per-step output of the global optimizer.
    Global,
}

/// Reference distances for the consistency weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyReference {
    /// Filtered ranges at each step of the epoch.
    #[default]
    Ranges,
    /// Distances of the newly accepted structure, held over the epoch.
    Structure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub filter: RangeFilterConfig,
    pub structure: StructureConfig,
    /// Structure acceptance threshold (m²); `0.1·N(N−1)` when absent.
    pub zeta: Option<f64>,
    pub global: GlobalConfig,
    pub correction: CorrectionConfig,
    pub fov: CameraFov,
    pub consistency_eps: f64,
    pub consistency_reference: ConsistencyReference,
    pub anchor_world_source: AnchorWorldSource,
    /// Seconds in which an unknown-initial run must find its first structure.
    pub startup_window: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            filter: RangeFilterConfig::default(),
            structure: StructureConfig::default(),
            zeta: None,
            global: GlobalConfig::default(),
            correction: CorrectionConfig::default(),
            fov: CameraFov::default(),
            consistency_eps: 1e-6,
            consistency_reference: ConsistencyReference::default(),
            anchor_world_source: AnchorWorldSource::default(),
            startup_window: 10.0,
        }
    }
}

impl PipelineConfig {
    pub fn zeta(&self, n: usize) -> f64 {
        self.zeta.unwrap_or_else(|| default_zeta(n))
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.correction;
        if !(c.s_min > 0.0 && c.s_min <= 1.0 && c.s_max >= 1.0) {
            return Err(Error::Config("need 0 < s_min <= 1 <= s_max".into()));
        }
        if !(c.eps_motion >= 0.0 && c.min_anchor_spacing >= 0.0) {
            return Err(Error::Config(
                "eps_motion and min_anchor_spacing must be non-negative".into(),
            ));
        }
        if !(self.consistency_eps > 0.0) {
            return Err(Error::Config("consistency_eps must be positive".into()));
        }
        if let Some(z) = self.zeta {
            if !(z >= 0.0) {
                return Err(Error::Config("zeta must be non-negative".into()));
            }
        }
        let g = &self.global;
        if !(g.lambda_r >= 0.0 && g.lambda_v >= 0.0 && g.irls_delta > 0.0) {
            return Err(Error::Config(
                "global weights must be non-negative and irls_delta positive".into(),
            ));
        }
        if self.filter.smoothing_window == 0 || self.filter.ransac_window == 0 {
            return Err(Error::Config("filter windows must be non-empty".into()));
        }
        if !(self.startup_window >= 0.0) {
            return Err(Error::Config("startup_window must be non-negative".into()));
        }
        self.fov
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn n(&self) -> usize {
        self.robots.len()
    }

    /// Index of the last step; the grid holds `steps() + 1` nodes.
    pub fn steps(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.robots.len() < 4 {
            return Err(Error::Config(format!(
                "need at least 4 robots, got {}",
                self.robots.len()
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if !(self.duration >= 10.0 * self.dt) || !self.duration.is_finite() {
            return Err(Error::Config("duration must be at least 10 steps".into()));
        }
        let u = &self.uwb;
        if !(u.sigma >= 0.0) || !(0.0..0.5).contains(&u.p_nlos) {
            return Err(Error::Config(
                "need uwb sigma >= 0 and 0 <= p_nlos < 0.5".into(),
            ));
        }
        if !(0.0 <= u.nlos_bias[0] && u.nlos_bias[0] <= u.nlos_bias[1]) {
            return Err(Error::Config(
                "nlos_bias must satisfy 0 <= min <= max".into(),
            ));
        }
        if u.rate_multiple == 0 {
            return Err(Error::Config("uwb rate_multiple must be at least 1".into()));
        }
        for (k, r) in self.robots.iter().enumerate() {
            let v = &r.vio;
            if !v.scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!(
                    "robot {}: scale factors must be positive",
                    k + 1
                )));
            }
            if !(v.sigma_p >= 0.0 && v.sigma_r >= 0.0 && v.drift_rate.is_finite()) {
                return Err(Error::Config(format!(
                    "robot {}: noise levels must be non-negative",
                    k + 1
                )));
            }
            v.depth.validate()?;
            r.trajectory.validate()?;
            if let Some(w) = &r.wiggle {
                if !(w.frequency >= 0.0) {
                    return Err(Error::Config(format!(
                        "robot {}: wiggle frequency must be non-negative",
                        k + 1
                    )));
                }
            }
        }
        self.pipeline.validate()
    }
}
