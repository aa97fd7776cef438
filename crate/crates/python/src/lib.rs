//! Python bindings. Points are `(x, y, z)` tuples, trajectories are lists
//! of points on the pipeline step grid.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use anchorloc_core::alignment::weighted_align as core_weighted_align;
use anchorloc_core::correction::{self, CorrectionConfig};
use anchorloc_core::eval::{self, AlignMode};
use anchorloc_core::range::{ransac_values, RangeSet, RansacParams};
use anchorloc_core::sim::{self, presets, ScenarioConfig, SimulatedRun};
use anchorloc_core::structure::{StructureConfig, StructureEstimator};
use anchorloc_core::{RigidPose, Timestamp, Trajectory, Vec3};

type Point = (f64, f64, f64);

fn err(e: anchorloc_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vec3(p: Point) -> Vec3 {
    Vec3::new(p.0, p.1, p.2)
}

fn point(v: &Vec3) -> Point {
    (v.x, v.y, v.z)
}

fn points(t: &Trajectory) -> Vec<Point> {
    t.positions().map(|p| point(&p)).collect()
}

fn trajectory(pts: &[Point]) -> PyResult<Trajectory> {
    let mut t = Trajectory::with_capacity(0.1, pts.len());
    for (k, p) in pts.iter().enumerate() {
        t.push(
            Timestamp::new(k as u64),
            RigidPose::from_translation(vec3(*p)),
        )
        .map_err(err)?;
    }
    Ok(t)
}

fn align_mode(s: &str) -> PyResult<AlignMode> {
    match s {
        "initial" => Ok(AlignMode::Initial),
        "full" => Ok(AlignMode::Full),
        _ => Err(PyValueError::new_err(format!("unknown alignment `{s}`"))),
    }
}

/// A scenario configuration.
#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    /// One of `default`, `robot4_scale`, `noiseless`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        presets::by_name(name)
            .map(|inner| Self { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown preset `{name}`")))
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ScenarioConfig::from_toml_str(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ScenarioConfig::load(path.as_ref()).map_err(err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }

    #[setter]
    fn set_duration(&mut self, d: f64) {
        self.inner.duration = d;
    }

    #[getter]
    fn n_robots(&self) -> usize {
        self.inner.n()
    }

    /// `"known"` or `"unknown"`.
    #[getter]
    fn initial_pose_mode(&self) -> &'static str {
        match self.inner.initial_pose_mode {
            anchorloc_core::global::InitialPoseMode::Known => "known",
            anchorloc_core::global::InitialPoseMode::Unknown => "unknown",
        }
    }

    #[setter]
    fn set_initial_pose_mode(&mut self, mode: &str) -> PyResult<()> {
        use anchorloc_core::global::InitialPoseMode;
        self.inner.initial_pose_mode = match mode {
            "known" => InitialPoseMode::Known,
            "unknown" => InitialPoseMode::Unknown,
            _ => return Err(PyValueError::new_err(format!("unknown mode `{mode}`"))),
        };
        Ok(())
    }

    /// Simulates the scenario and runs the pipeline.
    fn run(&self, py: Python<'_>) -> PyResult<PyRun> {
        let cfg = self.inner.clone();
        let run = py.detach(move || sim::run_pipeline(&cfg)).map_err(err)?;
        Ok(PyRun { inner: run })
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, robots={}, duration={}, seed={})",
            self.inner.name,
            self.inner.n(),
            self.inner.duration,
            self.inner.seed
        )
    }
}

/// Result of [`PyScenario::run`].
#[pyclass(name = "Run")]
struct PyRun {
    inner: SimulatedRun,
}

impl PyRun {
    fn robot<'a>(&self, trajs: &'a [Trajectory], i: usize) -> PyResult<&'a Trajectory> {
        trajs
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("robot index {i} out of range")))
    }
}

#[pymethods]
impl PyRun {
    #[getter]
    fn n_robots(&self) -> usize {
        self.inner.config.n()
    }

    #[getter]
    fn n_epochs(&self) -> usize {
        self.inner.output.epochs.len()
    }

    fn ground_truth(&self, robot: usize) -> PyResult<Vec<Point>> {
        Ok(points(self.robot(&self.inner.sensors.gt, robot)?))
    }

    fn vio(&self, robot: usize) -> PyResult<Vec<Point>> {
        Ok(points(self.robot(&self.inner.sensors.vio, robot)?))
    }

    fn corrected(&self, robot: usize) -> PyResult<Vec<Point>> {
        Ok(points(self.robot(self.inner.output.corrected(), robot)?))
    }

    fn global_estimate(&self, robot: usize) -> PyResult<Vec<Point>> {
        Ok(points(self.robot(&self.inner.output.global, robot)?))
    }

    /// Anchor epochs as `(step, mirrored, anchors)`.
    fn epochs(&self) -> Vec<(u64, bool, Vec<Point>)> {
        self.inner
            .output
            .epochs
            .iter()
            .map(|e| {
                (
                    e.anchors.step,
                    e.anchors.mirrored,
                    e.anchors.anchors.iter().map(point).collect(),
                )
            })
            .collect()
    }

    /// The ATE report as `metrics.json` text.
    #[pyo3(signature = (align = "initial"))]
    fn metrics_json(&self, align: &str) -> PyResult<String> {
        self.inner
            .report(align_mode(align)?)
            .and_then(|r| r.to_json())
            .map_err(err)
    }

    #[pyo3(signature = (align = "initial"))]
    fn table(&self, align: &str) -> PyResult<String> {
        Ok(self.inner.report(align_mode(align)?).map_err(err)?.table())
    }

    /// Writes the run directory and returns `metrics.json` text.
    fn write(&self, dir: &str) -> PyResult<String> {
        sim::output::write_run(dir.as_ref(), &self.inner)
            .and_then(|r| r.to_json())
            .map_err(err)
    }
}

/// Relative positions from a full symmetric distance matrix. Returns
/// `(positions, mirror_positions, residual)` in the gauge frame.
#[pyfunction]
fn estimate_structure(distances: Vec<Vec<f64>>) -> PyResult<(Vec<Point>, Vec<Point>, f64)> {
    let n = distances.len();
    if distances.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("distance matrix must be square"));
    }
    let flat: Vec<f64> = distances.into_iter().flatten().collect();
    let rs = RangeSet::from_matrix(0, n, &flat).map_err(err)?;
    let est = StructureEstimator::new(StructureConfig::default())
        .estimate(&rs)
        .map_err(err)?;
    Ok((
        est.positions.iter().map(point).collect(),
        est.mirror_positions.iter().map(point).collect(),
        est.residual,
    ))
}

/// Weighted rigid fit of `structure` onto `world`. Returns
/// `(rotation rows, translation, cost)`.
#[pyfunction]
fn weighted_align(
    world: Vec<Point>,
    structure: Vec<Point>,
    weights: Vec<f64>,
) -> PyResult<([[f64; 3]; 3], Point, f64)> {
    let w: Vec<Vec3> = world.into_iter().map(vec3).collect();
    let s: Vec<Vec3> = structure.into_iter().map(vec3).collect();
    let a = core_weighted_align(&w, &s, &weights).map_err(err)?;
    let r = a.transform.rotation;
    let rows = [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]);
    Ok((rows, point(&a.transform.translation), a.cost))
}

/// Per-axis scale factors from two consecutive anchors and estimates.
#[pyfunction]
#[pyo3(signature = (prev_anchor, cur_anchor, prev_est, cur_est, eps_motion = 0.05))]
fn scale_error(
    prev_anchor: Point,
    cur_anchor: Point,
    prev_est: Point,
    cur_est: Point,
    eps_motion: f64,
) -> Point {
    let cfg = CorrectionConfig {
        eps_motion,
        ..Default::default()
    };
    point(&correction::scale_error(
        &vec3(prev_anchor),
        &vec3(cur_anchor),
        &vec3(prev_est),
        &vec3(cur_est),
        &cfg,
    ))
}

/// Spreads the gap between the last node and `anchor` linearly over the epoch.
#[pyfunction]
fn correct_epoch(nodes: Vec<Point>, anchor: Point) -> PyResult<Vec<Point>> {
    let nodes: Vec<Vec3> = nodes.into_iter().map(vec3).collect();
    let batch = correction::correct_epoch(0, 0, &nodes, &vec3(anchor)).map_err(err)?;
    Ok(batch.after.iter().map(point).collect())
}

/// ATE RMSE between two position sequences after initial-pose alignment.
#[pyfunction]
fn ate_rmse(est: Vec<Point>, gt: Vec<Point>) -> PyResult<f64> {
    let (e, g) = (trajectory(&est)?, trajectory(&gt)?);
    eval::align_initial(&e, &g)
        .and_then(|a| eval::ate_rmse(&a, &g))
        .map_err(err)
}

#[pyfunction]
fn trajectory_length(positions: Vec<Point>) -> PyResult<f64> {
    eval::trajectory_length(&trajectory(&positions)?).map_err(err)
}

/// Constant-model RANSAC. Returns `(value, inlier mask)`.
#[pyfunction]
#[pyo3(signature = (values, inlier_threshold = 0.3, min_samples = 5, iterations = 50, seed = 0))]
fn ransac(
    values: Vec<f64>,
    inlier_threshold: f64,
    min_samples: usize,
    iterations: usize,
    seed: u64,
) -> PyResult<(f64, Vec<bool>)> {
    let params = RansacParams {
        min_samples,
        inlier_threshold,
        iterations,
        seed,
    };
    let c = ransac_values(&values, &params).map_err(err)?;
    Ok((c.value, c.inliers))
}

#[pymodule]
fn anchorloc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(estimate_structure, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_align, m)?)?;
    m.add_function(wrap_pyfunction!(scale_error, m)?)?;
    m.add_function(wrap_pyfunction!(correct_epoch, m)?)?;
    m.add_function(wrap_pyfunction!(ate_rmse, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory_length, m)?)?;
    m.add_function(wrap_pyfunction!(ransac, m)?)?;
    Ok(())
}
