//! Trajectory accuracy metrics and the `metrics.json` report.

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::geometry::{RigidPose, Trajectory, Vec3};

/// Trajectory alignment before computing ATE.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    /// Overlay the first estimated pose on the first true pose.
    #[default]
    Initial,
    /// Least-squares rigid fit over all positions (diagnostic only).
    Full,
}

/// Applies the rigid transform that maps `est`'s first pose onto `gt`'s.
pub fn align_initial(est: &Trajectory, gt: &Trajectory) -> Result<Trajectory> {
    check_grids(est, gt)?;
    let t = gt.first().expect("non-empty") * &est.first().expect("non-empty").inverse();
    Ok(transform_trajectory(est, &t))
}

/// Least-squares rigid fit of all estimated positions onto the true ones.
pub fn align_full(est: &Trajectory, gt: &Trajectory) -> Result<Trajectory> {
    check_grids(est, gt)?;
    let e: Vec<Vec3> = est.positions().collect();
    let g: Vec<Vec3> = gt.positions().collect();
    let w = vec![1.0; e.len()];
    match crate::alignment::weighted_align(&g, &e, &w) {
        Ok(a) => Ok(transform_trajectory(est, &a.transform)),
        // Too few distinct positions to fix a rotation: match centroids.
        Err(_) => {
            let shift = (g.iter().sum::<Vec3>() - e.iter().sum::<Vec3>()) / e.len() as f64;
            Ok(transform_trajectory(
                est,
                &RigidPose::from_translation(shift),
            ))
        }
    }
}

pub fn align(est: &Trajectory, gt: &Trajectory, mode: AlignMode) -> Result<Trajectory> {
    match mode {
        AlignMode::Initial => align_initial(est, gt),
        AlignMode::Full => align_full(est, gt),
    }
}

fn check_grids(est: &Trajectory, gt: &Trajectory) -> Result<()> {
    if est.is_empty() || gt.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if !est.same_grid(gt) {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

fn transform_trajectory(traj: &Trajectory, t: &RigidPose) -> Trajectory {
    let mut out = traj.clone();
    for p in out.poses_mut() {
        *p = t * &*p;
    }
    out
}

/// Translational RMSE over matching steps.
pub fn ate_rmse(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    check_grids(est, gt)?;
    let sum: f64 = est
        .positions()
        .zip(gt.positions())
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    Ok((sum / est.len() as f64).sqrt())
}

pub fn trajectory_length(traj: &Trajectory) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let p: Vec<Vec3> = traj.positions().collect();
    Ok(p.windows(2).map(|w| (w[1] - w[0]).norm()).sum())
}

pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct RobotMetrics {
    pub id: usize,
    pub length_m: f64,
    pub ate_vio: f64,
    pub ate_corrected: f64,
    pub ate_global: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AteReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub align: AlignMode,
    pub per_robot: Vec<RobotMetrics>,
    pub avg: RobotMetrics,
}

/// Ground truth plus the three estimates of one robot.
pub struct RobotTrajectories<'a> {
    pub gt: &'a Trajectory,
    pub vio: &'a Trajectory,
    pub corrected: &'a Trajectory,
    pub global: &'a Trajectory,
}

impl AteReport {
    pub fn compute(
        scenario: &str,
        seed: u64,
        robots: &[RobotTrajectories<'_>],
        mode: AlignMode,
    ) -> Result<Self> {
        if robots.is_empty() {
            return Err(Error::InvalidInput("no robots to evaluate".into()));
        }
        let ate = |est: &Trajectory, gt: &Trajectory| ate_rmse(&align(est, gt, mode)?, gt);
        let per_robot = robots
            .iter()
            .enumerate()
            .map(|(k, r)| {
                Ok(RobotMetrics {
                    id: k + 1,
                    length_m: trajectory_length(r.gt)?,
                    ate_vio: ate(r.vio, r.gt)?,
                    ate_corrected: ate(r.corrected, r.gt)?,
                    ate_global: ate(r.global, r.gt)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let avg = average(&per_robot);
        Ok(Self {
            schema_version: METRICS_SCHEMA_VERSION,
            scenario: scenario.to_string(),
            seed,
            align: mode,
            per_robot,
            avg,
        })
    }

    /// JSON with every float printed to 17 significant digits.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            id: usize,
            length_m: &'a RawValue,
            ate_vio: &'a RawValue,
            ate_corrected: &'a RawValue,
            ate_global: &'a RawValue,
        }
        #[derive(Serialize)]
        struct Avg<'a> {
            length_m: &'a RawValue,
            ate_vio: &'a RawValue,
            ate_corrected: &'a RawValue,
            ate_global: &'a RawValue,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            schema_version: u32,
            scenario: &'a str,
            seed: u64,
            align: AlignMode,
            per_robot: Vec<Row<'a>>,
            avg: Avg<'a>,
        }
        let raws: Vec<[Box<RawValue>; 4]> = self
            .per_robot
            .iter()
            .chain(std::iter::once(&self.avg))
            .map(|m| {
                Ok([
                    float17(m.length_m)?,
                    float17(m.ate_vio)?,
                    float17(m.ate_corrected)?,
                    float17(m.ate_global)?,
                ])
            })
            .collect::<Result<_>>()?;
        let (avg_raw, rows_raw) = raws.split_last().expect("avg row present");
        let doc = Doc {
            schema_version: self.schema_version,
            scenario: &self.scenario,
            seed: self.seed,
            align: self.align,
            per_robot: self
                .per_robot
                .iter()
                .zip(rows_raw)
                .map(|(m, r)| Row {
                    id: m.id,
                    length_m: &r[0],
                    ate_vio: &r[1],
                    ate_corrected: &r[2],
                    ate_global: &r[3],
                })
                .collect(),
            avg: Avg {
                length_m: &avg_raw[0],
                ate_vio: &avg_raw[1],
                ate_corrected: &avg_raw[2],
                ate_global: &avg_raw[3],
            },
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            #[serde(default)]
            id: usize,
            length_m: f64,
            ate_vio: f64,
            ate_corrected: f64,
            ate_global: f64,
        }
        #[derive(Deserialize)]
        struct Doc {
            schema_version: u32,
            #[serde(default)]
            scenario: String,
            seed: u64,
            #[serde(default)]
            align: AlignMode,
            per_robot: Vec<Row>,
            avg: Row,
        }
        let d: Doc = serde_json::from_str(s)?;
        if d.schema_version != METRICS_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported metrics schema_version {}",
                d.schema_version
            )));
        }
        let conv = |r: Row| RobotMetrics {
            id: r.id,
            length_m: r.length_m,
            ate_vio: r.ate_vio,
            ate_corrected: r.ate_corrected,
            ate_global: r.ate_global,
        };
        Ok(Self {
            schema_version: d.schema_version,
            scenario: d.scenario,
            seed: d.seed,
            align: d.align,
            per_robot: d.per_robot.into_iter().map(conv).collect(),
            avg: conv(d.avg),
        })
    }

    /// Fixed-width text table.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:>5} {:>10} {:>10} {:>10} {:>10}\n",
            "robot", "length_m", "ate_vio", "ate_corr", "ate_global"
        );
        let row = |label: String, m: &RobotMetrics| {
            format!(
                "{:>5} {:>10.2} {:>10.3} {:>10.3} {:>10.3}\n",
                label, m.length_m, m.ate_vio, m.ate_corrected, m.ate_global
            )
        };
        for m in &self.per_robot {
            s += &row(m.id.to_string(), m);
        }
        s += &row("avg".into(), &self.avg);
        s
    }
}

fn average(rows: &[RobotMetrics]) -> RobotMetrics {
    let n = rows.len() as f64;
    let mean = |f: fn(&RobotMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    RobotMetrics {
        id: 0,
        length_m: mean(|m| m.length_m),
        ate_vio: mean(|m| m.ate_vio),
        ate_corrected: mean(|m| m.ate_corrected),
        ate_global: mean(|m| m.ate_global),
    }
}

fn float17(v: f64) -> Result<Box<RawValue>> {
    if !v.is_finite() {
        return Err(Error::InvalidInput(format!(
            "cannot serialize non-finite metric {v}"
        )));
    }
    Ok(RawValue::from_string(format!("{v:.16e}"))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Timestamp;
    use proptest::prelude::*;

    fn traj(points: &[Vec3]) -> Trajectory {
        let mut t = Trajectory::new(0.1);
        for (k, p) in points.iter().enumerate() {
            t.push(Timestamp::new(k as u64), RigidPose::from_translation(*p))
                .unwrap();
        }
        t
    }

    #[test]
    fn rmse_examples() {
        let gt = traj(&[Vec3::zeros(); 3]);
        let est = traj(&[
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0, 0.0),
        ]);
        assert!((ate_rmse(&est, &gt).unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(ate_rmse(&gt, &gt).unwrap(), 0.0);
        let off = traj(&[Vec3::new(0.0, 3.0, 0.0); 3]);
        assert_eq!(ate_rmse(&off, &gt).unwrap(), 3.0);
        assert!(matches!(
            ate_rmse(&Trajectory::new(0.1), &Trajectory::new(0.1)),
            Err(Error::EmptyTrajectory)
        ));
    }

    #[test]
    fn initial_alignment_examples() {
        let pts: Vec<Vec3> = (0..10)
            .map(|k| Vec3::new(k as f64, (k * k) as f64 * 0.1, 0.0))
            .collect();
        let gt = traj(&pts);
        assert_eq!(align_initial(&gt, &gt).unwrap(), gt);

        let shifted = traj(
            &pts.iter()
                .map(|p| p + Vec3::new(5.0, -2.0, 1.0))
                .collect::<Vec<_>>(),
        );
        assert!(ate_rmse(&align_initial(&shifted, &gt).unwrap(), &gt).unwrap() < 1e-12);

        let rot = RigidPose::from_axis_angle(Vec3::z(), std::f64::consts::FRAC_PI_2, Vec3::zeros());
        let mut turned = gt.clone();
        for p in turned.poses_mut() {
            *p = rot * *p;
        }
        let aligned = align_initial(&turned, &gt).unwrap();
        assert!(
            (aligned.first().unwrap().translation - gt.first().unwrap().translation).norm() < 1e-12
        );
        assert!(ate_rmse(&aligned, &gt).unwrap() < 1e-12);

        let short = traj(&pts[..5]);
        assert!(matches!(
            align_initial(&short, &gt),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn length_examples() {
        assert_eq!(
            trajectory_length(&traj(&[Vec3::new(1.0, 1.0, 1.0); 4])).unwrap(),
            0.0
        );
        let line: Vec<Vec3> = (0..=10).map(|k| Vec3::new(k as f64, 0.0, 0.0)).collect();
        assert!((trajectory_length(&traj(&line)).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn report_json_roundtrip_and_averages() {
        let gt = traj(&[
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        ]);
        let est = traj(&[
            Vec3::zeros(),
            Vec3::new(1.0, 0.5, 0.0),
            Vec3::new(2.0, 1.0, 0.0),
        ]);
        let robots = [
            RobotTrajectories {
                gt: &gt,
                vio: &est,
                corrected: &gt,
                global: &est,
            },
            RobotTrajectories {
                gt: &gt,
                vio: &gt,
                corrected: &est,
                global: &gt,
            },
        ];
        let r = AteReport::compute("unit", 7, &robots, AlignMode::Initial).unwrap();
        let a = r.per_robot[0].ate_vio;
        assert!((a - (1.25f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(r.avg.ate_vio, (a + 0.0) / 2.0);
        assert_eq!(r.avg.length_m, 2.0);
        let json = r.to_json().unwrap();
        assert!(
            json.contains("\"ate_vio\": 6.4549722436790280e-1"),
            "{json}"
        );
        let back = AteReport::from_json(&json).unwrap();
        assert_eq!(back.per_robot[0].ate_vio, r.per_robot[0].ate_vio);
        assert_eq!(back.avg, r.avg);
    }

    fn arb_traj() -> impl Strategy<Value = Trajectory> {
        prop::collection::vec(
            (
                prop::array::uniform3(-50.0f64..50.0),
                prop::array::uniform3(-1.0f64..1.0),
            ),
            1..40,
        )
        .prop_map(|v| {
            let mut t = Trajectory::new(0.1);
            for (k, (p, r)) in v.iter().enumerate() {
                let pose = RigidPose {
                    rotation: crate::geometry::rotation_from_vector(Vec3::from(*r)),
                    translation: Vec3::from(*p),
                };
                t.push(Timestamp::new(k as u64), pose).unwrap();
            }
            t
        })
    }

    proptest! {
        #[test]
        fn self_ate_is_zero(t in arb_traj()) {
            prop_assert!(ate_rmse(&align_initial(&t, &t).unwrap(), &t).unwrap() < 1e-9);
        }

        #[test]
        fn ate_invariant_under_common_transform(
            t in arb_traj(),
            noise in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 40),
            r in prop::array::uniform3(-2.0f64..2.0),
            s in prop::array::uniform3(-100.0f64..100.0),
        ) {
            let mut est = t.clone();
            for (p, n) in est.poses_mut().iter_mut().zip(&noise) {
                p.translation += Vec3::from(*n);
            }
            let q = RigidPose { rotation: crate::geometry::rotation_from_vector(Vec3::from(r)), translation: Vec3::from(s) };
            let a = ate_rmse(&est, &t).unwrap();
            let b = ate_rmse(&transform_trajectory(&est, &q), &transform_trajectory(&t, &q)).unwrap();
            prop_assert!((a - b).abs() < 1e-10 * (1.0 + a));
        }
    }
}
