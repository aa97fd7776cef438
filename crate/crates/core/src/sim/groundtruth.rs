//! Parametric ground-truth paths.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RigidPose, Timestamp, Trajectory, Vec3};

use super::config::{RobotSpec, ScenarioConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Counter-clockwise circle in a horizontal plane.
    Circle {
        center: [f64; 3],
        radius: f64,
        speed: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Closed horizontal ellipse leaving `start` along +x:
    /// `start + (a sin θ, b (1 − cos θ), 0)`, `θ = 2πt / period`.
    Loop {
        #[serde(default)]
        start: [f64; 3],
        a: f64,
        b: f64,
        period: f64,
    },
    /// `center + amplitude ⊙ sin(2π frequency t + phase)`.
    Lissajous {
        center: [f64; 3],
        amplitude: [f64; 3],
        frequency: [f64; 3],
        #[serde(default)]
        phase: [f64; 3],
    },
    /// Back-and-forth lanes along x, stepping +y, joined by half-circle turns.
    Lawnmower {
        #[serde(default)]
        start: [f64; 3],
        lane_length: f64,
        lane_spacing: f64,
        lanes: usize,
        speed: f64,
    },
    /// Constant-speed polyline; holds the last point when done.
    Waypoints {
        points: Vec<[f64; 3]>,
        speed: f64,
    },
    Stationary {
        position: [f64; 3],
    },
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        match self {
            TrajectorySpec::Circle { radius, speed, .. } if !(*radius > 0.0 && *speed >= 0.0) => {
                fail("circle needs radius > 0 and speed >= 0")
            }
            TrajectorySpec::Loop { period, .. } if !(*period > 0.0) => {
                fail("loop needs period > 0")
            }
            TrajectorySpec::Lawnmower {
                lane_length,
                lane_spacing,
                lanes,
                speed,
                ..
            } if !(*lane_length > 0.0 && *lane_spacing > 0.0 && *lanes >= 1 && *speed >= 0.0) => {
                fail("lawnmower needs positive lane length, spacing, lanes and speed >= 0")
            }
            TrajectorySpec::Waypoints { points, .. } if points.len() < 2 => {
                fail("waypoint path needs at least 2 points")
            }
            TrajectorySpec::Waypoints { speed, .. } if !(*speed >= 0.0) => {
                fail("waypoint speed must be >= 0")
            }
            _ => Ok(()),
        }
    }

    /// Position at time `t`; times before 0 give the start position.
    pub fn position(&self, t: f64) -> Vec3 {
        let t = t.max(0.0);
        match self {
            TrajectorySpec::Circle {
                center,
                radius,
                speed,
                phase,
            } => {
                let th = phase + speed * t / radius;
                Vec3::from(*center) + Vec3::new(radius * th.cos(), radius * th.sin(), 0.0)
            }
            TrajectorySpec::Loop {
                start,
                a,
                b,
                period,
            } => {
                let th = TAU * t / period;
                Vec3::from(*start) + Vec3::new(a * th.sin(), b * (1.0 - th.cos()), 0.0)
            }
            TrajectorySpec::Lissajous {
                center,
                amplitude,
                frequency,
                phase,
            } => Vec3::from_fn(|k, _| {
                center[k] + amplitude[k] * (TAU * frequency[k] * t + phase[k]).sin()
            }),
            TrajectorySpec::Lawnmower {
                start,
                lane_length,
                lane_spacing,
                lanes,
                speed,
            } => lawnmower(
                Vec3::from(*start),
                *lane_length,
                *lane_spacing,
                *lanes,
                speed * t,
            ),
            TrajectorySpec::Waypoints { points, speed } => polyline(points, speed * t),
            TrajectorySpec::Stationary { position } => Vec3::from(*position),
        }
    }
}

fn lawnmower(start: Vec3, length: f64, spacing: f64, lanes: usize, s: f64) -> Vec3 {
    let r = spacing / 2.0;
    let turn = PI * r;
    let mut s = s;
    let mut y = 0.0;
    for lane in 0..lanes {
        let forward = lane % 2 == 0;
        let x0 = if forward { 0.0 } else { length };
        let dir = if forward { 1.0 } else { -1.0 };
        if s <= length || lane + 1 == lanes {
            let u = s.min(length);
            return start + Vec3::new(x0 + dir * u, y, 0.0);
        }
        s -= length;
        if s <= turn {
            // Half circle around (end_x, y + r), bulging outward.
            let a = s / r;
            let end_x = x0 + dir * length;
            return start + Vec3::new(end_x + dir * r * a.sin(), y + r - r * a.cos(), 0.0);
        }
        s -= turn;
        y += spacing;
    }
    unreachable!("lanes >= 1")
}

fn polyline(points: &[[f64; 3]], s: f64) -> Vec3 {
    let mut s = s;
    for w in points.windows(2) {
        let a = Vec3::from(w[0]);
        let b = Vec3::from(w[1]);
        let len = (b - a).norm();
        if s <= len {
            return if len > 0.0 {
                a + (b - a) * (s / len)
            } else {
                a
            };
        }
        s -= len;
    }
    Vec3::from(points[points.len() - 1])
}

impl RobotSpec {
    pub fn position(&self, t: f64) -> Vec3 {
        let mut p = self.trajectory.position(t) + Vec3::from(self.offset);
        if let Some(w) = &self.wiggle {
            let c = 1.0 - (TAU * w.frequency * t.max(0.0)).cos();
            p += Vec3::from(w.amplitude) * c;
        }
        p
    }
}

const HEADING_EPS: f64 = 1e-6;

/// Yaw-pitch orientation whose +x axis points along `v`.
fn heading(v: &Vec3) -> Matrix3<f64> {
    let horiz = (v.x * v.x + v.y * v.y).sqrt();
    let yaw = v.y.atan2(v.x);
    let pitch = -v.z.atan2(horiz);
    (Rotation3::from_axis_angle(&Vec3::z_axis(), yaw)
        * Rotation3::from_axis_angle(&Vec3::y_axis(), pitch))
    .into_inner()
}

fn velocity(robot: &RobotSpec, t: f64, h: f64) -> Vec3 {
    if t < h {
        (robot.position(t + h) - robot.position(t)) / h
    } else {
        (robot.position(t + h) - robot.position(t - h)) / (2.0 * h)
    }
}

/// Samples one robot on the `dt` grid, facing along its velocity. While
/// (nearly) stopped the previous heading is kept; a robot that starts at
/// rest takes the heading of its first motion.
pub fn sample_robot(robot: &RobotSpec, dt: f64, steps: u64) -> Trajectory {
    let h = 1e-4 * dt;
    let vel: Vec<Vec3> = (0..=steps)
        .map(|k| velocity(robot, k as f64 * dt, h))
        .collect();
    let mut rot = vel
        .iter()
        .find(|v| v.norm() > HEADING_EPS)
        .map_or_else(Matrix3::identity, heading);
    let mut traj = Trajectory::with_capacity(dt, steps as usize + 1);
    for (k, v) in vel.iter().enumerate() {
        if v.norm() > HEADING_EPS {
            rot = heading(v);
        }
        let pose = RigidPose {
            rotation: rot,
            translation: robot.position(k as f64 * dt),
        };
        traj.push(Timestamp::new(k as u64), pose)
            .expect("steps increase");
    }
    traj
}

pub const MIN_SEPARATION: f64 = 1.0;

/// Ground truth for every robot; fails if two robots ever come closer than
/// [`MIN_SEPARATION`].
pub fn generate_ground_truth(cfg: &ScenarioConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let trajs: Vec<Trajectory> = cfg
        .robots
        .iter()
        .map(|r| sample_robot(r, cfg.dt, cfg.steps()))
        .collect();
    for k in 0..trajs[0].len() {
        for i in 0..trajs.len() {
            for j in i + 1..trajs.len() {
                let d = (trajs[i].poses()[k].translation - trajs[j].poses()[k].translation).norm();
                if d < MIN_SEPARATION {
                    return Err(Error::Config(format!(
                        "robots {} and {} are {d:.3} m apart at step {k}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
    }
    Ok(trajs)
}
