//! Run directories: per-robot trajectory CSVs, range log, anchor and weight
//! tables, the scenario and `metrics.json`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::{AlignMode, AteReport, RobotTrajectories};
use crate::geometry::{Trajectory, Vec3};
use crate::range::RangeLog;
use crate::weights::OdomSample;

use super::config::ScenarioConfig;
use super::pipeline::PipelineOutput;
use super::sensors::odom_from_trajectory;
use super::SimulatedRun;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_trajectories(dir: &Path, prefix: &str, trajs: &[Trajectory]) -> Result<()> {
    for (i, t) in trajs.iter().enumerate() {
        let mut w = create(dir, &format!("{prefix}_{}.csv", i + 1))?;
        t.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn write_odom_csv<W: Write>(samples: &[OdomSample], mut w: W) -> Result<()> {
    writeln!(w, "step,vx,vy,vz,omega_h,omega_v,depth")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.step, s.velocity.x, s.velocity.y, s.velocity.z, s.omega_h, s.omega_v, s.depth
        )?;
    }
    Ok(())
}

/// Reads odometry samples; `local_pose` is filled from `vio` by step.
pub fn read_odom_csv<R: BufRead>(r: R, robot: usize, vio: &Trajectory) -> Result<Vec<OdomSample>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with("step") || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Parse(format!("odometry line {}", lineno + 1));
        let f: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if f.len() != 7 || f[0] < 0.0 || f[0].fract() != 0.0 {
            return Err(bad());
        }
        let step = f[0] as u64;
        let idx = vio.steps().binary_search(&step).map_err(|_| bad())?;
        out.push(OdomSample {
            robot,
            step,
            local_pose: vio.poses()[idx],
            velocity: Vec3::new(f[1], f[2], f[3]),
            omega_h: f[4],
            omega_v: f[5],
            depth: f[6],
        });
    }
    Ok(out)
}

fn write_anchor_tables(dir: &Path, out: &PipelineOutput) -> Result<()> {
    let mut a = create(dir, "anchors.csv")?;
    writeln!(
        a,
        "epoch,step,robot,x,y,z,mirrored,factor_x,factor_y,factor_z,scale_x,scale_y,scale_z"
    )?;
    let mut w = create(dir, "weights.csv")?;
    writeln!(
        w,
        "epoch,step,robot,w_v,w_a,w_r,w_v_norm,w_a_norm,w_r_norm,total"
    )?;
    for e in &out.epochs {
        let set = &e.anchors;
        for (i, p) in set.anchors.iter().enumerate() {
            let f = e.factors[i];
            let s = e.scales[i].factors;
            writeln!(
                a,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                set.epoch,
                set.step,
                i + 1,
                p.x,
                p.y,
                p.z,
                u8::from(set.mirrored),
                f.x,
                f.y,
                f.z,
                s.x,
                s.y,
                s.z
            )?;
            let r = &e.weights.robots[i];
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                set.epoch,
                set.step,
                i + 1,
                r.raw.velocity,
                r.raw.rotation,
                r.raw.consistency,
                r.normalized.velocity,
                r.normalized.rotation,
                r.normalized.consistency,
                r.total
            )?;
        }
    }
    a.flush()?;
    w.flush()?;
    Ok(())
}

/// Writes the pipeline products shared by simulated and replayed runs.
pub fn write_pipeline_output(dir: &Path, out: &PipelineOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_trajectories(dir, "corrected", out.corrected())?;
    write_trajectories(dir, "global", &out.global)?;
    write_anchor_tables(dir, out)
}

pub fn write_metrics(dir: &Path, report: &AteReport) -> Result<()> {
    fs::write(dir.join("metrics.json"), report.to_json()?)?;
    Ok(())
}

/// Writes every artifact of a simulated run, including `metrics.json`.
pub fn write_run(dir: &Path, run: &SimulatedRun) -> Result<AteReport> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), run.config.to_toml_string()?)?;
    write_trajectories(dir, "gt", &run.sensors.gt)?;
    write_trajectories(dir, "vio", &run.sensors.vio)?;
    for (i, o) in run.sensors.odom.iter().enumerate() {
        let mut w = create(dir, &format!("odom_{}.csv", i + 1))?;
        write_odom_csv(o, &mut w)?;
        w.flush()?;
    }
    let mut r = create(dir, "ranges.csv")?;
    run.sensors.uwb.log.write_csv(&mut r)?;
    r.flush()?;
    write_pipeline_output(dir, &run.output)?;
    let report = run.report(AlignMode::Initial)?;
    write_metrics(dir, &report)?;
    Ok(report)
}

fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let f =
        File::open(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    Trajectory::read_csv(BufReader::new(f))
}

/// Reads `<prefix>_1.csv`, `<prefix>_2.csv`, ... until the first gap.
pub fn read_trajectories(dir: &Path, prefix: &str) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    loop {
        let path: PathBuf = dir.join(format!("{prefix}_{}.csv", out.len() + 1));
        if !path.exists() {
            break;
        }
        out.push(read_trajectory(&path)?);
    }
    Ok(out)
}

/// Recomputes the ATE report of a run directory.
pub fn evaluate_dir(dir: &Path, mode: AlignMode) -> Result<AteReport> {
    if !dir.is_dir() {
        return Err(Error::InvalidInput(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let gt = read_trajectories(dir, "gt")?;
    if gt.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no gt_1.csv in {}",
            dir.display()
        )));
    }
    let vio = read_trajectories(dir, "vio")?;
    let corrected = read_trajectories(dir, "corrected")?;
    let global = read_trajectories(dir, "global")?;
    if vio.len() != gt.len() || corrected.len() != gt.len() || global.len() != gt.len() {
        return Err(Error::InvalidInput(format!(
            "{}: expected {} vio/corrected/global files",
            dir.display(),
            gt.len()
        )));
    }
    let (name, seed) = match fs::read_to_string(dir.join("config.toml")) {
        Ok(text) => {
            let cfg = ScenarioConfig::from_toml_str(&text)?;
            (cfg.name, cfg.seed)
        }
        Err(_) => (String::new(), 0),
    };
    let robots: Vec<RobotTrajectories<'_>> = (0..gt.len())
        .map(|i| RobotTrajectories {
            gt: &gt[i],
            vio: &vio[i],
            corrected: &corrected[i],
            global: &global[i],
        })
        .collect();
    AteReport::compute(&name, seed, &robots, mode)
}

/// Logs for an offline run: a range log plus, per robot, `vio_<i>.csv`,
/// optional `odom_<i>.csv` and optional `gt_<i>.csv`.
#[derive(Clone, Debug)]
pub struct ReplayLogs {
    pub ranges: RangeLog,
    pub vio: Vec<Trajectory>,
    pub odom: Vec<Vec<OdomSample>>,
    /// Present only when every robot has a `gt_<i>.csv`.
    pub gt: Option<Vec<Trajectory>>,
}

/// Loads replay inputs. Robots without `odom_<i>.csv` get odometry samples
/// derived from their trajectory with a constant feature depth.
pub fn read_replay_logs(ranges: &Path, odom_dir: &Path, default_depth: f64) -> Result<ReplayLogs> {
    let f = File::open(ranges)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", ranges.display())))?;
    let ranges = RangeLog::read_csv(BufReader::new(f))?;
    let vio = read_trajectories(odom_dir, "vio")?;
    if vio.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no vio_1.csv in {}",
            odom_dir.display()
        )));
    }
    let mut odom = Vec::with_capacity(vio.len());
    for (i, v) in vio.iter().enumerate() {
        let path = odom_dir.join(format!("odom_{}.csv", i + 1));
        if path.exists() {
            let f = File::open(&path)?;
            odom.push(read_odom_csv(BufReader::new(f), i, v)?);
        } else {
            odom.push(odom_from_trajectory(v, i, default_depth));
        }
    }
    let gt = read_trajectories(odom_dir, "gt")?;
    let gt = (gt.len() == vio.len()).then_some(gt);
    Ok(ReplayLogs {
        ranges,
        vio,
        odom,
        gt,
    })
}
