use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use anchorloc_core::eval::{AlignMode, AteReport, RobotTrajectories};
use anchorloc_core::global::InitialPoseMode;
use anchorloc_core::sim::config::{DepthProfile, PipelineConfig};
use anchorloc_core::sim::output::{
    evaluate_dir, read_replay_logs, write_metrics, write_pipeline_output, write_run,
};
use anchorloc_core::sim::pipeline::{run, PipelineInputs};
use anchorloc_core::sim::{run_pipeline, ScenarioConfig};

mod sweep;

#[derive(Parser)]
#[command(
    name = "anchorloc",
    version,
    about = "Range-aided multi-robot localization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Align {
    /// Overlay initial poses only.
    Initial,
    /// Least-squares fit over the whole trajectory (diagnostic).
    Full,
}

impl From<Align> for AlignMode {
    fn from(a: Align) -> Self {
        match a {
            Align::Initial => AlignMode::Initial,
            Align::Full => AlignMode::Full,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario, run the pipeline and write a run directory.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute ATE for a run directory.
    Evaluate {
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "initial")]
        align: Align,
    },
    /// Run a scenario once per value of one config parameter.
    Sweep {
        config: PathBuf,
        /// Dotted path and comma-separated values, e.g. `uwb.sigma=0.05,0.1`.
        /// Array elements are addressed by index: `robots.3.vio.drift_rate=0,0.02`.
        #[arg(long)]
        param: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Writes one run directory per value plus `sweep.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline on recorded logs.
    Replay {
        ranges: PathBuf,
        /// Directory with `vio_<i>.csv`, optional `odom_<i>.csv` and `gt_<i>.csv`.
        odom_dir: PathBuf,
        /// Scenario file whose `pipeline`, `initial_pose_mode` and `seed` are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "replay_out")]
        out: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let run = run_pipeline(&cfg).context("pipeline failed")?;
    let report = write_run(out, &run).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{} anchor epochs, {} flagged steps",
        run.output.epochs.len(),
        run.output.flagged_steps.len()
    );
    print!("{}", report.table());
    Ok(())
}

fn evaluate(dir: &Path, align: AlignMode) -> Result<()> {
    let report = evaluate_dir(dir, align)?;
    match align {
        AlignMode::Initial => write_metrics(dir, &report)?,
        AlignMode::Full => std::fs::write(dir.join("metrics_full_align.json"), report.to_json()?)?,
    }
    print!("{}", report.table());
    Ok(())
}

fn replay(ranges: &Path, odom_dir: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let (pipeline, mode, seed, depth, name) = match config {
        Some(p) => {
            let cfg = load_config(p)?;
            let depth = match cfg.robots.first().map(|r| &r.vio.depth) {
                Some(DepthProfile::Constant(d)) => *d,
                _ => 10.0,
            };
            (
                cfg.pipeline,
                Some(cfg.initial_pose_mode),
                cfg.seed,
                depth,
                cfg.name,
            )
        }
        None => (
            PipelineConfig::default(),
            None,
            0,
            10.0,
            "replay".to_string(),
        ),
    };
    let logs = read_replay_logs(ranges, odom_dir, depth)?;
    let gt_initial: Option<Vec<_>> = logs
        .gt
        .as_ref()
        .and_then(|g| g.iter().map(|t| t.first().copied()).collect());
    let mode = mode.unwrap_or(if gt_initial.is_some() {
        InitialPoseMode::Known
    } else {
        InitialPoseMode::Unknown
    });
    if mode == InitialPoseMode::Known && gt_initial.is_none() {
        bail!(
            "known initial poses need gt_<i>.csv for every robot in {}",
            odom_dir.display()
        );
    }
    let inputs = PipelineInputs {
        dt: logs.vio[0].dt(),
        vio: logs.vio.clone(),
        odom: logs.odom,
        ranges: logs.ranges,
        mode,
        gt_initial,
        seed,
    };
    let output = run(&inputs, &pipeline).context("pipeline failed")?;
    write_pipeline_output(out, &output)?;
    println!(
        "{} anchor epochs, {} flagged steps",
        output.epochs.len(),
        output.flagged_steps.len()
    );
    if let Some(gt) = &logs.gt {
        let robots: Vec<RobotTrajectories<'_>> = (0..gt.len())
            .map(|i| RobotTrajectories {
                gt: &gt[i],
                vio: &logs.vio[i],
                corrected: &output.corrected()[i],
                global: &output.global[i],
            })
            .collect();
        let report = AteReport::compute(&name, seed, &robots, AlignMode::Initial)?;
        write_metrics(out, &report)?;
        print!("{}", report.table());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, seed } => simulate(&config, &out, seed),
        Command::Evaluate { dir, align } => evaluate(&dir, align.into()),
        Command::Sweep {
            config,
            param,
            seed,
            out,
        } => sweep::sweep(&config, &param, seed, out.as_deref()),
        Command::Replay {
            ranges,
            odom_dir,
            config,
            out,
        } => replay(&ranges, &odom_dir, config.as_deref(), &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
