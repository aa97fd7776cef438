//! One-parameter grid over a scenario file.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use toml::Value;

use anchorloc_core::eval::AlignMode;
use anchorloc_core::sim::output::write_run;
use anchorloc_core::sim::{run_pipeline, ScenarioConfig};

/// Parses `path=v1,v2,...`. Values are read as TOML scalars, so `0.1`,
/// `true` and `"vio"` all work; bare words become strings.
pub fn parse_param(arg: &str) -> Result<(Vec<String>, Vec<Value>)> {
    let (path, values) = arg
        .split_once('=')
        .ok_or_else(|| anyhow!("--param must look like path=v1,v2"))?;
    let path: Vec<String> = path.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        bail!("empty component in parameter path");
    }
    let values: Vec<Value> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(parse_scalar)
        .collect();
    if values.is_empty() {
        bail!("no values given for {}", path.join("."));
    }
    Ok((path, values))
}

fn parse_scalar(s: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {s}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(s.to_string()))
}

/// Sets `path` in `root`, creating missing tables. Numeric components index
/// into arrays.
pub fn set_path(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().ok_or_else(|| anyhow!("empty path"))?;
    let mut cur = root;
    for key in parents {
        cur = match cur {
            Value::Table(t) => t
                .entry(key.clone())
                .or_insert_with(|| Value::Table(toml::Table::new())),
            Value::Array(a) => {
                let i: usize = key
                    .parse()
                    .with_context(|| format!("`{key}` is not an array index"))?;
                let len = a.len();
                a.get_mut(i)
                    .ok_or_else(|| anyhow!("index {i} out of range (length {len})"))?
            }
            _ => bail!("`{key}` is not a table or array"),
        };
    }
    match cur {
        Value::Table(t) => {
            t.insert(last.clone(), value);
        }
        Value::Array(a) => {
            let i: usize = last
                .parse()
                .with_context(|| format!("`{last}` is not an array index"))?;
            let len = a.len();
            *a.get_mut(i)
                .ok_or_else(|| anyhow!("index {i} out of range (length {len})"))? = value;
        }
        _ => bail!("cannot set `{last}` on a scalar"),
    }
    Ok(())
}

pub fn sweep(config: &Path, param: &str, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let text =
        std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let base: Value =
        toml::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    let (path, values) = parse_param(param)?;
    let label = path.join(".");

    let configs = values
        .iter()
        .map(|v| {
            let mut doc = base.clone();
            set_path(&mut doc, &path, v.clone())?;
            let mut cfg = ScenarioConfig::from_toml_str(&toml::to_string(&doc)?)
                .with_context(|| format!("{label} = {v}"))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate().with_context(|| format!("{label} = {v}"))?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let reports = configs
        .par_iter()
        .zip(&values)
        .map(|(cfg, v)| {
            let run = run_pipeline(cfg).with_context(|| format!("{label} = {v}"))?;
            match out {
                Some(dir) => write_run(&dir.join(format!("{label}={v}")), &run),
                None => run.report(AlignMode::Initial),
            }
            .map_err(Into::into)
        })
        .collect::<Result<Vec<_>>>()?;

    println!(
        "{:>16} {:>10} {:>10} {:>10}",
        label, "ate_vio", "ate_corr", "ate_global"
    );
    for (v, r) in values.iter().zip(&reports) {
        println!(
            "{:>16} {:>10.3} {:>10.3} {:>10.3}",
            v.to_string(),
            r.avg.ate_vio,
            r.avg.ate_corrected,
            r.avg.ate_global
        );
    }
    if let Some(dir) = out {
        let rows: Vec<serde_json::Value> = values
            .iter()
            .zip(&reports)
            .map(|(v, r)| {
                serde_json::json!({
                    "value": v.to_string(),
                    "ate_vio": r.avg.ate_vio,
                    "ate_corrected": r.avg.ate_corrected,
                    "ate_global": r.avg.ate_global,
                })
            })
            .collect();
        let doc = serde_json::json!({ "param": label, "runs": rows });
        std::fs::write(
            dir.join("sweep.json"),
            serde_json::to_string_pretty(&doc)? + "\n",
        )?;
    }
    Ok(())
}
