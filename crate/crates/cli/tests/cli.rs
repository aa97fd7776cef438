use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_anchorloc"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// The scale-error preset cut to `duration` seconds.
fn short_config(dir: &Path, duration: f64) -> PathBuf {
    let text = std::fs::read_to_string(configs().join("robot4_scale.toml")).unwrap();
    let text = text.replace("duration = 240.0", &format!("duration = {duration:.1}"));
    let path = dir.join("short.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), 30.0);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(bin()
        .arg("simulate")
        .arg(&cfg)
        .arg("--out")
        .arg(&a)
        .args(["--seed", "7"]));
    run(bin()
        .arg("simulate")
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .args(["--seed", "7"]));
    let ma = std::fs::read(a.join("metrics.json")).unwrap();
    let mb = std::fs::read(b.join("metrics.json")).unwrap();
    assert_eq!(ma, mb);
    for f in [
        "gt_1.csv",
        "vio_5.csv",
        "corrected_3.csv",
        "anchors.csv",
        "weights.csv",
        "ranges.csv",
    ] {
        assert!(a.join(f).exists(), "{f}");
    }
    let m: serde_json::Value = serde_json::from_slice(&ma).unwrap();
    assert_eq!(m["seed"], 7);
    assert_eq!(m["per_robot"].as_array().unwrap().len(), 5);
}

#[test]
fn evaluate_reproduces_metrics_and_faulty_robot_improves() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), 120.0);
    let dir = tmp.path().join("run");
    run(bin().arg("simulate").arg(&cfg).arg("--out").arg(&dir));
    let before = std::fs::read(dir.join("metrics.json")).unwrap();
    let out = run(bin().arg("evaluate").arg(&dir));
    assert!(String::from_utf8_lossy(&out.stdout).contains("avg"));
    let m: serde_json::Value = serde_json::from_slice(&before).unwrap();
    // Poses round-trip through quaternions in the CSVs, so only the last
    // bits may differ.
    let again: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("metrics.json")).unwrap()).unwrap();
    for (a, b) in m["per_robot"]
        .as_array()
        .unwrap()
        .iter()
        .zip(again["per_robot"].as_array().unwrap())
    {
        for key in ["length_m", "ate_vio", "ate_corrected", "ate_global"] {
            let (x, y) = (a[key].as_f64().unwrap(), b[key].as_f64().unwrap());
            assert!(
                (x - y).abs() <= 1e-9 * x.abs().max(1.0),
                "{key}: {x} vs {y}"
            );
        }
    }
    let r4 = &m["per_robot"][3];
    assert!(r4["ate_corrected"].as_f64().unwrap() < r4["ate_vio"].as_f64().unwrap());

    run(bin().arg("evaluate").arg(&dir).args(["--align", "full"]));
    assert!(dir.join("metrics_full_align.json").exists());
}

#[test]
fn replay_runs_on_written_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), 30.0);
    let dir = tmp.path().join("run");
    run(bin().arg("simulate").arg(&cfg).arg("--out").arg(&dir));
    let out = tmp.path().join("replay");
    run(bin()
        .arg("replay")
        .arg(dir.join("ranges.csv"))
        .arg(&dir)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    assert!(out.join("corrected_5.csv").exists());
    assert!(out.join("metrics.json").exists());
}

#[test]
fn sweep_writes_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), 20.0);
    let out = tmp.path().join("sweep");
    run(bin()
        .arg("sweep")
        .arg(&cfg)
        .args(["--param", "uwb.sigma=0.05,0.2"])
        .arg("--out")
        .arg(&out));
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(doc["param"], "uwb.sigma");
    assert_eq!(doc["runs"].as_array().unwrap().len(), 2);
    assert!(out.join("uwb.sigma=0.2").join("metrics.json").exists());
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "missing.toml", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 1\nname = \"x\"\nbogus = 3\n").unwrap();
    let out = bin()
        .arg("simulate")
        .arg(&bad)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());

    let out = bin()
        .args(["evaluate", "/nonexistent/dir"])
        .output()
        .unwrap();
    assert!(!out.status.success());

    let out = bin().args(["simulate", "--frobnicate"]).output().unwrap();
    assert!(!out.status.success());

    let cfg = configs().join("default.toml");
    let out = bin()
        .arg("sweep")
        .arg(&cfg)
        .args(["--param", "uwb.nonsense=1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
