use std::path::Path;
use std::process::{Command, Output};

use pide_backstep::{Container, NetworkSet};
use serde_json::Value;

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pide-backstep"))
        .args(args)
        .current_dir(dir)
        .env_remove("PDON_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn kernels_container_holds_gains_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&bin(
        dir.path(),
        &["kernels", "--tau", "1.2", "--inverse", "--out", "k.pdon"],
    ));
    assert_eq!(v["tool_version"], pide_backstep::suites::TOOL_VERSION);
    assert_eq!(v["input"]["plant"]["tau"], 1.2);
    let c = Container::read(dir.path().join("k.pdon")).unwrap();
    for name in ["K", "L", "J", "k0", "l_gain", "j_gain", "B", "D", "E"] {
        assert!(c.get(name).is_some(), "{name}");
    }
    assert_eq!(c.get("K").unwrap().shape, vec![51, 51]);
    assert_eq!(c.meta["plant"]["tau"], 1.2);
}

#[test]
fn file_gains_reproduce_analytic_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    stdout_json(&bin(d, &["kernels", "--out", "k.pdon"]));
    stdout_json(&bin(d, &["observer-gains", "--out", "o.pdon"]));
    let common = [
        "simulate",
        "--mode",
        "output_fb",
        "--horizon",
        "2",
        "--format",
        "csv",
    ];
    let file: Vec<&str> = common
        .iter()
        .copied()
        .chain([
            "--gains",
            "file",
            "--kernels-file",
            "k.pdon",
            "--observer-file",
            "o.pdon",
            "--out",
            "a.csv",
        ])
        .collect();
    let analytic: Vec<&str> = common.iter().copied().chain(["--out", "b.csv"]).collect();
    stdout_json(&bin(d, &file));
    stdout_json(&bin(d, &analytic));
    let a = std::fs::read_to_string(d.join("a.csv")).unwrap();
    let b = std::fs::read_to_string(d.join("b.csv")).unwrap();
    assert!(a.starts_with("t,l2_x,l2_v,l2_u,U\n"));
    assert_eq!(a, b);
}

#[test]
fn train_stub_writes_loadable_networks_for_the_matching_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    stdout_json(&bin(
        d,
        &[
            "dataset", "--n", "2", "--seed", "3", "--jobs", "1", "--out", "c.pdon",
        ],
    ));
    stdout_json(&bin(
        d,
        &[
            "train-stub",
            "--dataset",
            "c.pdon",
            "--net",
            "LJ",
            "--out",
            "w",
        ],
    ));
    let nets = NetworkSet::load_dir(d.join("w")).unwrap();
    assert!(nets.l.is_some() && nets.j.is_some() && nets.k.is_none());
    let l = Container::read(d.join("w/L.pdon")).unwrap();
    assert_eq!(l.meta["train_config"]["trained"], false);

    let wrong = bin(
        d,
        &[
            "train-stub",
            "--dataset",
            "c.pdon",
            "--net",
            "Q",
            "--out",
            "w",
        ],
    );
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn infer_evaluates_the_selected_network() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    stdout_json(&bin(
        d,
        &[
            "dataset", "--n", "1", "--kind", "observer", "--jobs", "1", "--out", "q.pdon",
        ],
    ));
    stdout_json(&bin(
        d,
        &[
            "train-stub",
            "--dataset",
            "q.pdon",
            "--net",
            "Q",
            "--out",
            "w",
        ],
    ));
    let v = stdout_json(&bin(
        d,
        &["infer", "--weights-dir", "w", "--net", "Q2", "--h", "0.3"],
    ));
    let values = v["result"]["values"].as_array().unwrap();
    assert_eq!(values.len(), 51);
    assert!(values.iter().all(|x| x.as_f64().unwrap().is_finite()));
    let missing = bin(d, &["infer", "--weights-dir", "w", "--net", "K"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn verify_prints_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&bin(
        dir.path(),
        &["verify", "--suite", "bounds", "--n", "3", "--out", "r.json"],
    ));
    assert_eq!(v["suite"], "bounds");
    assert_eq!(v["passed"], true);
    assert!(dir.path().join("r.json").exists());
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pide-backstep"))
        .args(["observer-gains", "--format", "csv"])
        .current_dir(dir.path())
        .env("PDON_OUT_DIR", dir.path().join("nested"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("nested/observer.csv")).unwrap();
    assert!(text.starts_with("s,q1,q2\n"));
    assert_eq!(text.lines().count(), 52);
}

#[test]
fn exit_codes_separate_usage_numeric_and_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(bin(d, &["simulate", "--flux"]).status.code(), Some(1));
    assert_eq!(
        bin(d, &["kernels", "--tau", "0.2", "--h", "0.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(bin(d, &["kernels", "--ds", "0.03"]).status.code(), Some(1));
    assert_eq!(bin(d, &["simulate", "--dt", "0.5"]).status.code(), Some(2));
    assert_eq!(
        bin(
            d,
            &[
                "simulate",
                "--gains",
                "file",
                "--kernels-file",
                "absent.pdon"
            ]
        )
        .status
        .code(),
        Some(1)
    );
    assert_eq!(bin(d, &["--version"]).status.code(), Some(0));
}
