use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use unimodal_cli::manifest::sha256_hex;
use unimodal_cli::settings::to_config_text;

const BIN: &str = env!("CARGO_BIN_EXE_unimodal-clt");

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("UNIMODAL_CLT_THREADS")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_CLT: &[&str] = &[
    "clt-surrogate",
    "--samples",
    "100",
    "--orbit-length",
    "200",
    "--grid",
    "4096",
];

#[test]
fn quantities_at_full_tent() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "quantities",
            "--family",
            "tent",
            "--t",
            "2.0",
            "--phi",
            "identity",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["L"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-6);
    assert!((v["S"].as_f64().unwrap() - 1.0).abs() < 0.02);
    assert!((v["J"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert_eq!(json(&dir.path().join("quantities.json")), v);
}

#[test]
fn uniform_density_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["density", "--family", "tent", "--t", "2.0", "--n", "1024"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("density.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1024);
    for r in rows {
        let v: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!((v - 1.0).abs() <= 1e-8);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["quantities", "--phi", "x"], dir.path());
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("'t'"));
    assert!(!dir.path().join("manifest.json").exists());

    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(64));
    assert_eq!(run(&[], dir.path()).status.code(), Some(64));
    assert_eq!(run(&["--help"], dir.path()).status.code(), Some(0));

    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "t = 1.8\nthis line has no separator\n").unwrap();
    let out = run(&["orbit", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(64));

    // Window reaching the non-mixing range fails validation.
    let out = run(
        &["clt-surrogate", "--window", "1.2,1.9", "--samples", "100"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));

    // Slope 1.2 is not mixing: power iteration cannot settle.
    let out = run(&["density", "--t", "1.2", "--n", "256"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn manifest_lists_digests_of_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(SMALL_CLT, dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["command"], "clt-surrogate");
    let files = m["files"].as_array().unwrap();
    let names: Vec<&str> = files.iter().map(|f| f["name"].as_str().unwrap()).collect();
    for want in ["samples.csv", "summary.json", "cdf.dat"] {
        assert!(names.contains(&want), "{names:?}");
    }
    for f in files {
        let bytes = fs::read(dir.path().join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_hex(&bytes));
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
    }
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["run_id"], m["run_id"]);
    assert_eq!(summary["config"]["samples"], 100);
    let s = &summary["summary"];
    assert_eq!(
        s["retained"].as_u64().unwrap() + s["excluded"].as_u64().unwrap(),
        100
    );
    let header = fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert!(header.starts_with("t,h_eff,raw,normalized\n"));
}

#[test]
fn echoed_config_reproduces_samples() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    assert_eq!(
        run(&[SMALL_CLT, &["--seed", "99"]].concat(), &first)
            .status
            .code(),
        Some(0)
    );
    let m = json(&first.join("manifest.json"));
    assert_eq!(m["seed"], 99);
    let config: std::collections::BTreeMap<String, String> = m["config"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.clone(), v.as_str().unwrap().to_string()))
        .collect();
    let conf = dir.path().join("echo.conf");
    fs::write(&conf, to_config_text(&config)).unwrap();
    let second = dir.path().join("second");
    let out = run(
        &["clt-surrogate", "--config", conf.to_str().unwrap()],
        &second,
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        fs::read(first.join("samples.csv")).unwrap(),
        fs::read(second.join("samples.csv")).unwrap()
    );
    assert_eq!(json(&second.join("manifest.json"))["run_id"], m["run_id"]);

    // A different seed draws different parameters.
    let third = dir.path().join("third");
    run(&[SMALL_CLT, &["--seed", "100"]].concat(), &third);
    assert_ne!(
        fs::read(first.join("samples.csv")).unwrap(),
        fs::read(third.join("samples.csv")).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&[SMALL_CLT, &["--threads", "1"]].concat(), &a);
    let out = Command::new(BIN)
        .args(SMALL_CLT)
        .arg("--out-dir")
        .arg(&b)
        .env("UNIMODAL_CLT_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        fs::read(a.join("samples.csv")).unwrap(),
        fs::read(b.join("samples.csv")).unwrap()
    );
    let out = Command::new(BIN)
        .args(["orbit", "--t", "1.8"])
        .arg("--out-dir")
        .arg(dir.path())
        .env("UNIMODAL_CLT_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn remaining_subcommands_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[(&[&str], &str)] = &[
        (
            &["orbit", "--t", "1.8", "--n", "10", "--mode", "compensated"],
            "orbit.csv",
        ),
        (&["partition", "--t", "1.8", "--j", "4"], "partition.csv"),
        (
            &["partition", "--param-window", "1.6,1.8", "--j", "5"],
            "partition.csv",
        ),
        (
            &["wild-check", "--samples", "100", "--grid", "4096"],
            "wild_check.csv",
        ),
        (
            &[
                "modulus", "--t", "1.8", "--n", "4096", "--steps", "0.1,0.01",
            ],
            "modulus.csv",
        ),
        (
            &[
                "lipschitz-probe",
                "--samples",
                "100",
                "--grid",
                "4096",
                "--orbit-lengths",
                "10,40",
            ],
            "lipschitz.csv",
        ),
        (
            &[
                "ly-check",
                "--t",
                "1.9",
                "--n",
                "1024",
                "--trials",
                "16",
                "--sizes",
                "8,9,10,11",
            ],
            "summary.json",
        ),
        (
            &[
                "variance-scaling",
                "--samples",
                "100",
                "--grid",
                "4096",
                "--neg-log-h",
                "50,100,150,200",
            ],
            "samples.csv",
        ),
        (
            &[
                "clt-direct",
                "--samples",
                "100",
                "--grid",
                "4096",
                "--direct-grid",
                "4096",
                "--h",
                "0.01",
            ],
            "samples.csv",
        ),
    ];
    for (i, (args, file)) in cases.iter().enumerate() {
        let out_dir = dir.path().join(i.to_string());
        let out = run(args, &out_dir);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(out_dir.join(file).exists(), "{args:?}");
        assert!(out_dir.join("manifest.json").exists());
    }
    let ly = json(&dir.path().join("6").join("summary.json"));
    assert!(ly["resolvent"]["rows"].as_array().unwrap().len() == 4);
    let v = json(&dir.path().join("7").join("summary.json"));
    assert_eq!(v["summary"]["variance_table"].as_array().unwrap().len(), 4);
}
