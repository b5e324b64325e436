use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use sha2::{Digest, Sha256};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_qsd")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
}

fn write_scenario(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(format!("{name}.toml"));
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

const SMALL_JC: &str = "name = \"small\"\n[bath]\nkind = \"discrete\"\nfrequencies = [1.0, 1.4]\ncouplings = [0.6, 0.3]\n\
detuning = 1.0\n[grid]\nhorizon = 2.0\nn_points = 401\n[run]\nseed = 9\nn_traj = 500\nn_samples = 4\nkernel_points = 9\n\
mercer_points = 61\nn_max = 1\n";

#[test]
fn lambda_markov_gamma_two() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        "m",
        "name = \"m\"\n[bath]\nkind = \"markov\"\nrate = 2.0\n[grid]\nhorizon = 3.0\nn_points = 601\n",
    );
    let out = dir.path().join("out");
    let o = run(&[
        "lambda",
        "--scenario",
        sc.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("lambda.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "abs_lambda").unwrap();
    for line in text.lines().skip(1) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cells[col] - (-cells[0]).exp()).abs() < 1e-12);
    }
}

#[test]
fn unknown_command_prints_usage_and_exits_two() {
    let o = run(&["transmogrify", "--scenario", "x.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn config_error_names_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        "bad",
        "name = \"bad\"\n[bath]\nkind = \"discrete\"\nfrequencies = [1.0]\n[grid]\nhorizon = 1.0\nn_points = 11\n",
    );
    let o = run(&[
        "lambda",
        "--scenario",
        sc.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("bath.couplings"), "{err}");
}

#[test]
fn numerical_guard_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        "coarse",
        "name = \"coarse\"\n[bath]\nkind = \"exponential\"\namplitude = 50.0\ndecay = 0.1\n[grid]\nhorizon = 10.0\nn_points = 11\n",
    );
    let o = run(&[
        "lambda",
        "--scenario",
        sc.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step size too large"));
}

#[test]
fn replay_is_byte_identical_and_manifest_checksums_match() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "small", SMALL_JC);
    for command in ["kernel", "mercer", "sample", "lambda", "unravel", "oracle"] {
        let mut bodies = Vec::new();
        for (k, threads) in ["1", "3"].iter().enumerate() {
            let out = dir.path().join(format!("{command}_{k}"));
            let o = run(&[
                command,
                "--scenario",
                sc.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--threads",
                threads,
                "--quiet",
            ]);
            assert_eq!(
                o.status.code(),
                Some(0),
                "{command}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
            let manifest: Value =
                serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
            assert_eq!(manifest["seed"], 9);
            assert_eq!(manifest["command"], command);
            assert_eq!(manifest["grid"]["n_points"], 401);
            assert!(manifest["scenario_text"].as_str().unwrap().contains("frequencies"));
            assert!(manifest["versions"]["qsd-core"].is_string());
            let mut files = Vec::new();
            for rec in manifest["files"].as_array().unwrap() {
                let name = rec["name"].as_str().unwrap();
                let bytes = std::fs::read(out.join(name)).unwrap();
                assert_eq!(rec["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
                assert!(!bytes.contains(&b'\r'));
                files.push((name.to_string(), bytes));
            }
            assert!(!files.is_empty());
            bodies.push(files);
        }
        assert_eq!(bodies[0], bodies[1], "{command} output differs between runs");
    }
}

#[test]
fn seed_flag_changes_monte_carlo_output() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "small", SMALL_JC);
    let mut bodies = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(seed);
        let o = run(&[
            "unravel",
            "--scenario",
            sc.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "--quiet",
        ]);
        assert_eq!(o.status.code(), Some(0));
        bodies.push(std::fs::read(out.join("rho.csv")).unwrap());
    }
    assert_ne!(bodies[0], bodies[1]);
}

#[test]
fn default_output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(bin())
        .args([
            "lambda",
            "--scenario",
            scenario("jc_one_mode").to_str().unwrap(),
            "--quiet",
        ])
        .env("QSD_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("jc_one_mode/lambda/lambda.csv").exists());
    assert!(dir.path().join("jc_one_mode/lambda/manifest.json").exists());
}

#[test]
fn csv_numbers_carry_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "small", SMALL_JC);
    let out = dir.path().join("k");
    assert_eq!(
        run(&[
            "kernel",
            "--scenario",
            sc.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--quiet"
        ])
        .status
        .code(),
        Some(0)
    );
    let text = std::fs::read_to_string(out.join("kernel.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t,s,re_K,im_K"));
    let cell = text.lines().nth(2).unwrap().split(',').nth(2).unwrap();
    let mantissa = cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mantissa.len(), 17, "{cell}");
}
