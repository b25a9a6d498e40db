use std::fs;
use std::path::Path;
use std::process::Command;

use tblab::experiment::sha256_hex;

fn tblab(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tblab")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn manifest_entries(dir: &Path) -> Vec<(String, String)> {
    fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .lines()
        .filter_map(|l| l.strip_prefix("artifact = "))
        .map(|l| {
            let (name, hash) = l.split_once(' ').unwrap();
            (name.to_string(), hash.to_string())
        })
        .collect()
}

/// Manifest entries of the CSV artifacts (`config.txt` records the output dir).
fn csv_entries(dir: &Path) -> Vec<(String, String)> {
    manifest_entries(dir).into_iter().filter(|(n, _)| n.ends_with(".csv")).collect()
}

#[test]
fn bands_writes_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("bands");
    let (code, _, err) = tblab(&["bands", "--out", dir.to_str().unwrap(), "--set", "model.num_cells=8"]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(dir.join("bands.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,E1,E2"));
    assert_eq!(lines.count(), 8);
    let entries = manifest_entries(&dir);
    assert!(entries.iter().any(|(n, _)| n == "bands.csv"));
    for (name, hash) in entries {
        assert_eq!(sha256_hex(&fs::read(dir.join(&name)).unwrap()), hash, "{name}");
    }
}

#[test]
fn config_file_with_errors_exits_one_and_lists_all_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "[model]\nnum_cells = 7\nbogus = 1\n[params]\nhbar = -1\n").unwrap();
    let (code, _, err) = tblab(&["basis", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    for line in ["line 2", "line 3", "line 5"] {
        assert!(err.contains(line), "missing {line} in {err}");
    }
}

#[test]
fn phase_rule_violation_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sim");
    let (code, _, err) = tblab(&[
        "simulate",
        "--out",
        dir.to_str().unwrap(),
        "--set",
        "model.num_cells=8",
        "--set",
        "integrator.dt_scale=0.5",
        "--set",
        "integrator.sample_stride=1",
    ]);
    assert_eq!(code, 2, "{err}");
    let manifest = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("status = FAILED propagate"), "{manifest}");
}

#[test]
fn random_initial_data_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        "[model]\nnum_cells = 8\npoints_per_cell = 128\n[params]\nhbar = 0.12\n\
         [integrator]\nfinal_time = 0.3\nsample_stride = 40\ninitial = random\n[output]\nseed = 42\n",
    )
    .unwrap();
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let (code, _, err) = tblab(&["diagnose", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        csv_entries(&dir)
    };
    let a = run("a");
    let b = run("b");
    assert!(a.iter().any(|(n, _)| n == "diagnostics.csv"));
    assert_eq!(a, b);
    let c = {
        let dir = tmp.path().join("c");
        tblab(&["diagnose", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--set", "output.seed=43"]);
        csv_entries(&dir)
    };
    let hash = |v: &[(String, String)], n: &str| v.iter().find(|e| e.0 == n).unwrap().1.clone();
    assert_ne!(hash(&a, "lattice_trajectory.csv"), hash(&c, "lattice_trajectory.csv"));
}

#[test]
fn model1_sweep_on_four_hbars() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sweep");
    let (code, out, err) = tblab(&[
        "sweep-model1",
        "--out",
        dir.to_str().unwrap(),
        "--set",
        "params.hbar_list=0.14, 0.12, 0.1, 0.08",
    ]);
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.contains("PASS model1_slope"));
    let fit = fs::read_to_string(dir.join("fit.csv")).unwrap();
    let slope: f64 = fit.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(slope >= 0.4, "slope {slope}");
    assert_eq!(fs::read_to_string(dir.join("sweep.csv")).unwrap().lines().count(), 5);
}
