use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_strata-wave");

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_config(name: &str) -> Value {
    let text = std::fs::read_to_string(configs_dir().join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn run_cfg(cmd: &str, cfg: &Path, out: &Path) -> Output {
    run(&[
        cmd,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn wave_config(targets: &[f64]) -> Value {
    let mut cfg = load_config("gravity_wave.json");
    cfg["solver"]["amplitude_targets"] = json!(targets);
    cfg
}

#[test]
fn homogeneous_laminar_head() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &load_config("homogeneous_laminar.json"));
    let out = run_cfg("laminar", &cfg, tmp.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = read_json(&tmp.path().join("laminar_summary.json"));
    // Q = -2 g p0 κ + κ^{-2} with g = κ = 1, p0 = -1
    assert!((s["Q"].as_f64().unwrap() - 3.0).abs() <= 4.0 * f64::EPSILON);
}

#[test]
fn negative_depth_is_a_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = load_config("homogeneous_laminar.json");
    cfg["params"]["d"] = json!(-1.0);
    let path = write_config(tmp.path(), &cfg);
    assert_eq!(run_cfg("laminar", &path, tmp.path()).status.code(), Some(2));
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    for pointer in ["", "/solver", "/grid", "/params"] {
        let mut cfg = load_config("homogeneous_laminar.json");
        let obj = if pointer.is_empty() {
            &mut cfg
        } else {
            cfg.pointer_mut(pointer).unwrap()
        };
        obj["surprise"] = json!(1);
        let path = write_config(tmp.path(), &cfg);
        assert_eq!(
            run_cfg("laminar", &path, tmp.path()).status.code(),
            Some(2),
            "key under {pointer:?}"
        );
    }
}

#[test]
fn stratified_laminar_matches_golden_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &load_config("stratified_laminar.json"));
    assert!(run_cfg("laminar", &cfg, tmp.path()).status.success());
    let parse = |text: &str| -> Vec<Vec<f64>> {
        text.lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with('p'))
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let ours = parse(&std::fs::read_to_string(tmp.path().join("laminar_profile.csv")).unwrap());
    let golden_text = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/stratified_laminar_golden.csv"),
    )
    .unwrap();
    let golden = parse(&golden_text);
    assert_eq!(ours.len(), golden.len());
    for (a, b) in ours.iter().zip(&golden) {
        assert!((a[0] - b[0]).abs() < 1e-14);
        assert!((a[1] - b[1]).abs() < 1e-10, "H {} vs {}", a[1], b[1]);
        assert!((a[2] - b[2]).abs() < 1e-10, "H_p {} vs {}", a[2], b[2]);
    }
    let q_golden: f64 = golden_text
        .lines()
        .find_map(|l| l.strip_prefix("# Q="))
        .unwrap()
        .parse()
        .unwrap();
    let s = read_json(&tmp.path().join("laminar_summary.json"));
    assert!((s["Q"].as_f64().unwrap() - q_golden).abs() < 1e-10);
}

#[test]
fn zero_target_gives_the_laminar_branch() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &wave_config(&[0.0]));
    let out = run_cfg("continue", &cfg, tmp.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = read_json(&tmp.path().join("branch_summary.json"));
    let states = s["states"].as_array().unwrap();
    assert_eq!(states.len(), 1);
    assert_eq!(states[0]["amplitude"].as_f64(), Some(0.0));
    assert_eq!(states[0]["Q"], s["laminar_Q"]);
}

#[test]
fn solve_is_deterministic_and_hash_stamped() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write_config(a.path(), &wave_config(&[1e-3]));
    for dir in [a.path(), b.path()] {
        let out = run_cfg("solve", &cfg, dir);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let csv_a = std::fs::read_to_string(a.path().join("branch_summary.csv")).unwrap();
    let csv_b = std::fs::read_to_string(b.path().join("branch_summary.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    assert_eq!(csv_a.lines().count(), 3);
    assert_eq!(
        std::fs::read(a.path().join("state.field")).unwrap(),
        std::fs::read(b.path().join("state.field")).unwrap()
    );

    let hash = read_json(&a.path().join("branch_summary.json"))["config_hash"]
        .as_str()
        .unwrap()
        .to_string();
    assert_eq!(hash.len(), 64);
    let out = run_cfg("analyze", &cfg, a.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let path = entry.unwrap().path();
        if path.file_name().unwrap() == "config.json" {
            continue;
        }
        let bytes = std::fs::read(&path).unwrap();
        let head = String::from_utf8_lossy(&bytes[..bytes.len().min(400)]).to_string();
        assert!(
            head.contains(&hash),
            "{} lacks the config hash",
            path.display()
        );
    }
}

#[test]
fn analyze_reports_decay_of_a_solved_wave() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &wave_config(&[1e-3, 2e-3, 4e-3, 1e-2]));
    assert!(run_cfg("solve", &cfg, tmp.path()).status.success());
    assert!(run_cfg("analyze", &cfg, tmp.path()).status.success());
    let r = read_json(&tmp.path().join("regularity_report.json"));
    let fit = &r["surface_decay"]["fit"];
    assert!(fit["rate"].as_f64().unwrap() > 0.0);
    assert!(fit["r_squared"].as_f64().unwrap() >= 0.99);
    // ρ = 1 - 0.1p is entire and β is constant, so both fit with s = 1
    for key in ["rho", "beta"] {
        assert_eq!(
            r["parameter_gevrey"][key]["fit"]["s_hat"].as_f64(),
            Some(1.0),
            "{key}"
        );
    }
    let csv = std::fs::read_to_string(tmp.path().join("decay_surface.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("k,log_abs_c"));
}

#[test]
fn analyze_of_a_laminar_state_is_degenerate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &wave_config(&[0.0]));
    assert!(run_cfg("solve", &cfg, tmp.path()).status.success());
    let out = run_cfg("analyze", &cfg, tmp.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = read_json(&tmp.path().join("regularity_report.json"));
    for d in r["report"]["per_p_decay"].as_array().unwrap() {
        assert!(d["rate"].is_null());
        assert!(d["note"].is_string());
    }
    assert!(r["report"]["em_ratios"]
        .as_array()
        .unwrap()
        .iter()
        .all(|v| v.as_f64() == Some(0.0)));
    assert!(r["surface_decay"]["fit"].is_null());
}

#[test]
fn corrupted_state_is_a_checksum_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &wave_config(&[1e-3]));
    assert!(run_cfg("solve", &cfg, tmp.path()).status.success());
    let path = tmp.path().join("state.field");
    let mut bytes = std::fs::read(&path).unwrap();
    let k = bytes.len() - 100;
    bytes[k] ^= 0x10;
    std::fs::write(&path, bytes).unwrap();
    assert_eq!(run_cfg("analyze", &cfg, tmp.path()).status.code(), Some(6));
}

#[test]
fn unreachable_tolerance_is_divergence() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = wave_config(&[1e-3]);
    cfg["solver"]["tol"] = json!(1e-30);
    cfg["solver"]["max_iter"] = json!(3);
    let path = write_config(tmp.path(), &cfg);
    let out = run_cfg("solve", &path, tmp.path());
    assert_eq!(out.status.code(), Some(3));
    // the partial branch is still written
    let s = read_json(&tmp.path().join("branch_summary.json"));
    assert!(s["failure"].is_string());
}

#[test]
fn stagnating_laminar_flow_exits_with_4() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = load_config("homogeneous_laminar.json");
    // H_p^{-2} = 1 + 2β(p - p0) passes 1e12 well inside the strip
    cfg["params"]["beta"]["coeffs"] = json!([1e13]);
    let path = write_config(tmp.path(), &cfg);
    assert_eq!(run_cfg("laminar", &path, tmp.path()).status.code(), Some(4));
}

#[test]
fn lemma_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = run(&["lemmas", "--out", dir]);
    assert!(out.status.success());
    let t = read_json(&tmp.path().join("lemmas.json"));
    assert_eq!(t["all_ok"], json!(true));
    // 1888 multi-indices with 2 <= |α| <= 60, 199 kernel sums for each k
    assert_eq!(t["rows"].as_array().unwrap().len(), 1888 + 2 * 199);

    let out = run(&["lemmas", "--alpha-max", "2", "--m-max", "1", "--out", dir]);
    assert!(out.status.success());
    let t = read_json(&tmp.path().join("lemmas.json"));
    let rows = t["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["ok"] == json!(true)));

    let out = run(&["lemmas", "--alpha-max", "1", "--m-max", "1", "--out", dir]);
    assert_eq!(out.status.code(), Some(0));
    let t = read_json(&tmp.path().join("lemmas.json"));
    assert!(t["rows"].as_array().unwrap().is_empty());
}
