use std::f64::consts::LN_2;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isac_beamkit::linalg::CMat;
use isac_beamkit::pcrb::{assemble_pfim, pcrb_theta};
use isac_beamkit::HybridDesign;
use isac_beamkit_cli::config::{default_config, load_scenario, read_config};
use isac_beamkit_cli::export::{read_records, Format, COLUMNS};
use serde_json::Value;

fn default_json() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac-beamkit")).args(args).output().unwrap()
}

fn cli_to(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac-beamkit")).args(args).arg("--out").arg(out).output().unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Capacity by bisection on the water level over the eigenmodes of H^H H.
fn water_filling_capacity(h: &CMat, power: f64, noise: f64) -> f64 {
    let g = h.adjoint() * h;
    let gains: Vec<f64> = g.symmetric_eigen().eigenvalues.iter().map(|e| e.max(0.0) / noise).filter(|&x| x > 0.0).collect();
    let used = |level: f64| -> f64 { gains.iter().map(|gi| (level - 1.0 / gi).max(0.0)).sum() };
    let (mut lo, mut hi) = (0.0, power + gains.iter().map(|gi| 1.0 / gi).fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if used(mid) < power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    gains.iter().map(|gi| (1.0 + (lo * gi - 1.0).max(0.0)).ln()).sum()
}

#[test]
fn default_file_loads_in_linear_units() {
    let s = load_scenario(&default_json(), &[]).unwrap();
    assert!(rel(s.power, 1.0) < 1e-12);
    assert!(rel(s.noise_comm, 1e-12) < 1e-12);
    assert!(rel(s.noise_sense, 1e-12) < 1e-12);
    assert!(rel(s.rate_target, 4.5 * LN_2) < 1e-15);
    assert_eq!((s.arrays.n_tx, s.arrays.n_rx, s.arrays.n_rf_tx, s.arrays.n_rf_rx), (8, 12, 3, 6));
    assert_eq!(read_config(&default_json(), &[]).unwrap(), default_config());
}

#[test]
fn overrides_replace_fields() {
    let s = load_scenario(&default_json(), &["n_rf_tx=2".into(), "channel.user_angle=0.1".into()]).unwrap();
    assert_eq!(s.arrays.n_rf_tx, 2);
    assert_eq!(s.channel_model.unwrap().user_angle(), Some(0.1));
    assert!(load_scenario(&default_json(), &["no_such_key=1".into()]).is_err());
}

#[test]
fn indivisible_receive_split_is_a_config_error() {
    let cfg = default_json();
    let out = cli(&["pcrb", "--scenario", cfg.to_str().unwrap(), "--set", "n_rf_rx=5"]);
    assert_eq!(out.status.code(), Some(1));
    let diag: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["status"], "invalid");
}

#[test]
fn usage_errors_exit_with_two() {
    let cfg = default_json();
    let out = cli(&["pcrb", "--scenario", cfg.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&["sweep", "--scenario", cfg.to_str().unwrap(), "--values", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pcrb_record_matches_library() {
    let cfg = default_json();
    let out = cli(&["pcrb", "--scenario", cfg.to_str().unwrap(), "--set", "quadrature_points=256"]);
    assert_eq!(out.status.code(), Some(0));
    let rec: Value = serde_json::from_slice(&out.stdout).unwrap();
    let p = &rec["pfim"];
    let jtt = p["j_theta_theta"].as_f64().unwrap();
    let fpt = p["f_p_theta"].as_f64().unwrap();
    assert_eq!(p["j_theta_alpha"], serde_json::json!([0.0, 0.0]));
    let bound = rec["pcrb_theta"].as_f64().unwrap();
    assert!(rel(bound, 1.0 / (jtt + fpt)) < 1e-14);

    let s = load_scenario(&cfg, &["quadrature_points=256".into()]).unwrap();
    let design = HybridDesign::all_ones(&s.arrays, 1, s.power);
    let want = pcrb_theta(&assemble_pfim(&s, &design).unwrap()).unwrap();
    assert_eq!(bound, want);
}

#[test]
fn infeasible_target_reports_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = default_json();
    let path = dir.path().join("diag.json");
    let sets = ["--set", "rate_target_bits=200", "--set", "quadrature_points=128"];
    let mut args = vec!["optimize-isac", "--scenario", cfg.to_str().unwrap()];
    args.extend(sets);
    let out = cli_to(&args, &path);
    assert_eq!(out.status.code(), Some(1));
    let diag: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(diag["status"], "infeasible");
    let s = load_scenario(&cfg, &[]).unwrap();
    let cap = water_filling_capacity(&s.channels()[0], s.power, s.noise_comm);
    assert!(rel(diag["capacity_nats"].as_f64().unwrap(), cap) < 1e-9);
    assert!(rel(diag["capacity_bits"].as_f64().unwrap(), cap / LN_2) < 1e-9);
    assert!(diag["max_rate_nats"].as_f64().unwrap() <= cap * (1.0 + 1e-9));
    assert_eq!(diag["rate_target_bits"].as_f64().unwrap(), 200.0);
}

fn small_sweep(format: &str, out: &Path) -> Output {
    let cfg = default_json();
    cli_to(
        &[
            "sweep", "--scenario", cfg.to_str().unwrap(), "--format", format, "--var", "rate_bits", "--values", "0,1,40",
            "--schemes", "fully_digital,random_phase(5)", "--set", "quadrature_points=128",
        ],
        out,
    )
}

#[test]
fn sweep_table_shape_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("t.csv");
    let json_path = dir.path().join("t.json");
    assert_eq!(small_sweep("csv", &csv_path).status.code(), Some(0));
    assert_eq!(small_sweep("json", &json_path).status.code(), Some(0));

    let text = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], COLUMNS.join(","));

    let from_csv = read_records(&csv_path, Format::Csv).unwrap();
    let from_json = read_records(&json_path, Format::Json).unwrap();
    assert_eq!(from_csv, from_json);
    let order: Vec<(f64, &str)> = from_csv.iter().map(|r| (r.value, r.scheme.as_str())).collect();
    assert_eq!(
        order,
        vec![(0.0, "fully_digital"), (0.0, "random_phase(5)"), (1.0, "fully_digital"), (1.0, "random_phase(5)"), (40.0, "fully_digital"), (40.0, "random_phase(5)")]
    );
    for r in &from_csv {
        assert_eq!(r.rate_bits, r.rate_nats / LN_2);
        assert_eq!(r.wall_ms, 0.0);
        // 40 bits is beyond the channel: those cells are infeasible rows
        assert_eq!(r.feasible, r.value < 40.0);
    }
    // the fully digital bound is no worse than a random hybrid draw
    for pair in from_csv.chunks(2).take(2) {
        assert!(pair[0].pcrb_theta.unwrap() <= pair[1].pcrb_theta.unwrap());
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(small_sweep("csv", &a).status.code(), Some(0));
    assert_eq!(small_sweep("csv", &b).status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn tampered_table_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    assert_eq!(small_sweep("csv", &path).status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[1].split(',').map(String::from).collect();
    fields[6] = "1.0".into();
    lines[1] = fields.join(",");
    std::fs::write(&path, lines.join("\n")).unwrap();
    assert!(read_records(&path, Format::Csv).is_err());
}

#[test]
fn optimized_design_feeds_back_into_pcrb() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = default_json();
    let rec_path = dir.path().join("opt.json");
    let sets = ["--set", "quadrature_points=128", "--set", "n_tx=4", "--set", "n_rx=4", "--set", "n_rf_rx=2", "--set", "n_rf_tx=2"];
    let mut args = vec!["optimize-sensing", "--scenario", cfg.to_str().unwrap()];
    args.extend(sets);
    let out = cli_to(&args, &rec_path);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rec: Value = serde_json::from_slice(&std::fs::read(&rec_path).unwrap()).unwrap();
    let trace: Vec<f64> = rec["trace"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(trace.windows(2).all(|w| w[1] <= w[0]));

    let mut args = vec!["pcrb", "--scenario", cfg.to_str().unwrap(), "--design", rec_path.to_str().unwrap()];
    args.extend(sets);
    let out = cli(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let again: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rel(again["pcrb_theta"].as_f64().unwrap(), rec["pcrb_theta"].as_f64().unwrap()) < 1e-12);
}
