use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn acfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acfc"))
        .args(args)
        .env_remove("ACFC_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn bode_table1_full_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = acfc(&[
        "bode", "--preset", "table1", "--from", "10e3", "--to", "100e6", "--ppd", "20", "--out",
        out,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("bode.csv"));
    assert_eq!(rows.len(), 81);
    let summary = json(&dir.path().join("bode_summary.json"));
    let g = summary["mid_band_gain"].as_f64().unwrap();
    assert!((g - 0.72).abs() < 0.01, "{g}");
    assert!(summary["upper_3db_hz"].as_f64().is_some());
}

#[test]
fn bode_header_and_precision() {
    let dir = tempfile::tempdir().unwrap();
    let o = acfc(&[
        "bode",
        "--preset",
        "table1",
        "--ppd",
        "1",
        "--from",
        "1e4",
        "--to",
        "1e6",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("bode.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "frequency_hz,gain_re,gain_im,gain_mag,gain_db,zin_re,zin_im,zin_mag"
    );
    let rows = csv_rows(&dir.path().join("bode.csv"));
    assert_eq!(rows.len(), 3);
    let f = |r: &csv::StringRecord| r[0].parse::<f64>().unwrap();
    assert_eq!(f(&rows[0]), 1e4);
    assert_eq!(f(&rows[2]), 1e6);
    let mantissa = rows[1][3].split('e').next().unwrap().replace(['.', '-'], "");
    assert!(mantissa.len() >= 9, "{}", &rows[1][3]);
}

#[test]
fn bode_missing_parameter_is_named() {
    let o = acfc(&["bode", "--set", "r1=1.27"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("transformer."), "{}", stderr(&o));
}

#[test]
fn simulate_prototype() {
    let dir = tempfile::tempdir().unwrap();
    let o = acfc(&[
        "simulate",
        "--preset",
        "prototype",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&dir.path().join("report.json"));
    let vcc = r["v_cc_mean"].as_f64().unwrap();
    assert!((vcc - 80.0).abs() < 0.02 * 80.0, "{vcc}");
    assert_eq!(r["zvs_s1"], Value::Bool(true));
    assert_eq!(r["converged"], Value::Bool(true));

    let text = std::fs::read_to_string(dir.path().join("waveforms.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "time_s,mode,i_lm_a,i_lr_a,v_ds1_v,v_cc_v,i_lo_a,v_co_v,i_d3_a,i_d4_a,v_n1_v,gate_s1,gate_s2"
    );
    let rows = csv_rows(&dir.path().join("waveforms.csv"));
    assert!(rows.len() > 2000);
    let first: f64 = rows[0][0].parse().unwrap();
    let last: f64 = rows.last().unwrap()[0].parse().unwrap();
    assert_eq!(first, 0.0);
    assert!((last - 500e-9).abs() < 1e-15, "{last}");
}

#[test]
fn simulate_above_the_zvs_bound_loses_zvs() {
    let dir = tempfile::tempdir().unwrap();
    let o = acfc(&[
        "simulate",
        "--preset",
        "prototype",
        "--set",
        "fs=8e6",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&dir.path().join("report.json"));
    assert_eq!(r["zvs_s1"], Value::Bool(false));
}

#[test]
fn simulate_rejects_duty_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let o = acfc(&[
        "simulate",
        "--preset",
        "prototype",
        "--set",
        "d=1.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("duty cycle"), "{}", stderr(&o));
}

#[test]
fn simulate_non_convergence_still_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = acfc(&[
        "simulate",
        "--preset",
        "prototype",
        "--set",
        "max_cycles=2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let r = json(&dir.path().join("report.json"));
    assert_eq!(r["converged"], Value::Bool(false));
    assert!(r["residual"].as_f64().unwrap().is_finite());
}

#[test]
fn check_prototype_passes() {
    let o = acfc(&["check", "--preset", "prototype", "--set", "fs=2e6"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(!text.contains("FAIL"), "{text}");
    assert!(text.contains("650 kHz"));
}

#[test]
fn check_strict_failure() {
    let o = acfc(&["check", "--preset", "prototype", "--set", "fs=8e6", "--strict"]);
    assert_eq!(code(&o), 3);
    let o = acfc(&["check", "--preset", "prototype", "--set", "fs=8e6"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn check_without_parameters_is_a_config_error() {
    assert_eq!(code(&acfc(&["check"])), 1);
}

#[test]
fn check_writes_flat_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = acfc(&[
        "check",
        "--preset",
        "prototype",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let r = json(&dir.path().join("check.json"));
    assert_eq!(r["all_pass"], Value::Bool(true));
    assert!(r["fs_max.limit"].as_f64().unwrap() > 5.4e6);
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let cfg_out = dir.path().join("from_config");
    std::fs::write(
        &cfg,
        format!(
            "preset = \"prototype\"\n[converter]\nfs = 4e6\n[output]\ndir = {:?}\n",
            cfg_out.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = acfc(&[
        "check",
        cfg.to_str().unwrap(),
        "--set",
        "fs=9e6",
        "--strict",
        "--out",
        out.to_str().unwrap(),
    ]);
    // The override pushes fs past fs_max.
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    let o = acfc(&["check", "--config", cfg.to_str().unwrap(), "--strict"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(cfg_out.join("check.json").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[converter]\nfrequency = 2e6\n").unwrap();
    let o = acfc(&["check", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("frequency"));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_acfc"))
        .args(["bode", "--preset", "table1", "--ppd", "2"])
        .env("ACFC_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("bode.csv").exists());
}

#[test]
fn sweep_paper_frequencies_keep_zvs() {
    let dir = tempfile::tempdir().unwrap();
    let o = acfc(&[
        "sweep",
        "--preset",
        "prototype",
        "--param",
        "fs",
        "--values",
        "1.1e6,1.4e6,1.9e6,2.5e6",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 4);
    let values: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(values, vec![1.1e6, 1.4e6, 1.9e6, 2.5e6]);
    for r in &rows {
        assert_eq!(&r[11], "true", "{r:?}");
    }
}

#[test]
fn sweep_zvs_boundary_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = acfc(&[
        "sweep",
        "--preset",
        "prototype",
        "--values",
        "4e6,5e6,6e6,7e6",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("sweep.csv"));
    let zvs: Vec<bool> = rows.iter().map(|r| &r[11] == "true").collect();
    let fs_max = 5.465e6;
    // The verdict flips between the grid points that bracket fs_max.
    let expected: Vec<bool> = [4e6, 5e6, 6e6, 7e6].iter().map(|&f| f < fs_max).collect();
    assert_eq!(zvs, expected, "simulated ZVS at 4, 5, 6, 7 MHz");
}

#[test]
fn sweep_empty_range_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for args in [
        vec!["sweep", "--preset", "prototype", "--from", "2e6", "--to", "1e6", "--out", d],
        vec!["sweep", "--preset", "prototype", "--from", "1e6", "--to", "2e6", "--points", "0", "--out", d],
        vec!["sweep", "--preset", "prototype", "--values", "", "--out", d],
    ] {
        assert_eq!(code(&acfc(&args)), 1, "{args:?}");
    }
}

#[test]
fn sweep_point_failure_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = acfc(&[
        "sweep",
        "--preset",
        "prototype",
        "--param",
        "d",
        "--values",
        "0.5,1.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    let rows = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][2], "true");
    assert!(rows[1][15].contains("duty"), "{:?}", rows[1]);
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = acfc(&[
            "sweep",
            "--preset",
            "prototype",
            "--values",
            "1.4e6,2e6,2.5e6",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        let o = acfc(&[
            "simulate",
            "--preset",
            "prototype",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
    }
    for f in ["sweep.csv", "report.json", "waveforms.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between identical runs");
    }
}

#[test]
fn presets_match_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = acfc(&[
        "check",
        "--preset",
        "prototype",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let r = json(&dir.path().join("check.json"));
    assert_eq!(r["fs_max.operating"].as_f64(), Some(2e6));
    assert_eq!(r["cc_min.operating"].as_f64(), Some(1e-6));
    assert_eq!(r["lr_min.operating"].as_f64(), Some(3.9e-6));
}
