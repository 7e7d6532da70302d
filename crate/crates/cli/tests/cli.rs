use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ferroprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ferroprop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ferroprop(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

const GRID: [&str; 6] = [
    "--topology",
    "grid:40x40",
    "--beta",
    "0.34657359027997264",
    "--field",
    "5@0",
];

#[test]
fn bp_residual_decays_like_a_power_law() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "bp");
    let mut args = vec![
        "run", "--algo", "bp", "--steps", "500", "--ref", "long", "--plot", "--out", &out,
    ];
    args.extend(GRID);
    ok(&args);
    let s = summary(Path::new(&out));
    assert!(s["residual_slope"].as_f64().unwrap() <= -1.0, "{s}");
    assert_eq!(s["checks"]["objective_monotone"], true);
    assert_eq!(s["checks"]["residual_within_bound"], true);
    let svg = fs::read_to_string(Path::new(&out).join("residual.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn all_ones_start_beats_all_zeros() {
    let dir = TempDir::new().unwrap();
    let grid = [
        "--topology",
        "grid:40x40",
        "--beta",
        "0.384",
        "--field",
        "5@0",
        "--steps",
        "50",
    ];
    let ones = path(&dir, "ones");
    let mut args = vec!["run", "--algo", "bp", "--ref", "long", "--out", &ones];
    args.extend(grid);
    ok(&args);
    let first = summary(Path::new(&ones));
    let reference = first["reference"].as_f64().unwrap().to_string();

    let zeros = path(&dir, "zeros");
    let mut args = vec![
        "run", "--algo", "bp", "--init", "zeros", "--ref", &reference, "--out", &zeros,
    ];
    args.extend(grid);
    ok(&args);
    let second = summary(Path::new(&zeros));
    let (a, b) = (
        first["reference_gap"].as_f64().unwrap(),
        second["reference_gap"].as_f64().unwrap(),
    );
    assert!(a < b, "ones {a} vs zeros {b}");
    // the bound checks only apply from the all-ones start
    assert!(second["checks"]["residual_within_bound"].is_null());
}

#[test]
fn bp_on_a_tree_matches_exact_log_z() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "tree");
    ok(&[
        "run",
        "--topology",
        "tree:10",
        "--beta",
        "0.9",
        "--field",
        "random:0:1",
        "--seed",
        "4",
        "--algo",
        "bp",
        "--tol",
        "1e-14",
        "--ref",
        "exact",
        "--out",
        &out,
    ]);
    let s = summary(Path::new(&out));
    assert!(s["reference_gap"].as_f64().unwrap() <= 1e-8, "{s}");
    assert_eq!(s["reference_source"], "exact");
    assert_eq!(s["converged"], true);
}

#[test]
fn identical_configs_give_identical_files() {
    let dir = TempDir::new().unwrap();
    for algo in ["mf", "bp", "ellipsoid_mf"] {
        let (a, b) = (path(&dir, &format!("{algo}-a")), path(&dir, &format!("{algo}-b")));
        for out in [&a, &b] {
            let mut args = vec![
                "run",
                "--topology",
                "regular:30:3",
                "--beta",
                "0.4",
                "--field",
                "random:0.1:0.5",
                "--seed",
                "9",
                "--algo",
                algo,
                "--steps",
                "40",
                "--out",
                out,
            ];
            if algo.starts_with("ellipsoid") {
                args.retain(|s| *s != "--steps" && *s != "40");
                args.extend(["--eps", "1e-6"]);
            }
            ok(&args);
        }
        for file in ["trace.csv", "state.csv", "summary.json"] {
            let x = fs::read(Path::new(&a).join(file)).unwrap();
            let y = fs::read(Path::new(&b).join(file)).unwrap();
            assert_eq!(x, y, "{algo}: {file} differs");
        }
    }
}

#[test]
fn generated_file_round_trips_through_run() {
    let dir = TempDir::new().unwrap();
    let model = path(&dir, "model.txt");
    ok(&[
        "gen",
        "--topology",
        "grid:3x3",
        "--beta",
        "0.6",
        "--field",
        "0.2",
        "--out",
        &model,
    ]);
    let (from_file, generated) = (path(&dir, "file"), path(&dir, "gen"));
    ok(&["run", "--model", &model, "--algo", "mf", "--out", &from_file]);
    ok(&[
        "run",
        "--topology",
        "grid:3x3",
        "--beta",
        "0.6",
        "--field",
        "0.2",
        "--algo",
        "mf",
        "--out",
        &generated,
    ]);
    assert_eq!(
        summary(Path::new(&from_file))["model_hash"],
        summary(Path::new(&generated))["model_hash"]
    );

    let stdout = ok(&["gen", "--topology", "grid:3x3", "--beta", "0.6", "--field", "0.2"]).stdout;
    assert_eq!(String::from_utf8(stdout).unwrap(), fs::read_to_string(&model).unwrap());
}

#[test]
fn transfer_matrix_agrees_with_enumeration() {
    let read = |out: Output| {
        let text = String::from_utf8(out.stdout).unwrap();
        text.trim().strip_prefix("log_z = ").unwrap().parse::<f64>().unwrap()
    };
    let model = ["--topology", "cycle:12", "--beta", "0.7", "--field", "random:0:0.5"];
    let mut exact = vec!["exact"];
    exact.extend(model);
    let mut tm = exact.clone();
    tm.extend(["--algo", "transfer_matrix"]);
    let (a, b) = (read(ok(&exact)), read(ok(&tm)));
    assert!((a - b).abs() <= 1e-10 * a.abs(), "{a} vs {b}");
}

#[test]
fn ellipsoid_run_reports_certified_gap() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "el");
    ok(&[
        "run",
        "--topology",
        "cycle:6",
        "--beta",
        "0.5",
        "--field",
        "0.3",
        "--algo",
        "ellipsoid_bethe",
        "--eps",
        "1e-8",
        "--ref",
        "long",
        "--out",
        &out,
    ]);
    let s = summary(Path::new(&out));
    assert!(s["certified_gap"].as_f64().unwrap() <= 0.5e-8);
    assert!(s["reference_gap"].as_f64().unwrap() <= 1e-8);
    let trace = fs::read_to_string(Path::new(&out).join("trace.csv")).unwrap();
    assert_eq!(trace.lines().nth(1), Some("step,feasible,objective_best,violation"));
}

#[test]
fn report_combines_traces_of_one_model() {
    let dir = TempDir::new().unwrap();
    let model = [
        "--topology",
        "grid:6x6",
        "--beta",
        "0.3",
        "--field",
        "0.1",
        "--steps",
        "100",
        "--ref",
        "long",
    ];
    let (mf, bp) = (path(&dir, "mf"), path(&dir, "bp"));
    for (algo, out) in [("mf", &mf), ("bp", &bp)] {
        let mut args = vec!["run", "--algo", algo, "--out", out];
        args.extend(model);
        ok(&args);
    }
    let report = path(&dir, "report.csv");
    let traces = [format!("{mf}/trace.csv"), format!("{bp}/trace.csv")];
    ok(&["report", &traces[0], &traces[1], "--out", &report, "--plot"]);
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("t,mf_density,mf_residual_density,mf_bound_density,bp_density"));
    assert_eq!(
        text.lines()
            .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()))
            .count(),
        100
    );
    assert!(text.contains("residual_within_bound,PASS,PASS"));
    assert!(text.contains("objective_monotone,PASS,PASS"));
    assert!(Path::new(&path(&dir, "report_density.svg")).exists());

    // deterministic for fixed inputs
    let again = path(&dir, "again.csv");
    ok(&["report", &traces[0], &traces[1], "--out", &again]);
    assert_eq!(text, fs::read_to_string(&again).unwrap());

    // a wrong reference makes the sign check fail, but the report is still written
    let out = ferroprop(&["report", &traces[0], "--reference", "mf=-1000", "--out", &again]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("residual_nonnegative"));
}

#[test]
fn report_rejects_mismatched_models_and_empty_input() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a"), path(&dir, "b"));
    ok(&[
        "run",
        "--topology",
        "cycle:5",
        "--beta",
        "0.3",
        "--algo",
        "bp",
        "--steps",
        "5",
        "--out",
        &a,
    ]);
    ok(&[
        "run",
        "--topology",
        "cycle:6",
        "--beta",
        "0.3",
        "--algo",
        "bp",
        "--steps",
        "5",
        "--out",
        &b,
    ]);
    let report = path(&dir, "r.csv");
    let out = ferroprop(&[
        "report",
        &format!("{a}/trace.csv"),
        &format!("{b}/trace.csv"),
        "--out",
        &report,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different models"));
    assert_eq!(ferroprop(&["report", "--out", &report]).status.code(), Some(1));
    assert!(!Path::new(&report).exists());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "x");
    // validation
    assert_eq!(
        ferroprop(&["run", "--algo", "bp", "--out", &out]).status.code(),
        Some(1)
    );
    assert_eq!(
        ferroprop(&[
            "run",
            "--topology",
            "path:4",
            "--beta",
            "0.5",
            "--algo",
            "ellipsoid_mf",
            "--out",
            &out
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        ferroprop(&[
            "run",
            "--topology",
            "hexagon:4",
            "--beta",
            "0.5",
            "--algo",
            "bp",
            "--out",
            &out
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(ferroprop(&["frobnicate"]).status.code(), Some(1));
    let bad = path(&dir, "bad.txt");
    fs::write(&bad, "n 2\nedge 0 1 -1.0\n").unwrap();
    assert_eq!(
        ferroprop(&["run", "--model", &bad, "--algo", "bp", "--out", &out])
            .status
            .code(),
        Some(1)
    );
    // I/O
    let missing = path(&dir, "missing.txt");
    assert_eq!(
        ferroprop(&["run", "--model", &missing, "--algo", "bp", "--out", &out])
            .status
            .code(),
        Some(2)
    );
    // size guard
    assert_eq!(
        ferroprop(&["exact", "--topology", "grid:5x6", "--beta", "0.3"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        ferroprop(&[
            "run",
            "--topology",
            "path:12",
            "--beta",
            "0.3",
            "--algo",
            "exact",
            "--exact-max-n",
            "10",
            "--out",
            &out
        ])
        .status
        .code(),
        Some(3)
    );
    assert_eq!(ferroprop(&["--help"]).status.code(), Some(0));
}
