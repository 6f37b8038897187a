use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use modal_sos::structural::{simulate_modal_data, ShearFrame};
use modal_sos_cli::input::{parse_modal_data, Source};
use modal_sos_cli::output::sha256_hex;
use serde_json::Value;
use tempfile::TempDir;

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modal-sos")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Rows of a CSV without quoted fields, keyed by header.
fn csv(path: &Path) -> Vec<Vec<(String, String)>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

fn field<'a>(row: &'a [(String, String)], key: &str) -> &'a str {
    &row.iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("no column {key}")).1
}

fn num(row: &[(String, String)], key: &str) -> f64 {
    field(row, key).parse().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_writes_the_as_built_mode_and_reads_back_exactly() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sim");
    let model = data("numerical/four_story.toml");
    let o = run(&["simulate", "--model", p(&model), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let src = Source::read(&out.join("modal_data.toml")).unwrap();
    let read = parse_modal_data(&src, 4).unwrap();
    assert_eq!(read.modes.len(), 1);
    let m = &read.modes[0];
    assert!((m.omega - 6.196).abs() <= 5e-3);
    for (got, want) in m.shape.iter().zip([0.395, 0.742, 1.0]) {
        assert!((got - want).abs() <= 1e-3);
    }
    let frame = ShearFrame::uniform(4, 12.06, 10.0).unwrap().with_stiffness(vec![10.0, 10.0, 10.0, 9.0]).unwrap();
    assert_eq!(read, simulate_modal_data(&frame, &[1, 2, 3], 1).unwrap());
    let report = json(&out.join("report.json"));
    assert_eq!(report["inputs"][0]["sha256"], sha256_hex(&fs::read(&model).unwrap()));
}

#[test]
fn simulate_with_every_floor_measured() {
    let tmp = TempDir::new().unwrap();
    let model = data("numerical/four_story.toml");
    let o = run(&["simulate", "--model", p(&model), "--out", p(tmp.path()), "--measured-dofs", "1,2,3,4", "--modes", "4"]);
    assert!(o.status.success());
    let read = parse_modal_data(&Source::read(&tmp.path().join("modal_data.toml")).unwrap(), 4).unwrap();
    assert_eq!(read.modes.len(), 4);
    for m in &read.modes {
        assert_eq!(m.measured_dofs, vec![1, 2, 3, 4]);
        assert_eq!(m.shape.iter().cloned().fold(f64::MIN, f64::max), 1.0);
        assert_eq!(m.reference_unmeasured.as_deref(), Some(&[][..]));
    }
}

#[test]
fn malformed_model_reports_the_line() {
    let tmp = TempDir::new().unwrap();
    let bad = write(
        tmp.path(),
        "bad.toml",
        "weights_lb = [12.06, 12.06]\nstiffness_lbf_in = [10.0, 10.0]\ntheta_map = [[3]]\n",
    );
    let o = run(&["simulate", "--model", p(&bad), "--out", p(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:3:"), "{err}");
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn update_all_methods_on_the_four_story_example() {
    let tmp = TempDir::new().unwrap();
    let o = run(&[
        "update",
        "--model",
        p(&data("numerical/four_story.toml")),
        "--modal-data",
        p(&data("numerical/four_story_modes.toml")),
        "--method",
        "all",
        "--out",
        p(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv(&tmp.path().join("update.csv"));
    let report = json(&tmp.path().join("report.json"));
    let results = report["results"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for (row, r) in rows.iter().zip(results) {
        assert!((num(row, "theta1") + 0.100).abs() <= 1e-3);
        assert!((num(row, "psi1_4") - 1.154).abs() <= 1e-3);
        assert!(num(row, "objective_final") <= 1e-8);
        // the flat table is the report rounded to six digits
        assert_eq!(field(row, "method"), r["method"]);
        let theta = r["theta"][0].as_f64().unwrap();
        assert!((num(row, "theta1") - theta).abs() <= 1e-6 * theta.abs());
        let k4 = r["stiffness_lbf_in"][3].as_f64().unwrap();
        assert!((k4 - 10.0 * (1.0 + theta)).abs() <= 1e-12);
    }
    assert_eq!(field(&rows[0], "certificate"), "GloballyCertified");
}

#[test]
fn complete_measurement_recovers_the_generating_frame() {
    let tmp = TempDir::new().unwrap();
    let model = data("numerical/four_story_complete.toml");
    let sim = tmp.path().join("sim");
    assert!(run(&["simulate", "--model", p(&model), "--out", p(&sim)]).status.success());
    let out = tmp.path().join("up");
    let o = run(&["update", "--model", p(&model), "--modal-data", p(&sim.join("modal_data.toml")), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("report.json"));
    for r in report["results"].as_array().unwrap() {
        let k: Vec<f64> = r["stiffness_lbf_in"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        for (got, want) in k.iter().zip([6.949, 8.103, 9.094, 14.65]) {
            assert!((got - want).abs() <= 1e-6, "{}: {got} vs {want}", r["method"]);
        }
        assert!(r["objective_final"].as_f64().unwrap() <= 1e-10);
    }
}

#[test]
fn empty_modal_data_is_rejected_before_running() {
    let tmp = TempDir::new().unwrap();
    let empty = write(tmp.path(), "empty.toml", "# nothing measured\n");
    let out = tmp.path().join("out");
    let o = run(&["update", "--model", p(&data("numerical/four_story.toml")), "--modal-data", p(&empty), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no modes"));
    assert!(!out.exists());
}

#[test]
fn multistart_is_deterministic_and_reaches_the_bound() {
    let tmp = TempDir::new().unwrap();
    let args = |out: &Path| {
        vec![
            "multistart".to_string(),
            "--model".into(),
            p(&data("surrogate/lab_frame.toml")).into(),
            "--modal-data".into(),
            p(&data("surrogate/lab_modes.toml")).into(),
            "--starts".into(),
            "200".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            p(out).into(),
        ]
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut first = args(&a);
    first.push("--certify".into());
    let o = run(&first.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let second = args(&b);
    assert!(run(&second.iter().map(String::as_str).collect::<Vec<_>>()).status.success());
    let starts = fs::read_to_string(a.join("starts.csv")).unwrap();
    assert_eq!(starts, fs::read_to_string(b.join("starts.csv")).unwrap());
    assert_eq!(starts.lines().count(), 201);

    let report = json(&a.join("report.json"));
    let gamma = report["sos"]["gamma_star"].as_f64().unwrap();
    let best = report["summaries"][0]["best_objective"].as_f64().unwrap();
    assert!((best - gamma).abs() <= 1e-4, "{best} vs {gamma}");
    let hist = csv(&a.join("histogram.csv"));
    assert_eq!(hist.len(), 20);
    assert_eq!(hist.iter().map(|r| num(r, "count") as usize).sum::<usize>(), 200);
}

#[test]
fn reproduce_local_versus_global_rows() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["reproduce", "table1", "--out", p(tmp.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv(&tmp.path().join("table1.csv"));
    assert_eq!(rows.len(), 5);
    let sos = &rows[0];
    assert_eq!(field(sos, "method"), "sos");
    assert!((num(sos, "theta") + 0.100).abs() <= 5e-4);
    assert!((num(sos, "psi4") - 1.154).abs() <= 5e-4);
    assert!(num(sos, "objective").abs() <= 5e-4);
    for row in &rows[3..] {
        assert!((num(row, "theta") + 1.0).abs() <= 1e-3);
        assert!(num(row, "objective") > 1.0);
    }
}

#[test]
fn reproduce_frequencies_and_coefficients() {
    let tmp = TempDir::new().unwrap();
    assert!(run(&["reproduce", "table3-freqs", "--out", p(tmp.path())]).status.success());
    for row in csv(&tmp.path().join("frequencies.csv")) {
        assert!(num(&row, "diff_hz").abs() <= 0.01);
    }
    assert!(run(&["reproduce", "eq6-fixture", "--out", p(tmp.path())]).status.success());
    let rows = csv(&tmp.path().join("coefficients.csv"));
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().all(|r| num(r, "diff_exact").abs() <= 1e-3));
}

#[test]
fn reproduce_grid_minimum_sits_at_the_global_minimizer() {
    let tmp = TempDir::new().unwrap();
    assert!(run(&["reproduce", "fig3-grid", "--out", p(tmp.path())]).status.success());
    let rows = csv(&tmp.path().join("grid.csv"));
    let best = rows
        .iter()
        .min_by(|a, b| num(a, "objective").partial_cmp(&num(b, "objective")).unwrap())
        .unwrap();
    let (t, s) = (num(best, "theta"), num(best, "psi4"));
    // adjacent cells of the minimum: one step either way
    assert!((t - 0.01 - 1e-12..=t + 0.01 + 1e-12).contains(&-0.100), "{t}");
    assert!((s - 0.002 - 1e-12..=s + 0.002 + 1e-12).contains(&1.154), "{s}");
    assert!(tmp.path().join("report.json").exists());
}

#[test]
fn unknown_case_fails() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["reproduce", "table9", "--out", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}
