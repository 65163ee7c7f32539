use std::path::Path;
use std::process::{Command, Output};

use maneuver_core::cli::plan_doc::PlanDocument;

fn maneuver(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maneuver")).args(args).current_dir(dir).output().unwrap()
}

fn code(output: &Output) -> i32 {
    output.status.code().unwrap()
}

const CUBIC: &str = r#"
system = "cubic-shift"
polyline = [[0.0], [2.0]]

[seed]
guess = [0.0]

[outputs]
plan = "plan.toml"
"#;

#[test]
fn cubic_plan_round_trips_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cubic.toml"), CUBIC).unwrap();
    let out = maneuver(&["plan", "--scenario", "cubic.toml"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let text = std::fs::read_to_string(dir.path().join("plan.toml")).unwrap();
    let doc = PlanDocument::parse(&text).unwrap();
    assert_eq!(doc.status, "verified");
    assert!(doc.legs.len() >= 3, "{} legs", doc.legs.len());
    assert_eq!(doc.legs[0].alpha_from, vec![0.0]);
    assert_eq!(doc.legs.last().unwrap().alpha_to, vec![2.0]);

    let out = maneuver(&["verify", "--plan", "plan.toml", "--out", "report.toml"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = PlanDocument::parse(&std::fs::read_to_string(dir.path().join("report.toml")).unwrap()).unwrap();
    assert_eq!(report, doc);

    let out = maneuver(&["verify", "--plan", "plan.toml", "--mode", "chained"], dir.path());
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("status = verified"), "{stdout}");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &["plan", "--system", "radial-cubic-2d", "--from", "-1", "--to", "1", "--guess", "-1,-1", "--out", "P"],
        &["basin", "--system", "radial-cubic-2d", "--alpha", "0.5", "--guess", "0.5,0.5", "--out", "P"],
        &["trace", "--system", "logistic", "--from", "0.5", "--to", "3.5", "--guess", "-1", "--out", "P"],
    ];
    for args in runs {
        let first: Vec<&str> = args.iter().map(|a| if *a == "P" { "a.out" } else { a }).collect();
        let second: Vec<&str> = args.iter().map(|a| if *a == "P" { "b.out" } else { a }).collect();
        assert_eq!(code(&maneuver(&first, dir.path())), 0, "{args:?}");
        assert_eq!(code(&maneuver(&second, dir.path())), 0, "{args:?}");
        let a = std::fs::read(dir.path().join("a.out")).unwrap();
        let b = std::fs::read(dir.path().join("b.out")).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{args:?}");
    }
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|name| name.contains(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn star_basin_csv_has_unit_radii() {
    let dir = tempfile::tempdir().unwrap();
    let out = maneuver(&["basin", "--system", "radial-cubic-2d", "--alpha", "1", "--guess", "1,1"], dir.path());
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("theta_or_dir_index,d_1,d_2,radius,open_ended"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 16);
    for row in rows {
        let radius: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert!((radius - 1.0).abs() < 1e-3, "{row}");
    }
}

#[test]
fn single_point_polyline_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.toml"), "system = \"cubic-shift\"\npolyline = [[0.5]]\n").unwrap();
    let out = maneuver(&["plan", "--scenario", "s.toml"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("plan.toml").exists());
}

#[test]
fn bad_scenario_key_names_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.toml"), "system = \"logistic\"\npolyline = [[1.5], [2.5]]\nstep = 3\n").unwrap();
    let out = maneuver(&["trace", "--scenario", "s.toml"], dir.path());
    assert_eq!(code(&out), 2);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("step") && err.contains("line 3"), "{err}");
}

#[test]
fn failed_plan_exits_one() {
    // Starting on the unstable branch: nothing to plan along.
    let dir = tempfile::tempdir().unwrap();
    let out = maneuver(&["plan", "--system", "logistic", "--from", "2", "--to", "2.5", "--guess", "0"], dir.path());
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tampered_plan_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = maneuver(&["plan", "--system", "cubic-shift", "--from", "0", "--to", "1", "--out", "p.toml"], dir.path());
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("p.toml")).unwrap();
    let mut doc = PlanDocument::parse(&text).unwrap();
    doc.legs[0].x_to[0] += 0.25;
    std::fs::write(dir.path().join("p.toml"), doc.to_toml()).unwrap();
    assert_eq!(code(&maneuver(&["verify", "--plan", "p.toml"], dir.path())), 2);
}
