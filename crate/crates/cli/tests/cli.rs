use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn crane_mpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crane-mpc")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const GRID: &str = "[environment]\norigin = [-11.2, -11.2, -6.0]\nresolution = 0.1\ndims = [224, 224, 190]\n";

fn short_scenario(extra_run: &str, extra: &str) -> String {
    format!(
        "name = \"short\"\n\n[reference]\nwaypoints = [[-0.2, 0.4, -0.4, 1.0, 0.0], [0.2, 0.4, -0.4, 1.0, 0.0]]\n\
         v_limit = [0.3, 0.2, 0.2, 0.3, 0.6]\na_limit = [0.3, 0.3, 0.3, 0.4, 0.8]\n\n{GRID}{extra}\n\
         [[disturbances]]\ntime = 0.5\nimpulse = [0.2, 0.0]\n\n[run]\nduration = 1.5\n{extra_run}"
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn bundled_scenarios_validate() {
    let listed = crane_mpc(&["list-scenarios"]);
    assert_eq!(code(&listed), 0);
    let names: Vec<String> = String::from_utf8(listed.stdout).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(names.len(), 15);
    let mut args = vec!["validate"];
    args.extend(names.iter().map(String::as_str));
    let out = crane_mpc(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn control_period_off_the_plant_grid_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let file = write(dir.path(), "bad.toml", &short_scenario("control_period = 0.0125\n", ""));
    let out = crane_mpc(&["validate", &file]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("integer multiple"), "{}", stderr(&out));
}

#[test]
fn late_obstacle_is_named() {
    let dir = TempDir::new().unwrap();
    let obstacle = "[[environment.obstacles]]\nname = \"late_stump\"\nmin = [5.0, 0.0, -6.0]\nmax = [6.0, 1.0, 0.0]\ninsert_at = 40.0\n";
    let file = write(dir.path(), "late.toml", &short_scenario("", obstacle));
    let out = crane_mpc(&["validate", &file]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("late_stump"), "{}", stderr(&out));
}

#[test]
fn unknown_keys_are_reported_with_their_line() {
    let dir = TempDir::new().unwrap();
    let file = write(dir.path(), "typo.toml", &short_scenario("durration = 3.0\n", ""));
    let out = crane_mpc(&["run", &file]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("durration") && stderr(&out).contains("line"), "{}", stderr(&out));
}

#[test]
fn capped_runs_write_identical_logs() {
    let dir = TempDir::new().unwrap();
    let file = write(dir.path(), "short.toml", &short_scenario("", ""));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = crane_mpc(&["run", &file, "--iteration-cap", "3", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let log_a = fs::read(a.join("log.csv")).unwrap();
    assert_eq!(log_a, fs::read(b.join("log.csv")).unwrap());
    let text = String::from_utf8(log_a).unwrap();
    assert_eq!(text.lines().count(), 1 + 15);
    assert!(text.starts_with("t,q0,q1,q2,q3,q4,q5,q6,"));
    assert!(a.join("timing.csv").exists() && a.join("metrics.json").exists());

    let report = crane_mpc(&["report", a.to_str().unwrap()]);
    assert_eq!(code(&report), 0);
    let table = String::from_utf8(report.stdout).unwrap();
    assert_eq!(table.lines().count(), 2, "{table}");
}

#[test]
fn paired_report_gives_the_on_run_a_positive_margin() {
    let dir = TempDir::new().unwrap();
    let o = crane_mpc(&[
        "run",
        "sway_near_obstacle_on",
        "sway_near_obstacle_off",
        "--iteration-cap",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!([0, 5].contains(&code(&o)), "{}", stderr(&o));
    let on = dir.path().join("sway_near_obstacle_on");
    let off = dir.path().join("sway_near_obstacle_off");
    let report = crane_mpc(&["report", on.to_str().unwrap(), off.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&report), 0);
    let rows: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(rows[0]["partner"], "sway_near_obstacle_off");
    assert!(rows[0]["delta_min_continuous_sd"].as_f64().unwrap() > 0.0, "{rows}");
}

#[test]
fn report_needs_run_directories() {
    assert_eq!(code(&crane_mpc(&["report"])), 2);
    let dir = TempDir::new().unwrap();
    let out = crane_mpc(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("metrics.json"), "{}", stderr(&out));
}

#[test]
fn unknown_scenario_is_a_validation_error() {
    let out = crane_mpc(&["validate", "no_such_scenario"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("no_such_scenario"));
}
