//! End-to-end CLI behavior: exit codes, CSV round-trips, flag handling.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ccgeo")
}

fn sandbox(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ccgeo_cli_{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, content).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

#[test]
fn ccdist_euclidean_prints_interval() {
    let dir = sandbox("ccdist");
    let scn = write(
        &dir,
        "e.scn",
        "distribution = euclidean:2\np = 0,0\nq = 3,4\nseed = 5\nsolver.restarts = 2\nsolver.segments = 6\n",
    );
    let out = run(&["ccdist", "--scenario", scn.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("lower=5\n"), "{text}");
    let upper: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("upper="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((upper - 5.0).abs() / 5.0 < 1e-3);
}

#[test]
fn ccdist_unreachable_exits_2() {
    let dir = sandbox("unreachable");
    let scn = write(
        &dir,
        "u.scn",
        "distribution = plane:2-of-3\np = 0,0,0\nq = 0,0,0.5\nseed = 5\nsolver.restarts = 2\n",
    );
    let out = run(&["ccdist", "--scenario", scn.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("unreachable"), "{err}");
}

#[test]
fn malformed_scenario_exits_1() {
    let dir = sandbox("malformed");
    let scn = write(&dir, "bad.scn", "distribution = heisenberg\np = 0,0\n");
    // Missing q entirely.
    let out = run(&["ccdist", "--scenario", scn.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    // Unknown distribution name.
    let scn2 = write(&dir, "bad2.scn", "distribution = moebius\np = 0,0\nq = 1,1\nseed = 1\n");
    let out2 = run(&["ccdist", "--scenario", scn2.to_str().unwrap()]);
    assert_eq!(out2.status.code(), Some(1));
}

#[test]
fn smooth_rejects_non_horizontal_input_with_exit_1() {
    let dir = sandbox("smooth_reject");
    let curve = write(&dir, "vertical.csv", "t,x1,x2,x3\n0,0,0,0\n1,0,0,1\n");
    let scn = write(
        &dir,
        "s.scn",
        &format!(
            "distribution = heisenberg\ndomain = -1:1,-1:1,-1:1\ncurve = {}\neps = 0.1\nseed = 1\n",
            curve.display()
        ),
    );
    let out = run(&["smooth", "--scenario", scn.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("not horizontal"), "{err}");
}

#[test]
fn emitted_csv_round_trips_through_the_loader() {
    let dir = sandbox("roundtrip");
    let scn = write(
        &dir,
        "f.scn",
        "distribution = heisenberg\np = 0.1,-0.2,0\nv = 0.7,0.4,0.1\nduration = 0.8\n",
    );
    let out_dir = dir.join("out");
    let out = run(&[
        "flow",
        "--scenario",
        scn.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(out_dir.join("flow_path.csv")).unwrap();
    let curve = ccgeo::io::curve_from_csv(&csv).unwrap();
    assert_eq!(ccgeo::io::curve_to_csv(&curve), csv);
}

#[test]
fn eps_list_flag_overrides_scenario() {
    let dir = sandbox("epslist");
    let scn = write(
        &dir,
        "z.scn",
        "distribution = heisenberg\nbase = 0,0,0\ngenerators = 1,0,0; 0,1,0\n\
         coeffs = 0.5,0.5\neps = 0.05\nduration = 1\nseed = 1\n",
    );
    let out = run(&[
        "zigzag",
        "--scenario",
        scn.to_str().unwrap(),
        "--eps-list",
        "0.2,0.1,0.05",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("convergence.0.eps=0.2"), "{text}");
    assert!(text.contains("convergence.2.eps=0.05"), "{text}");
    assert!(text.contains("convergence_pass=true"), "{text}");
}

#[test]
fn verify_fails_threshold_with_exit_1() {
    let dir = sandbox("verify_fail");
    let scn = write(
        &dir,
        "v.scn",
        "family = heisenberg-left\ndomain = -1:1,-1:1,-1:1\nseed = 7\nthresholds.k_max = 1.01\n",
    );
    let out = run(&["verify", "--scenario", scn.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("judgment.k_emp.pass=false"), "{text}");
    assert!(text.contains("overall=FAIL"), "{text}");
}

#[test]
fn fixtures_regenerate_is_reproducible() {
    let dir = sandbox("fixtures");
    let out1 = dir.join("a");
    let out2 = dir.join("b");
    assert!(run(&["fixtures", "regenerate", "--out", out1.to_str().unwrap()])
        .status
        .success());
    assert!(run(&["fixtures", "regenerate", "--out", out2.to_str().unwrap()])
        .status
        .success());
    for entry in std::fs::read_dir(&out1).unwrap() {
        let name = entry.unwrap().file_name();
        let a = std::fs::read(out1.join(&name)).unwrap();
        let b = std::fs::read(out2.join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs");
    }
}

#[test]
fn smooth_runs_the_bundled_scenario_end_to_end() {
    let dir = sandbox("smooth_ok");
    let fx = dir.join("fx");
    assert!(run(&["fixtures", "regenerate", "--out", fx.to_str().unwrap()])
        .status
        .success());
    let scn = fx.join("smooth_circle_lift.scn");
    let out_dir = dir.join("out");
    let out = run(&[
        "smooth",
        "--scenario",
        scn.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("sweep.3.error_within_bound=true"), "{text}");
    assert!(out_dir.join("smooth_sigma.csv").exists());
}
