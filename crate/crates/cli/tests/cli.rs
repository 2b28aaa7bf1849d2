use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dnes::Report;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
}

fn dnes(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dnes"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn static_run_succeeds_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dnes(&["run"], &scenario("s1_static"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("exit_code = 0"));
    for name in ["trajectory.csv", "report.toml", "summary.csv"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
}

#[test]
fn report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dnes(&["run"], &scenario("s3_binding"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("report.toml")).unwrap();
    let report = Report::from_kv_str(&text).unwrap();
    assert!(report.verdicts_pass());
    assert!(report.x_error <= 1e-4);
    assert_eq!(report.players, 6);
    assert_eq!(Report::from_kv_str(&report.to_kv_string().unwrap()).unwrap(), report);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines, vec![Report::csv_header(), report.to_csv_row().as_str()]);
}

#[test]
fn unbalanced_network_is_a_verdict_failure() {
    let dir = tempfile::tempdir().unwrap();
    let permissive = dnes(&["run"], &scenario("s2_unbalanced"), &dir.path().join("permissive"));
    assert_eq!(permissive.status.code(), Some(2), "{}", stderr(&permissive));
    assert!(stdout(&permissive).contains("conservation_ok = false"));

    let source = fs::read_to_string(scenario("s2_unbalanced")).unwrap();
    let strict_source = source.replace("require_assumptions = false", "require_assumptions = true");
    let strict = dir.path().join("strict.toml");
    fs::write(&strict, strict_source).unwrap();
    let out = dnes(&["run"], &strict, &dir.path().join("strict"));
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("simulated = false"));
    assert!(!dir.path().join("strict").join("trajectory.csv").exists());
}

#[test]
fn malformed_config_reports_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seed = 1\nt_end = \"soon\"\n").unwrap();
    let out = dnes(&["run"], &path, dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));

    fs::write(&path, "seed = 1\n\n[game]\nfamily = \"quadratic\"\nfoo = 3\n").unwrap();
    let out = dnes(&["solve-ne"], &path, dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown field `foo`"), "{}", stderr(&out));
}

#[test]
fn missing_config_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dnes(&["run"], &dir.path().join("absent.toml"), dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bounds_without_p_asks_for_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dnes(&["bounds"], &scenario("bounds_without_p"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("p = <value>"), "{}", stderr(&out));
}

#[test]
fn bounds_example_prints_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = dnes(&["bounds"], &scenario("bounds_example"), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let line = text.lines().find(|l| l.starts_with("delta2_star")).unwrap();
    let value: f64 = line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!((value - 0.014_407_924_358_397_12).abs() <= 1e-12);
}

#[test]
fn check_graph_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let joint = dnes(&["check-graph"], &scenario("split_ring"), dir.path());
    assert_eq!(joint.status.code(), Some(0));
    assert!(stdout(&joint).contains("instantaneous_connected = [false, false]"));
    assert!(stdout(&joint).contains("jointly_connected = true"));

    let disjoint = dnes(&["check-graph"], &scenario("disjoint"), dir.path());
    assert_eq!(disjoint.status.code(), Some(2));
    assert!(stdout(&disjoint).contains("jointly_connected = false"));
}

#[test]
fn solve_ne_on_unconstrained_game() {
    let dir = tempfile::tempdir().unwrap();
    let out = dnes(&["solve-ne"], &scenario("unconstrained"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("vi_pass = true"));
}

#[test]
fn same_seed_gives_identical_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    for out in [&first, &second] {
        let run = dnes(&["run", "--seed", "99"], &scenario("s2_switching"), out);
        assert_eq!(run.status.code(), Some(0));
    }
    let a = fs::read(first.join("trajectory.csv")).unwrap();
    let b = fs::read(second.join("trajectory.csv")).unwrap();
    assert_eq!(a, b);
    let other = dir.path().join("c");
    dnes(&["run", "--seed", "100"], &scenario("s2_switching"), &other);
    assert_ne!(a, fs::read(other.join("trajectory.csv")).unwrap());
}

#[test]
fn batch_runs_each_config_in_its_own_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dnes"))
        .args(["batch", "--jobs", "3", "--out"])
        .arg(dir.path())
        .arg(scenario("s1_static"))
        .arg(scenario("s3_binding"))
        .arg(scenario("s2_unbalanced"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    for name in ["s1_static", "s3_binding", "s2_unbalanced"] {
        assert!(dir.path().join(name).join("report.toml").is_file(), "{name}");
    }
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.contains("s1_static.toml") && l.ends_with("= 0")));
    assert!(text.lines().any(|l| l.contains("s2_unbalanced.toml") && l.ends_with("= 2")));
}
