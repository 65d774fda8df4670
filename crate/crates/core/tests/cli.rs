use std::path::Path;
use std::process::{Command, Output};

use fedmf::config::ExperimentConfig;

fn fedmf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedmf"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("spawn fedmf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = "data_path = synthetic:200x300:4\nepochs = 3\nk = 20\nn_negatives = 50\n";

#[test]
fn run_twice_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.cfg"), SMALL).unwrap();
    for out in ["a.csv", "b.csv"] {
        let o = fedmf(dir.path(), &["run", "exp.cfg", "--out", out, "--seed", "7"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("user-level epsilon = k*epsilon = 50"));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("epoch,hr_at_2,hr_at_5,hr_at_10,loss,upload_bytes,download_bytes\n"));
    assert_eq!(text.lines().count(), 4);

    let o = fedmf(
        dir.path(),
        &["run", "exp.cfg", "--out", "c.csv", "--seed", "8"],
    );
    assert!(o.status.success());
    assert_ne!(std::fs::read(dir.path().join("c.csv")).unwrap(), b);
}

#[test]
fn zero_epochs_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.cfg"), SMALL).unwrap();
    let o = fedmf(
        dir.path(),
        &["run", "exp.cfg", "--set", "epochs=0", "--out", "t.csv"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn random_mode_sits_at_chance() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedmf(
        dir.path(),
        &[
            "run",
            "--set",
            "data_path=synthetic:2000x1000:2",
            "--mode",
            "random",
            "--out",
            "r.csv",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    let hr10: f64 = line
        .split_whitespace()
        .find_map(|t| t.strip_prefix("hr@10="))
        .and_then(|t| t.split('±').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((hr10 - 0.10).abs() <= 0.03, "{line}");
}

#[test]
fn sweep_counts_rows_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}sweep_epsilon = 0.5, 6\nsweep_k = 1, 25\noutput_path = grid.csv\n");
    std::fs::write(dir.path().join("grid.cfg"), cfg).unwrap();
    let o = fedmf(dir.path(), &["sweep", "grid.cfg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "epsilon,k,n_users,n_items,hr_at_2,hr_at_5,hr_at_10"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0.5,1,full,full,"));

    let o = fedmf(dir.path(), &["sweep", "grid.cfg"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("0 completed, 4 already present"));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("grid.csv")).unwrap(),
        text
    );
}

#[test]
fn one_point_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.cfg"), SMALL).unwrap();
    assert!(fedmf(dir.path(), &["run", "exp.cfg", "--out", "run.csv"])
        .status
        .success());
    assert!(
        fedmf(dir.path(), &["sweep", "exp.cfg", "--out", "sweep.csv"])
            .status
            .success()
    );
    let run = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let last: Vec<&str> = run.lines().last().unwrap().split(',').collect();
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let row: Vec<&str> = sweep.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[4..7], &last[1..4]);
}

#[test]
fn failed_sweep_point_gives_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}sweep_sizes = 50x100, 5000x100\noutput_path = g.csv\n");
    std::fs::write(dir.path().join("g.cfg"), cfg).unwrap();
    let o = fedmf(dir.path(), &["sweep", "g.cfg"]);
    assert!(!o.status.success());
    let text = std::fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert_eq!(text.lines().count(), 2, "good point still written");
}

#[test]
fn costs_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedmf(dir.path(), &["costs", "--items", "9781"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("download,195620,3912400,3912.4"), "{out}");
    assert!(out.contains("upload,400,8000,8.0"), "{out}");
    assert!(!fedmf(dir.path(), &["costs", "--items", "10", "--k", "0"])
        .status
        .success());
    assert!(!fedmf(dir.path(), &["run", "--epsilon", "-1"])
        .status
        .success());

    std::fs::write(dir.path().join("bad.cfg"), "data_path = x\nepsilonn = 2\n").unwrap();
    let o = fedmf(dir.path(), &["run", "bad.cfg"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("bad.cfg:2") && err.contains("epsilonn"),
        "{err}"
    );
}

#[test]
fn summarize_groups_runs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.cfg"), SMALL).unwrap();
    for seed in ["1", "2"] {
        let out = format!("s{seed}.csv");
        assert!(fedmf(
            dir.path(),
            &["run", "exp.cfg", "--seed", seed, "--out", &out]
        )
        .status
        .success());
    }
    let o = fedmf(dir.path(), &["summarize", "s1.csv", "s2.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("epoch,runs,hr_at_2_mean,hr_at_2_std"));
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,2,"));
}

#[test]
fn config_file_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.cfg");
    let mut c = ExperimentConfig::parse(SMALL, "inline").unwrap();
    c.sweep_k = vec![1, 50, 100, 250];
    std::fs::write(&path, c.to_text()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), c);
}

#[test]
fn data_dir_variable_sets_default_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fedmf"))
        .current_dir(dir.path())
        .env("FEDMF_DATA_DIR", "/nonexistent/fedmf-data")
        .args(["run", "--out", "x.csv"])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/fedmf-data/ratings.csv"));
}
