use std::path::Path;
use std::process::{Command, Output};

const CIRCLE: &str = r#"
experiment = "berry_circle"
seed = 5
replicates = 30
n = [300]
points = [[0], ["pi/2"]]

[manifold]
kind = "circle"
radius = 5

[function]
id = "circle_example"
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manismooth")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn simulate_writes_three_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", CIRCLE);
    let out = tmp.path().join("nested").join("out");
    let o = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["raw.csv", "summary.csv", "run.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert_eq!(read(&out, "raw.csv").lines().count(), 1 + 2 * 30 * 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("wrote"));
}

#[test]
fn reruns_are_byte_identical_and_seed_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", CIRCLE);
    let dirs: Vec<_> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, seed) in dirs.iter().zip(["5", "5", "6"]) {
        let o = run(&["simulate", "--config", &cfg, "--out", dir.to_str().unwrap(), "--seed", seed, "--quiet"]);
        assert!(o.status.success());
        assert!(o.stdout.is_empty());
    }
    assert_eq!(read(&dirs[0], "raw.csv"), read(&dirs[1], "raw.csv"));
    assert_eq!(read(&dirs[0], "summary.csv"), read(&dirs[1], "summary.csv"));
    assert_ne!(read(&dirs[0], "raw.csv"), read(&dirs[2], "raw.csv"));
}

#[test]
fn bad_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &CIRCLE.replace("replicates = 30", "replicates = 3"));
    let o = run(&["simulate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("replicates"));
}

#[test]
fn wrong_subcommand_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", CIRCLE);
    let o = run(&["laplacian", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_output_setting_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", CIRCLE);
    assert_eq!(run(&["simulate", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn unreadable_config_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("none.toml");
    let o = run(&["simulate", "--config", missing.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numeric_failure_exits_3_and_still_writes() {
    let tmp = tempfile::tempdir().unwrap();
    let text = CIRCLE.replace("n = [300]", "n = [30]\nbandwidth = \"fixed:0.001\"\ncentering = \"truth\"\nstatistics = [\"normalized\"]");
    let cfg = write(tmp.path(), "c.toml", &text);
    let out = tmp.path().join("out");
    let o = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(read(&out, "run.json").contains("\"failed\""));
}
