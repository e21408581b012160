use std::collections::HashSet;
use std::path::Path;

use manismooth::derive_seed;
use manismooth::harness::config::ViolationKind;
use manismooth::harness::output::{run_json, RAW_FILE, RAW_HEADER, RUN_FILE, SUMMARY_FILE, SUMMARY_HEADER};
use manismooth::harness::{parse_config, parse_raw_csv, parse_summary_csv, run_experiment, write_results, HarnessError};

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn shipped(name: &str) -> String {
    std::fs::read_to_string(configs_dir().join(format!("{name}.toml"))).unwrap()
}

const SMALL: &str = r#"
experiment = "berry_torus"
seed = 11
replicates = 30
n = [200, 400]
points = [[0, "pi"], ["-pi/2", "pi/2"], [1, 2]]
statistics = ["unnormalized", "normalized"]

[manifold]
kind = "torus"
major = 0.5
minor = 0.3333333333333333

[function]
id = "torus_example"
"#;

#[test]
fn row_counts_follow_the_grid() {
    let res = run_experiment(&parse_config(SMALL).unwrap());
    assert!(res.is_complete(), "{:?}", res.failure);
    assert_eq!(res.summary.len(), 3 * 2 * 2);
    assert_eq!(res.raw.len(), 3 * 2 * 30 * 2);
    assert_eq!(res.wall_times.len(), 2);
    assert_eq!(res.ball_distances.len(), 2 * 2);
    for row in &res.summary {
        assert_eq!(row.replicates, 30);
        assert_eq!(row.x.len(), 3);
        assert_eq!(row.theta.len(), 2);
    }
}

#[test]
fn files_read_back_exactly() {
    let res = run_experiment(&parse_config(SMALL).unwrap());
    let dir = tempfile::tempdir().unwrap();
    write_results(&res, dir.path()).unwrap();

    let raw = std::fs::read_to_string(dir.path().join(RAW_FILE)).unwrap();
    let summary = std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(raw.lines().next(), Some(RAW_HEADER));
    assert_eq!(summary.lines().next(), Some(SUMMARY_HEADER));
    assert_eq!(parse_raw_csv(&raw).unwrap(), res.raw);
    assert_eq!(parse_summary_csv(&summary).unwrap(), res.summary);

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(RUN_FILE)).unwrap()).unwrap();
    assert_eq!(json["status"], "complete");
    assert_eq!(json["config_hash"], res.config_hash.as_str());
    assert_eq!(json["config"].as_str().map(|c| parse_config(c).unwrap().hash()), Some(res.config_hash.clone()));
    assert_eq!(json["summary_rows"], res.summary.len());
}

#[test]
fn missing_directory_is_an_io_error_naming_the_path() {
    let res = run_experiment(&parse_config(SMALL).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("not").join("here");
    match write_results(&res, &missing) {
        Err(HarnessError::Io { path, .. }) => assert_eq!(path, missing),
        other => panic!("expected an IO error, got {other:?}"),
    }
}

#[test]
fn numeric_failure_keeps_partial_rows() {
    let text = r#"
experiment = "berry_circle"
seed = 3
replicates = 30
n = [30]
points = [[0]]
bandwidth = "fixed:0.001"
centering = "truth"
statistics = ["normalized"]

[manifold]
kind = "circle"
radius = 5

[function]
id = "circle_example"
"#;
    let res = run_experiment(&parse_config(text).unwrap());
    assert!(!res.is_complete());
    assert!(res.raw.len() < 30);
    assert!(run_json(&res).contains("\"failed\""));
    let dir = tempfile::tempdir().unwrap();
    write_results(&res, dir.path()).unwrap();
}

#[test]
fn all_violations_are_reported_together() {
    let text = r#"
experiment = "berry_circle"
seed = 1
replicates = 5
n = [1, 100]
points = [[0, 1]]
colour = "blue"

[manifold]
kind = "torus"
major = 0.5
minor = 0.75

[function]
id = "circle_example"
"#;
    let err = parse_config(text).unwrap_err();
    let fields: Vec<&str> = err.violations.iter().map(|v| v.field.as_str()).collect();
    for f in ["colour", "replicates", "n[0]", "manifold.minor"] {
        assert!(fields.contains(&f), "{f} missing from {fields:?}");
    }
    assert!(err.violations.iter().any(|v| v.kind == ViolationKind::Schema));
    assert!(err.violations.iter().any(|v| v.kind == ViolationKind::Range));
}

#[test]
fn shipped_configs_parse() {
    for name in ["berry_circle", "berry_torus", "rates", "laplacian", "hks", "regression"] {
        let cfg = parse_config(&shipped(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(cfg.experiment.name(), name);
    }
}

#[test]
fn shipped_configs_match_their_limit_variances() {
    for name in ["berry_circle", "berry_torus", "laplacian", "regression"] {
        let cfg = parse_config(&shipped(name)).unwrap();
        let largest = *cfg.n.iter().max().unwrap();
        let res = run_experiment(&cfg);
        assert!(res.is_complete(), "{name}: {:?}", res.failure);
        for row in res.summary.iter().filter(|r| r.n == largest) {
            if let Some(ratio) = row.var_ratio {
                assert!((0.5..=2.0).contains(&ratio), "{name} {} point {:?}: var/sigma2 = {ratio}", row.statistic, row.point);
            }
        }
    }
}

#[test]
fn derived_seeds_do_not_collide() {
    let seeds: HashSet<u64> = (0..100_000).map(|i| derive_seed(20240501, i)).collect();
    assert_eq!(seeds.len(), 100_000);
}
