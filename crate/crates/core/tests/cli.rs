mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::scenario_path;

fn relaymatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaymatch")).args(args).output().unwrap()
}

fn churn_text() -> String {
    std::fs::read_to_string(scenario_path("churn.toml")).unwrap()
}

/// The churn scenario with extra top-level keys inserted before the first
/// table.
fn churn_with(dir: &Path, name: &str, extra: &str) -> String {
    let text = churn_text().replacen("\n[link]", &format!("\n{extra}\n[link]"), 1);
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
name = "small"
seed = 1
matching_class = "class3"
area_m = [2100.0, 1000.0, 200.0]
oracle = true

[link]
carrier_freq_hz = 2.4e9
bandwidth_hz = 1.0e6
noise_power_w = 4.0e-15
path_loss_exponent = 3.0
half_duplex_factor = 0.5

[[drones]]
id = 1
role = "destination"
position_m = [2000.0, 500.0, 100.0]
tx_power_w = 0.1

[[drones]]
id = 10
role = "relay"
position_m = [1000.0, 400.0, 150.0]
tx_power_w = 0.1
radio_count = 2

[[drones]]
id = 11
role = "relay"
position_m = [1000.0, 700.0, 150.0]
tx_power_w = 0.1
radio_count = 1

[[generate]]
role = "source"
count = 4
region_min_m = [0.0, 0.0, 50.0]
region_max_m = [200.0, 1000.0, 150.0]
tx_power_w = 0.1
demand_bps = [0.3e6, 1.0e6]
destination = 1
"#;

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_accepts_the_shipped_scenarios() {
    for name in ["churn.toml", "sweep_template.toml"] {
        let o = relaymatch(&["validate", scenario_path(name).to_str().unwrap()]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).ends_with(": ok\n"));
    }
}

#[test]
fn invalid_scenarios_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let quota = churn_with(dir.path(), "quota.toml", "");
    let text = std::fs::read_to_string(&quota).unwrap() + "\n[[quotas]]\nrelay = 2\nquota = 0\n";
    std::fs::write(&quota, text).unwrap();
    let dup = dir.path().join("dup.toml");
    let text = churn_text()
        + "\n[[drones]]\nid = 1\nrole = \"destination\"\nposition_m = [2000.0, 0.0, 100.0]\ntx_power_w = 0.1\n";
    std::fs::write(&dup, text).unwrap();
    let unknown = churn_with(dir.path(), "unknown.toml", "colour = \"blue\"");
    let missing = dir.path().join("nope.toml");

    for (path, needle) in [
        (quota.as_str(), "quota"),
        (dup.to_str().unwrap(), "duplicate"),
        (unknown.as_str(), "colour"),
        (missing.to_str().unwrap(), "nope.toml"),
    ] {
        let o = relaymatch(&["validate", path]);
        assert_eq!(o.status.code(), Some(1), "{path}");
        assert!(stderr(&o).to_lowercase().contains(needle), "{path}: {}", stderr(&o));
    }
}

#[test]
fn search_cap_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = churn_with(dir.path(), "capped.toml", "max_search_iterations = 1");
    let out = dir.path().join("out");
    let o = relaymatch(&["run", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn oracle_cap_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = churn_with(dir.path(), "big.toml", "oracle_cap = 1000");
    let out = dir.path().join("out");
    let o = relaymatch(&["oracle", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn oracle_report_bounds_the_engine() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    let out = dir.path().join("out");
    let o = relaymatch(&["oracle", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("small.oracle.json")).unwrap()).unwrap();
    // 4 sources, each unmatched or on one of 3 radios
    assert_eq!(report["enumerated"], 256);
    assert!(report["engine_satisfaction"].as_f64().unwrap() <= report["optimum"].as_f64().unwrap() + 1e-12);
}

#[test]
fn run_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let churn = scenario_path("churn.toml");
    let mut outputs = Vec::new();
    for (sub, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let out = dir.path().join(sub);
        let o = relaymatch(&["run", churn.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let csv = std::fs::read(out.join("churn.metrics.csv")).unwrap();
        let summary = std::fs::read(out.join("churn.summary.json")).unwrap();
        outputs.push((csv, summary));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0].0, outputs[2].0);
    let csv = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("iteration,global_satisfaction,matched_count,blocking_or_improving_count,event")
    );
    assert!(csv.contains(",departure:8"));
    assert!(csv.contains(",arrival:5"));
}

#[test]
fn engine_override_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let churn = scenario_path("churn.toml");
    let o = relaymatch(&["run", churn.to_str().unwrap(), "--engine", "class1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("churn.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["matching_class"], "class1");
}

#[test]
fn sweep_writes_one_row_per_size_and_engine() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let template = scenario_path("sweep_template.toml");
    let o = relaymatch(&[
        "sweep",
        template.to_str().unwrap(),
        "--sizes",
        "3,6",
        "--reps",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
    let rows: Vec<&str> = stdout.lines().filter(|l| l.starts_with("3,") || l.starts_with("6,")).collect();
    assert_eq!(rows.len(), 4, "{stdout}");
    // a single replication has no spread
    for row in rows {
        let std: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(std, 0.0);
    }
}
