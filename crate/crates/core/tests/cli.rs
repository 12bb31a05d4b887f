use std::path::PathBuf;
use std::process::{Command, Output};

use startrack::simulator::ScenarioConfig;
use startrack::{propagate_quaternion, AngularVelocity, Quaternion, UnitVec3};

fn startrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_startrack"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("startrack-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

/// Run config with a `[scenario]` table.
fn write_scenario(path: &PathBuf, scenario: &ScenarioConfig) {
    let mut doc = toml::Table::new();
    doc.insert("scenario".into(), toml::Value::try_from(scenario).unwrap());
    std::fs::write(path, toml::to_string(&doc).unwrap()).unwrap();
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn build_db_writes_pairs_and_binary() {
    let text = stdout(&startrack(&["build-db", "--format", "csv"]));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("cos_angle,angle_deg,id_a,id_b"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() > 50_000);
    assert!(rows.windows(2).all(|w| w[0][0] <= w[1][0]));

    let bin = scratch("pairs.bin");
    let o = startrack(&["build-db", "--format", "json", "--out", bin.to_str().unwrap()]);
    stdout(&o);
    assert_eq!(&std::fs::read(&bin).unwrap()[..4], b"SPDB");
    // The binary database is accepted wherever a catalog is.
    let out = stdout(&startrack(&[
        "bench", "worst", "--runs", "20", "--max-spikes", "1", "--format", "json", "--catalog",
        bin.to_str().unwrap(),
    ]));
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["records"].as_array().unwrap().len(), 2);
    assert!(doc["records"][0]["ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn run_case_json_summary_and_frames() {
    let cfg = scratch("short.toml");
    let short = ScenarioConfig::geo(300.0, 1800.0);
    write_scenario(&cfg, &short);
    let frames = scratch("frames.csv");
    let out = stdout(&startrack(&[
        "--seed", "3", "run-case", "2", "--trials", "3", "--format", "json", "--config",
        cfg.to_str().unwrap(), "--frames", frames.to_str().unwrap(),
    ]));
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["n_trials"], 3);
    assert_eq!(doc["epochs"].as_array().unwrap().len(), 7);
    let rows: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(&frames).unwrap()).unwrap();
    assert_eq!(rows.len(), 21);

    // Same seed, same output.
    let again = stdout(&startrack(&[
        "--seed", "3", "run-case", "2", "--trials", "3", "--format", "json", "--config",
        cfg.to_str().unwrap(),
    ]));
    assert_eq!(out, again);
}

#[test]
fn check_mode_exits_nonzero_on_violation() {
    // Half an hour of data cannot meet the one-hour and five-hour targets.
    let cfg = scratch("half-hour.toml");
    let short = ScenarioConfig::stellar_compass(300.0, 1800.0);
    write_scenario(&cfg, &short);
    let o = startrack(&["run-case", "1", "--trials", "2", "--check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("VIOLATED"), "{err}");

    // Without --check the same run succeeds.
    let o = startrack(&["run-case", "1", "--trials", "2", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn replay_recovers_the_rate_of_a_logged_spin() {
    let log = scratch("spin.csv");
    let axis = UnitVec3::from_xyz(0.3, -0.5, 0.8).unwrap();
    let om = AngularVelocity::new(axis, 0.01);
    let q0 = Quaternion::from_axis_angle(&UnitVec3::x_axis(), 0.4);
    let mut text = String::from("t,qx,qy,qz,qw\n");
    for i in 0..12 {
        let t = i as f64 * 2.0;
        let q = propagate_quaternion(&q0, &om, t);
        text += &format!("{t},{},{},{},{}\n", q.x, q.y, q.z, q.w);
    }
    std::fs::write(&log, text).unwrap();
    let out = stdout(&startrack(&["replay", log.to_str().unwrap()]));
    let mut r = csv::Reader::from_reader(out.as_bytes());
    let header = r.headers().unwrap().clone();
    let last = r.records().last().unwrap().unwrap();
    let get = |k: &str| last[header.iter().position(|h| h == k).unwrap()].parse::<f64>().unwrap();
    assert!((get("rate") - 0.01).abs() < 1e-9);
    let est = nalgebra::Vector3::new(get("axis_x"), get("axis_y"), get("axis_z"));
    assert!((est - axis.as_vector()).amax() < 1e-9);
    assert_eq!(get("window_n"), 12.0);
}

#[test]
fn errors_exit_with_failure() {
    let o = startrack(&["bench", "best", "--runs", "1", "--catalog", "/nonexistent/catalog.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    assert!(!startrack(&["run-case", "5"]).status.success());
    let bad = scratch("bad.toml");
    std::fs::write(&bad, "[scenario]\nduration = \"long\"").unwrap();
    let o = startrack(&["run-case", "1", "--trials", "1", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
