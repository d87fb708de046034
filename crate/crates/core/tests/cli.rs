use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vlp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlp"))
        .args(args)
        .env_remove("VLP_CONFIG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.cfg");
    fs::write(&p, "iterations = 200\nseed = 3\n[scenario]\nfix_rate = 10.0\n").unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn estimate_prints_position() {
    let o = vlp(&["estimate", "--method", "direct-bearing", "--theta11", "0.148890", "--theta21", "-0.0100", "--L", "1.6"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "x=1.5 y=10");

    let o = vlp(&["estimate", "--method", "direct-range", "--d11", "5", "--d21", "5", "--L", "6"]);
    assert_eq!(stdout(&o).trim(), "x=3 y=4");
}

#[test]
fn estimate_failures_map_to_exit_codes() {
    assert_eq!(vlp(&["estimate", "--method", "direct-range", "--d11", "5"]).status.code(), Some(1));
    assert_eq!(vlp(&["estimate", "--method", "bogus"]).status.code(), Some(1));
    // disjoint circles
    let o = vlp(&["estimate", "--method", "direct-range", "--d11", "1", "--d21", "1", "--L", "5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, workers) in [(&a, "1"), (&b, "3")] {
        let o = vlp(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", workers]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = fs::read(a.join("trajectory_stats.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("trajectory_stats.csv")).unwrap());
    assert!(csv.starts_with(b"t,method,err_std_2d,bias_x,bias_y,dropouts\n"));
    assert!(fs::read_to_string(a.join("trajectory_stats.svg")).unwrap().starts_with("<svg"));

    // the dumped effective config reproduces the run
    let c = dir.path().join("c");
    let eff = a.join("effective_config.toml");
    let o = vlp(&["simulate", "--config", eff.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(csv, fs::read(c.join("trajectory_stats.csv")).unwrap());
}

#[test]
fn default_simulation_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("default.cfg");
    let dumped = vlp(&["dump-config"]);
    fs::write(&cfg, &dumped.stdout).unwrap();
    let mut csvs = Vec::new();
    for run in ["r1", "r2"] {
        let out = dir.path().join(run);
        let o = vlp(&[
            "simulate", "--config", cfg.to_str().unwrap(), "--iterations", "3000", "--seed", "7", "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        csvs.push(fs::read(out.join("trajectory_stats.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn env_var_and_json_config() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("cfg.json");
    fs::write(&json, r#"{"seed": 41, "layout": {"inter_rx_distance": 1.7}}"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_vlp"))
        .args(["dump-config"])
        .env("VLP_CONFIG", &json)
        .output()
        .unwrap();
    let text = stdout(&o);
    assert!(text.contains("seed = 41") && text.contains("inter_rx_distance = 1.7"), "{text}");

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "unknown_key = 1\n").unwrap();
    assert_eq!(vlp(&["simulate", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn crlb_map_without_feasible_cells_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("far.cfg");
    fs::write(&cfg, "[grid]\nx_min = 20.0\nx_max = 30.0\ny_min = 2.0\ny_max = 3.0\nresolution = 0.5\n").unwrap();
    let out = dir.path().join("out");
    let o = vlp(&["crlb-map", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no feasible cells"));
    assert!(!out.exists());
}

#[test]
fn crlb_map_writes_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.cfg");
    fs::write(&cfg, "map_families = [\"direct-bearing\"]\n[grid]\nx_min = -1.0\nx_max = 1.0\ny_min = 5.0\ny_max = 6.0\nresolution = 0.5\n").unwrap();
    let out = dir.path().join("m");
    let o = vlp(&["crlb-map", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("error_map.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,y,method,crlb_std_x,crlb_std_y,feasible"));
    assert_eq!(lines.count(), 5 * 3);
}

#[test]
fn verify_passes() {
    let o = vlp(&["verify", "--poses", "300"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("PASS").count(), 4);
}
