//! End-to-end checks of the command-line workbench: every subcommand is
//! reproducible from its configuration and master seed, the construct /
//! simulate pipeline composes, and failures map to the documented exit
//! codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polarwire"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("polarwire_cli_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn wiretap_config() -> &'static str {
    r#"{
      "schema_version": 1,
      "spec": {"wiretap": {
        "p_v": 0.5,
        "p_x_given_v": [[1.0, 0.0], [0.0, 1.0]],
        "w1": {"kind": "bec", "eps": 0.3},
        "w2": {"kind": "bec", "eps": 0.6}
      }},
      "params": {"n": 6, "beta": 0.25, "delta_low": 0.02, "delta_high": 0.3, "m": 2, "master_seed": 99},
      "trials": 40
    }"#
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn pipeline_decomposition_matches_single_shot() {
    let dir = temp_dir("pipeline");
    let config = write_config(&dir, "c.json", wiretap_config());
    let built = dir.join("built");
    run_ok(
        bin()
            .args(["construct", "--config"])
            .arg(&config)
            .arg("--out-dir")
            .arg(&built),
    );
    assert!(built.join("stats.json").is_file());
    assert!(built.join("stats.csv").is_file());
    let partition = built.join("partition.json");
    assert!(partition.is_file());

    let from_files = dir.join("from_files");
    run_ok(
        bin()
            .args(["simulate-wiretap", "--config"])
            .arg(&config)
            .arg("--partition")
            .arg(&partition)
            .arg("--out-dir")
            .arg(&from_files)
            .args(["--threads", "2"]),
    );
    let single = dir.join("single");
    run_ok(
        bin()
            .args(["simulate-wiretap", "--config"])
            .arg(&config)
            .arg("--out-dir")
            .arg(&single)
            .args(["--threads", "2"]),
    );

    let a = std::fs::read(from_files.join("reliability.json")).unwrap();
    let b = std::fs::read(single.join("reliability.json")).unwrap();
    assert_eq!(a, b, "pipeline decomposition changed the report");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = temp_dir("golden");
    let config = write_config(&dir, "c.json", wiretap_config());
    let first = dir.join("first");
    let second = dir.join("second");
    for out in [&first, &second] {
        run_ok(
            bin()
                .args(["construct", "--config"])
                .arg(&config)
                .arg("--out-dir")
                .arg(out),
        );
        run_ok(
            bin()
                .args(["simulate-wiretap", "--config"])
                .arg(&config)
                .arg("--out-dir")
                .arg(out)
                .args(["--threads", "3"]),
        );
        run_ok(
            bin()
                .args(["rates", "--config"])
                .arg(&config)
                .arg("--out-dir")
                .arg(out),
        );
        run_ok(
            bin()
                .args(["baselines", "--config"])
                .arg(&config)
                .arg("--out-dir")
                .arg(out),
        );
        run_ok(
            bin()
                .args(["leakage", "--config"])
                .arg(&config)
                .arg("--out-dir")
                .arg(out),
        );
    }
    for name in [
        "stats.json",
        "stats.csv",
        "partition.json",
        "reliability.json",
        "reliability.csv",
        "rates.json",
        "rates.csv",
        "baseline_mahdavifar.json",
        "baseline_sasoglu.json",
        "baselines.csv",
        "leakage.json",
        "leakage.csv",
    ] {
        let a = std::fs::read(first.join(name)).unwrap();
        let b = std::fs::read(second.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn transcript_export_carries_blocks() {
    let dir = temp_dir("transcript");
    let config = write_config(&dir, "c.json", wiretap_config());
    run_ok(
        bin()
            .args(["simulate-wiretap", "--config"])
            .arg(&config)
            .args(["--trials", "3", "--transcript"])
            .arg("--out-dir")
            .arg(&dir),
    );
    let transcript: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("cluster.json")).unwrap()).unwrap();
    assert_eq!(transcript["stage"], "wiretap");
    assert_eq!(transcript["m"], 2);
    assert_eq!(transcript["blocks"].as_array().unwrap().len(), 2);
    let block = &transcript["blocks"][0];
    for field in ["t", "v", "x"] {
        assert_eq!(block[field].as_array().unwrap().len(), 64);
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_errors_exit_one() {
    let dir = temp_dir("exit1");
    let bad = wiretap_config().replace("\"trials\": 40", "\"trials\": 40, \"unknown\": true");
    let config = write_config(&dir, "bad.json", &bad);
    let out = bin()
        .args(["construct", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn infeasible_constructions_exit_two() {
    let dir = temp_dir("exit2");
    // tight thresholds at N = 64 give |I| = 0 < |R2| for this pair
    let cfg = wiretap_config().replace(
        "\"delta_low\": 0.02, \"delta_high\": 0.3",
        "\"delta_low\": 0.01, \"delta_high\": 0.01",
    );
    let config = write_config(&dir, "tight.json", &cfg);
    let out = bin()
        .args(["construct", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exceeded_budgets_exit_three() {
    let dir = temp_dir("exit3");
    // force exact synthesis with a tiny state cap on a non-BEC spec
    let cfg = r#"{
      "schema_version": 1,
      "spec": {"wiretap": {
        "p_v": 0.4,
        "p_x_given_v": [[1.0, 0.0], [0.0, 1.0]],
        "w1": {"kind": "bsc", "p": 0.1},
        "w2": {"kind": "bsc", "p": 0.3}
      }},
      "params": {"n": 6, "beta": 0.25, "delta_low": 0.02, "delta_high": 0.3, "m": 1, "master_seed": 3},
      "trials": 5,
      "stats": {"method": "exact", "state_cap": 4}
    }"#;
    let config = write_config(&dir, "budget.json", cfg);
    let out = bin()
        .args(["construct", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn leakage_checks_configured_bound() {
    let dir = temp_dir("leakage");
    let cfg = r#"{
      "schema_version": 1,
      "spec": {"wiretap": {
        "p_v": 0.5,
        "p_x_given_v": [[1.0, 0.0], [0.0, 1.0]],
        "w1": {"kind": "bec", "eps": 0.2},
        "w2": {"kind": "bec", "eps": 0.7}
      }},
      "params": {"n": 3, "beta": 0.25, "delta_low": 0.25, "delta_high": 0.3, "m": 1, "master_seed": 5},
      "trials": 5,
      "stats": {"method": "exact"},
      "flags": {"max_leakage_bits": 0.05}
    }"#;
    let config = write_config(&dir, "leak.json", cfg);
    let out = run_ok(
        bin()
            .args(["leakage", "--exact", "--config"])
            .arg(&config)
            .arg("--out-dir")
            .arg(&dir),
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("within the configured bound"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("leakage.json")).unwrap()).unwrap();
    assert_eq!(report["certified"], true);
    assert_eq!(report["method"], "exact_enumeration");

    // the proxy on the same config exceeds the bound and exits 1
    let out = bin()
        .args(["leakage", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bcc_simulation_runs_and_reports_receivers() {
    let dir = temp_dir("bcc");
    let cfg = r#"{
      "schema_version": 1,
      "spec": {"bcc": {
        "p_u": 0.5,
        "p_v_given_u": [[0.75, 0.25], [0.25, 0.75]],
        "p_x_given_v": [[1.0, 0.0], [0.0, 1.0]],
        "w1": {"kind": "bec", "eps": 0.15},
        "w2": {"kind": "bec", "eps": 0.5}
      }},
      "params": {"n": 6, "beta": 0.25, "delta_low": 0.05, "delta_high": 0.4, "m": 2, "master_seed": 17},
      "trials": 20,
      "stats": {"samples": 4000}
    }"#;
    let config = write_config(&dir, "bcc.json", cfg);
    run_ok(
        bin()
            .args(["construct", "--config"])
            .arg(&config)
            .arg("--out-dir")
            .arg(&dir),
    );
    for name in [
        "stats_q.json",
        "stats_t.json",
        "partition_common.json",
        "partition_secret.json",
    ] {
        assert!(dir.join(name).is_file(), "{name} missing");
    }
    run_ok(
        bin()
            .args(["simulate-bcc", "--config"])
            .arg(&config)
            .arg("--partition-common")
            .arg(dir.join("partition_common.json"))
            .arg("--partition-secret")
            .arg(dir.join("partition_secret.json"))
            .arg("--out-dir")
            .arg(&dir)
            .args(["--threads", "2"]),
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("reliability_bcc.json")).unwrap())
            .unwrap();
    let receivers: Vec<&str> = report["receivers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["receiver"].as_str().unwrap())
        .collect();
    assert_eq!(
        receivers,
        [
            "rx1_joint_cluster",
            "rx2_common_cluster",
            "rx1_extra_cluster"
        ]
    );
    run_ok(
        bin()
            .args(["rates", "--config"])
            .arg(&config)
            .arg("--out-dir")
            .arg(&dir),
    );
    assert!(dir.join("rates_bcc.json").is_file());
    // the proxy leakage path serves broadcast configs too
    run_ok(
        bin()
            .args(["leakage", "--config"])
            .arg(&config)
            .arg("--out-dir")
            .arg(&dir),
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("leakage.json")).unwrap()).unwrap();
    assert_eq!(report["certified"], false);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn threads_env_fallback_is_accepted() {
    let dir = temp_dir("env");
    let config = write_config(&dir, "c.json", wiretap_config());
    let out = bin()
        .env("POLARWIRE_THREADS", "2")
        .args(["simulate-wiretap", "--config"])
        .arg(&config)
        .args(["--trials", "5"])
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    std::fs::remove_dir_all(&dir).ok();
}
