use std::path::{Path, PathBuf};
use std::process::Command;

use covert_mimo::cli;
use covert_mimo::config::{self, BoundsConfig, Fig2Config, RateConfig, SimulateConfig};

fn committed(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn bench(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_covert-bench")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

const SMALL_FIG2: &str = r#"{
  "seed": 7,
  "trials": 20000,
  "tail": 0.001,
  "ecdf_points": 11,
  "rows": 2,
  "cols": 2,
  "models": [
    { "name": "rayleigh", "model": { "kind": "rayleigh" } },
    { "name": "rician", "model": { "kind": "rician", "k": 10 } }
  ]
}"#;

const SMALL_RATE: &str = r#"{
  "seed": 3,
  "trials": 20000,
  "epsilon": 0.01,
  "delta": 0.1,
  "convention": "power",
  "model": { "kind": "rician", "k": 10, "los": "ones" },
  "n": [1000],
  "antennas": [2],
  "lambda0": [1, 2, 4]
}"#;

#[test]
fn committed_configs_parse() {
    config::load::<Fig2Config>(&committed("fig2.json")).unwrap();
    config::load::<RateConfig>(&committed("fig3.json")).unwrap();
    config::load::<RateConfig>(&committed("fig4.json")).unwrap();
    config::load::<BoundsConfig>(&committed("fig5.json")).unwrap();
    config::load::<SimulateConfig>(&committed("simulate.json")).unwrap();
}

#[test]
fn output_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "fig2.json", SMALL_FIG2);
    let cfg = cfg.to_str().unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("out{workers}.csv"));
        let (code, _) = bench(&["fig2", "--config", cfg, "--workers", workers, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0);
        outputs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert!(text.starts_with("# tool: "));
    assert!(text.contains("# seed: 7\n"));
    assert!(text.contains("# config_sha256: "));
    assert!(text.lines().any(|l| l == "row,model,spectral_norm,ecdf"));
}

#[test]
fn seed_override_lands_in_header_and_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "fig2.json", SMALL_FIG2);
    let cfg = cfg.to_str().unwrap();
    let (_, base) = bench(&["fig2", "--config", cfg]);
    let (code, other) = bench(&["fig2", "--config", cfg, "--seed", "8"]);
    assert_eq!(code, 0);
    assert!(other.contains("# seed: 8\n"));
    let body = |s: &str| s.lines().filter(|l| !l.starts_with('#')).map(str::to_owned).collect::<Vec<_>>();
    assert_ne!(body(&base), body(&other));
}

#[test]
fn json_output_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "rate.json", SMALL_RATE);
    let (code, out) = bench(&["rate-first-order", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v.is_object());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = SMALL_FIG2.replacen("\"seed\": 7", "\"seed\": 7, \"colour\": 1", 1);
    let unknown = write(dir.path(), "unknown.json", &unknown);
    assert_eq!(bench(&["fig2", "--config", unknown.to_str().unwrap()]).0, 2);

    let empty = write(dir.path(), "empty.json", &SMALL_RATE.replace("\"n\": [1000]", "\"n\": []"));
    assert_eq!(bench(&["rate-first-order", "--config", empty.to_str().unwrap()]).0, 2);

    let good = write(dir.path(), "fig2.json", SMALL_FIG2);
    let good = good.to_str().unwrap();
    assert_eq!(bench(&["fig2", "--config", good, "--trials", "100"]).0, 2);
    assert_eq!(bench(&["fig2", "--config", good, "--format", "xml"]).0, 2);
    assert_eq!(bench(&["fig2", "--config", good, "--workers", "0"]).0, 2);
}

#[test]
fn unreachable_warden_set_exits_with_three() {
    // an all-ones Rician warden almost never satisfies ||H_w|| <= 1
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(committed("simulate.json"))
        .unwrap()
        .replace(r#""model_w": { "kind": "rayleigh" }"#, r#""model_w": { "kind": "rician", "k": 10, "los": "ones" }"#);
    assert!(text.contains("\"los\": \"ones\" },\n  \"decoder\""));
    let cfg = write(dir.path(), "sim.json", &text);
    assert_eq!(bench(&["simulate", "--config", cfg.to_str().unwrap(), "--trials", "10"]).0, 3);
}

#[test]
fn first_order_rate_falls_with_warden_gain() {
    let cfg = config::parse::<RateConfig>(SMALL_RATE).unwrap().config;
    let rows = cli::rate_first_order(&cfg).unwrap();
    assert_eq!(rows.len(), 3);
    for pair in rows.windows(2) {
        assert!(pair[0].lambda0 < pair[1].lambda0);
        assert!(pair[0].r1.rate > pair[1].r1.rate);
    }
}

#[test]
fn fixed_channel_has_no_sampling_error() {
    let text = SMALL_RATE.replace(
        r#"{ "kind": "rician", "k": 10, "los": "ones" }"#,
        r#"{ "kind": "fixed", "h": { "re": [[1, 0.5], [0, 1]], "im": [[0, 0.2], [0, 0]] } }"#,
    );
    let cfg = config::parse::<RateConfig>(&text).unwrap().config;
    for row in cli::rate_first_order(&cfg).unwrap() {
        assert_eq!(row.kappa.ci_half_width, 0.0);
        assert_eq!(row.r1.estimate.ci_half_width, 0.0);
    }
}
