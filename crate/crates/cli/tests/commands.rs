use std::fs;
use std::path::{Path, PathBuf};

use levy_em_cli::{main_with_args, EXIT_FAILED, EXIT_OK, EXIT_USAGE};
use tempfile::TempDir;

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![
        "levy-em".to_string(),
        cmd.to_string(),
        "--config".to_string(),
        config.display().to_string(),
        "--output-dir".to_string(),
        out.display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    main_with_args(args)
}

const ALPHA_CIR: &str = r#"{
    "model": {"preset": "alpha_cir", "params": {"a": 1, "c": 1, "sigma0": 0.5, "eta": 0.5, "alpha": 1.5}},
    "seed": 3
}"#;

#[test]
fn validate_accepts_alpha_cir() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", ALPHA_CIR);
    assert_eq!(run("validate", &cfg, dir.path(), &[]), EXIT_OK);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["model"], "alpha_cir");
    assert_eq!(report["clauses"].as_array().unwrap().len(), 6);
}

#[test]
fn validate_rejects_small_beta() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
            "model": {"preset": "linear_jump_ou", "params": {"a": 1, "c": 0, "sigma0": 1, "h0": 1, "beta": 0.2}},
            "driver": {"kind": "stable", "alpha": 1.5, "c": 1}
        }"#,
    );
    assert_eq!(run("validate", &cfg, dir.path(), &[]), EXIT_FAILED);
}

#[test]
fn malformed_and_unknown_configs_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let bad = write_config(dir.path(), "bad.json", "{ not json");
    assert_eq!(run("validate", &bad, dir.path(), &[]), EXIT_USAGE);
    let unknown = write_config(dir.path(), "u.json", r#"{"model": {"preset": "heston", "params": {}}}"#);
    assert_eq!(run("validate", &unknown, dir.path(), &[]), EXIT_USAGE);
    let typo = write_config(
        dir.path(),
        "t.json",
        r#"{"model": {"preset": "cir", "params": {"a": 1, "c": 1, "sigma": 1}}}"#,
    );
    assert_eq!(run("validate", &typo, dir.path(), &[]), EXIT_USAGE);
    assert_eq!(run("validate", &dir.path().join("missing.json"), dir.path(), &[]), EXIT_USAGE);
}

const LINEAR_RATE: &str = r#"{
    "model": {"preset": "linear_jump_ou", "params": {"a": 1, "c": 1, "sigma0": 1, "h0": 1}},
    "driver": {"kind": "truncated_stable", "alpha": 1.5, "c": 1, "cutoff": 1},
    "small_jump_cutoff": 0.01,
    "levels": [4, 8, 16, 32],
    "n_fine": 256,
    "paths": 200,
    "seed": 11
}"#;

#[test]
fn rate_outputs_are_reproducible_and_thread_independent() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", LINEAR_RATE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run("rate", &cfg, &a, &["--threads", "1"]), EXIT_OK);
    assert_eq!(run("rate", &cfg, &b, &["--threads", "3"]), EXIT_OK);
    for name in ["rate.csv", "rate.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let csv = fs::read_to_string(a.join("rate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,mean_abs_error,stderr,l2_error"));
    assert_eq!(lines.count(), 4);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("rate.json")).unwrap()).unwrap();
    for key in ["fitted_slope", "ci_low", "ci_high", "predicted_exponent", "regime", "seed", "paths"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["seed"], 11);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", LINEAR_RATE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run("rate", &cfg, &a, &[]), EXIT_OK);
    assert_eq!(run("rate", &cfg, &b, &["--seed", "12"]), EXIT_OK);
    assert_ne!(fs::read(a.join("rate.csv")).unwrap(), fs::read(b.join("rate.csv")).unwrap());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("rate.json")).unwrap()).unwrap();
    assert_eq!(json["seed"], 12);
}

#[test]
fn degenerate_rate_run_has_zero_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
            "model": {"preset": "cir", "params": {"a": 1, "c": 1, "sigma0": 0.5}},
            "levels": [64], "n_fine": 64, "paths": 10
        }"#,
    );
    assert_eq!(run("rate", &cfg, dir.path(), &["--dump-paths"]), EXIT_OK);
    let csv = fs::read_to_string(dir.path().join("rate.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("64,0,0,0"));
    let paths = fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert_eq!(paths.lines().next(), Some("t,level,value"));
    assert_eq!(paths.lines().count(), 1 + 65);
}

#[test]
fn rate_rejects_non_dividing_levels() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
            "model": {"preset": "cir", "params": {"a": 1, "c": 1, "sigma0": 0.5}},
            "levels": [3, 8], "n_fine": 64, "paths": 10
        }"#,
    );
    assert_eq!(run("rate", &cfg, dir.path(), &[]), EXIT_USAGE);
}

fn verify_config(draws: usize, u: &str) -> String {
    format!(
        r#"{{
            "driver": {{"kind": "stable", "alpha": 1.5, "c": 1}},
            "verify_yw": {{"draws": {draws}, "delta": 2, "epsilon": 0.5, "u": {u},
                           "variants": [{{"kind": "closed_form"}}, {{"kind": "mollified", "ramp": 0.1}}]}},
            "seed": 5
        }}"#
    )
}

#[test]
fn verify_yw_passes_on_stable() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &verify_config(200, "1"));
    assert_eq!(run("verify-yw", &cfg, dir.path(), &[]), EXIT_OK);
    let csv = fs::read_to_string(dir.path().join("verify_yw.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,delta,epsilon,lemma,draws,failures,max_violation");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("closed_form,2,0.5,"));
    assert!(lines[1..].iter().all(|l| l.split(',').nth(5) == Some("0")));
}

#[test]
fn verify_yw_without_draws_writes_header_only() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &verify_config(0, "1"));
    assert_eq!(run("verify-yw", &cfg, dir.path(), &[]), EXIT_OK);
    let csv = fs::read_to_string(dir.path().join("verify_yw.csv")).unwrap();
    assert_eq!(csv, "variant,delta,epsilon,lemma,draws,failures,max_violation\n");
}

#[test]
fn infinite_u_with_stable_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &verify_config(10, r#""inf""#));
    assert_eq!(run("verify-yw", &cfg, dir.path(), &[]), EXIT_USAGE);
}

#[test]
fn infinite_u_with_truncated_measure_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
            "verify_yw": {"draws": 50, "delta": 4, "epsilon": 0.1, "u": "inf",
                          "measure": {"kind": "truncated_stable", "alpha": 1.5, "c": 1, "cutoff": 1}}
        }"#,
    );
    assert_eq!(run("verify-yw", &cfg, dir.path(), &[]), EXIT_OK);
}

#[test]
fn sample_check_on_compound_poisson() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{
            "driver": {"kind": "compound_poisson", "rate": 2, "jump_law": {"kind": "exponential", "mean": 1}},
            "sample_check": {"samples": 20000, "dt": 0.5},
            "seed": 9
        }"#,
    );
    assert_eq!(run("sample-check", &cfg, dir.path(), &[]), EXIT_OK);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sample_check.json")).unwrap()).unwrap();
    assert_eq!(json["cf_deviations"].as_array().unwrap().len(), 20);
    assert!(json["self_similarity_ks"].is_null());
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(main_with_args(["levy-em", "simulate"]), EXIT_USAGE);
}
