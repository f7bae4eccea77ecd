//! End-to-end artifact checks: a full run writes the documented file set,
//! the trivial preset solves to its known static solution, and reruns with
//! the same configuration are bitwise reproducible.

use std::fs;

use nlmfg::config::{parse_config, RunConfig};
use nlmfg::io;
use nlmfg::runner::{self, RunSummary};

fn config_in(dir: &std::path::Path, text: &str) -> RunConfig {
    let mut config = parse_config(text).unwrap();
    config.out_dir = dir.to_str().unwrap().to_string();
    config
}

#[test]
fn trivial_preset_converges_and_keeps_the_density_static() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_in(
        dir.path(),
        r#"{
            "preset": "trivial",
            "grid": {"n_x1": 8, "n_x2": 8, "n_t": 4},
            "snapshot_times": [0.5, 1.0]
        }"#,
    );
    let summary = runner::run(&config).unwrap();
    assert!(summary.converged, "trivial problem must converge");
    assert!(summary.iterations <= 2, "took {} iterations", summary.iterations);
    assert!(summary.residuals.continuity <= config.tol);

    for name in ["residuals.csv", "rho_t0.5.csv", "phi_t0.5.csv", "rho_t0.5.pgm", "rho_t1.csv"] {
        assert!(dir.path().join(name).exists(), "missing artifact {name}");
    }
    let (rho, _) = io::read_field_csv(&dir.path().join("rho_t0.5.csv")).unwrap();
    for &v in rho.iter() {
        assert!(
            (v - 1.0).abs() <= config.tol,
            "density should stay at the uniform initial value, got {v}"
        );
    }
    let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let reloaded: RunSummary = serde_json::from_str(&text).unwrap();
    assert!(reloaded.converged);
    assert_eq!(reloaded.artifacts, summary.artifacts);
}

#[test]
fn spread_run_writes_the_artifact_set_with_improving_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_in(
        dir.path(),
        r#"{
            "preset": "spread",
            "grid": {"n_x1": 32, "n_x2": 32, "n_t": 16},
            "max_iters": 1200,
            "log_stride": 100
        }"#,
    );
    let summary = runner::run(&config).unwrap();
    for name in &summary.artifacts {
        assert!(dir.path().join(name).exists(), "missing artifact {name}");
    }
    for name in ["rho_t0.1.csv", "rho_t0.5.csv", "rho_t0.9.csv", "rho_t0.9.pgm"] {
        assert!(summary.artifacts.iter().any(|a| a == name), "artifact list lacks {name}");
    }
    assert!(summary.heatmap_normalization.contains_key("rho_t0.9.pgm"));

    let text = fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert!(rows.len() >= 5, "expected several history rows, got {}", rows.len());
    let continuity = |line: &str| -> f64 { line.split(',').nth(1).unwrap().parse().unwrap() };
    let first = continuity(rows[0]);
    let last = continuity(rows[rows.len() - 1]);
    assert!(
        last < first,
        "continuity residual should trend down over the run: first {first}, last {last}"
    );
}

#[test]
fn reruns_with_identical_config_are_bitwise_identical() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let text = r#"{
        "preset": "spread",
        "params": {"lambda1": 0.5, "lambda2": 2.0},
        "grid": {"n_x1": 16, "n_x2": 16, "n_t": 8},
        "max_iters": 300,
        "log_stride": 50
    }"#;
    let summary1 = runner::run(&config_in(dir1.path(), text)).unwrap();
    let summary2 = runner::run(&config_in(dir2.path(), text)).unwrap();
    assert_eq!(summary1.artifacts, summary2.artifacts);
    for name in &summary1.artifacts {
        let bytes1 = fs::read(dir1.path().join(name)).unwrap();
        let bytes2 = fs::read(dir2.path().join(name)).unwrap();
        assert_eq!(bytes1, bytes2, "artifact {name} differs between reruns");
    }
}
