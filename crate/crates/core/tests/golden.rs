//! Golden-file tests: each experiment at small scale against a committed
//! report. Regenerate with `UPDATE_GOLDEN=1 cargo test --test golden`.

use std::path::PathBuf;

use metrocomp::experiments::{run_experiment, ExperimentConfig, ExperimentKind};
use metrocomp::report::strip_timing;
use serde_json::Value;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Structural equality with a relative tolerance on numbers. The version
/// string is ignored so releases do not invalidate the files.
fn compare(path: &str, a: &Value, b: &Value, errors: &mut Vec<String>) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            // optimizer diagnostics (near-zero amplitudes, objectives) get slack
            let slack = if path.starts_with(".diagnostics") { 1e-6 } else { 1e-12 };
            if (x - y).abs() > 1e-8 * x.abs().max(y.abs()) + slack {
                errors.push(format!("{path}: {x} vs {y}"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for k in keys {
                if path.is_empty() && k == "version" {
                    continue;
                }
                match (x.get(k), y.get(k)) {
                    (Some(u), Some(v)) => compare(&format!("{path}.{k}"), u, v, errors),
                    _ => errors.push(format!("{path}.{k}: present on one side only")),
                }
            }
        }
        (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                compare(&format!("{path}[{i}]"), u, v, errors);
            }
        }
        _ if a == b => {}
        _ => errors.push(format!("{path}: {a} vs {b}")),
    }
}

fn check(kind: ExperimentKind) {
    let dir = golden_dir();
    let name = kind.name();
    let config = ExperimentConfig::from_path(&dir.join(format!("{name}.config.json"))).unwrap();
    assert_eq!(config.experiment, kind);
    let record = run_experiment(&config).unwrap();
    assert!(!record.failed, "{:?}", record.failures);
    assert!(record.consistency_defect().is_none());
    let actual = strip_timing(&record.to_json().unwrap()).unwrap();
    let expected_path = dir.join(format!("{name}.report.json"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&expected_path, serde_json::to_string_pretty(&actual).unwrap() + "\n").unwrap();
        return;
    }
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(&expected_path).unwrap()).unwrap();
    let mut errors = Vec::new();
    compare("", &actual, &expected, &mut errors);
    assert!(errors.is_empty(), "{name} differs from its golden report:\n{}", errors.join("\n"));
}

#[test]
fn bounds() {
    check(ExperimentKind::Bounds);
}

#[test]
fn compat() {
    check(ExperimentKind::Compat);
}

#[test]
fn spin_rotation() {
    check(ExperimentKind::SpinRotation);
}

#[test]
fn lossy() {
    check(ExperimentKind::Lossy);
}

#[test]
fn dephasing_n1() {
    check(ExperimentKind::DephasingN1);
}

#[test]
fn dephasing_joint() {
    check(ExperimentKind::DephasingJoint);
}

#[test]
fn dicke_ghz() {
    check(ExperimentKind::DickeGhz);
}

#[test]
fn every_experiment_has_a_golden_config() {
    for kind in ExperimentKind::ALL {
        assert!(golden_dir().join(format!("{}.config.json", kind.name())).exists(), "{}", kind.name());
    }
}
