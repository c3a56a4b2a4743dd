use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pathdev(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pathdev"));
    cmd.args(args).env_remove("PATHDEV_OUTPUT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn pathdev")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

const FLAT_PARABOLA: &str = r#"
manifold = "euclidean:2"
transport = "euclidean"

[task]
kind = "displacement"
s = 0.0
t = { values = [0.25, 0.5, 1.0] }
curve = { interval = [0.0, 1.0], expressions = ["t", "t^2"] }
"#;

#[test]
fn flat_displacement_equals_coordinate_difference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "parabola.toml", FLAT_PARABOLA);
    let out = pathdev(&["run", &cfg, "--output", dir.path().to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("parabola.csv"));
    assert_eq!(header[..3], ["t", "d1", "d2"]);
    assert_eq!(rows.len(), 3);
    for row in rows {
        let t = row[0];
        assert!((row[1] - t).abs() < 1e-12);
        assert!((row[2] - t * t).abs() < 1e-12);
    }
    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("parabola.json")).unwrap()).unwrap();
    assert_eq!(sidecar["task"], "displacement");
    assert_eq!(sidecar["csv"], "parabola.csv");
    assert_eq!(sidecar["scenario_hash"].as_str().unwrap().len(), 64);
    assert!(sidecar["timestamp_unix"].as_u64().is_some());
}

#[test]
fn overrides_change_the_hash_and_env_sets_the_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "parabola.toml", FLAT_PARABOLA);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(pathdev(&["run", &cfg], &[("PATHDEV_OUTPUT_DIR", &a)]).status.success());
    assert!(pathdev(&["run", &cfg, "--quad-panels", "32"], &[("PATHDEV_OUTPUT_DIR", &b)]).status.success());
    let hash = |d: &Path| -> String {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(d.join("parabola.json")).unwrap()).unwrap();
        v["scenario_hash"].as_str().unwrap().to_string()
    };
    assert_ne!(hash(&a), hash(&b));
}

#[test]
fn check_reports_task_and_hash() {
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/c06_jacobi_sphere.toml");
    let out = pathdev(&["check", scenario.to_str().unwrap()], &[]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("ok: jacobi task"), "{stdout}");
}

#[test]
fn catalog_json_lists_every_builtin() {
    let out = pathdev(&["catalog", "--json"], &[]);
    assert!(out.status.success());
    let entries: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = entries.iter().map(|e| e["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 5);
    assert!(names.contains(&"hyperbolic2"));
    assert!(names.contains(&"euclidean2_polar"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let typo = write(dir.path(), "typo.toml", &FLAT_PARABOLA.replace("transport =", "transprot ="));
    let out = pathdev(&["check", &typo], &[]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3") && stderr.contains("transprot"), "{stderr}");

    let unknown = write(dir.path(), "unknown.toml", &FLAT_PARABOLA.replace("euclidean:2", "torus"));
    let out = pathdev(&["check", &unknown], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sphere2:<R>"));

    let missing = dir.path().join("missing.toml");
    assert_eq!(pathdev(&["check", missing.to_str().unwrap()], &[]).status.code(), Some(2));
}

#[test]
fn leaving_the_chart_exits_with_four_and_keeps_earlier_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "through_origin.toml",
        r#"
manifold = "euclidean2_polar"

[task]
kind = "displacement"
s = 0.9
t = { values = [0.9, 0.7, 0.2, 0.1] }
curve = { interval = [0.0, 1.0], expressions = ["t - 0.5", "1"] }
"#,
    );
    let out = pathdev(&["run", &cfg, "--output", dir.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_csv(&dir.path().join("through_origin.csv"));
    assert_eq!(rows.len(), 2);
    let sidecar: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("through_origin.json")).unwrap()).unwrap();
    assert!(!sidecar["failure"].is_null());
}
