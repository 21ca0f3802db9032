use std::path::Path;
use std::process::{Command, Output};

fn conclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conclab")).args(args).output().expect("spawn conclab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn without_clock(mut v: serde_json::Value) -> serde_json::Value {
    v.as_object_mut().unwrap().remove("wall_clock_seconds");
    v
}

#[test]
fn cube_scan_prints_csv_and_passes() {
    let o = conclab(&["cube-scan", "--n", "1,2,4,8", "--threads", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("scenario,"), "{header}");
    assert_eq!(text.lines().count(), 5);
    assert!(stderr(&o).contains("PASS n2_closed_form"));
}

#[test]
fn out_writes_matching_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("run");
    let o = conclab(&["moments", "--n", "2,3,5", "--format", "json", "--out", base.to_str().unwrap(), "-q"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).is_empty());
    let printed: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(base.with_extension("json")).unwrap()).unwrap();
    assert_eq!(printed, saved);
    let csv = std::fs::read_to_string(base.with_extension("csv")).unwrap();
    let rows = saved["rows"].as_array().unwrap();
    assert_eq!(csv.lines().count(), rows.len() + 1);
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let beta_col = header.iter().position(|h| *h == "beta").unwrap();
    assert_eq!(first[beta_col], rows[0]["beta"].to_string());
}

#[test]
fn same_seed_same_numbers() {
    let run = |threads: &str| {
        let o = conclab(&["subset", "--seeds", "3", "--format", "json", "--threads", threads, "-q"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        without_clock(serde_json::from_str(&stdout(&o)).unwrap())
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn unknown_scenario_is_an_error() {
    let o = conclab(&["thm7"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("thm7"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn invalid_spec_is_rejected_before_running() {
    for args in [
        &["identities", "--n", "2"][..],
        &["thm5", "--samples", "10"],
        &["cube-scan", "--family", "gaussian"],
        &["position", "--p", "0.5"],
    ] {
        let o = conclab(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn missing_measure_file_is_an_error() {
    let o = conclab(&["var", "--measure", "/nonexistent/measure.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tampered_identities_fail() {
    let o = conclab(&["identities", "--samples", "20000", "--tamper-psi-cubic", "0.026525823848649224"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("FAIL psi_cubic_coefficient"));
}

fn write_measure(path: &Path) {
    let mut text = String::from("weight,x1,x2,x3\n");
    for (w, x) in [(0.25, [1.0, 0.2, -0.3]), (0.25, [-0.8, 0.5, 0.1]), (0.5, [0.1, -0.9, 0.7])] {
        text.push_str(&format!("{w},{},{},{}\n", x[0], x[1], x[2]));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn measure_file_runs_through_var_and_moments() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mu.csv");
    write_measure(&path);
    for scenario in ["var", "moments", "third-moment"] {
        let o = conclab(&[scenario, "--measure", path.to_str().unwrap(), "--samples", "20000", "--format", "json", "-q"]);
        assert_eq!(o.status.code(), Some(0), "{scenario}: {}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["all_pass"], true);
        assert!(!v["rows"].as_array().unwrap().is_empty());
    }
}
