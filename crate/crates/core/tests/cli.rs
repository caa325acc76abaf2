use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chaingap::cli::{parse_csv, CSV_HEADER};

fn chaingap(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaingap"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn chaingap_with_workers(args: &[&str], dir: &Path, workers: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaingap"))
        .args(args)
        .current_dir(dir)
        .env("CHAINGAP_WORKERS", workers)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn without_wall_time(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(8);
            f.join(",")
        })
        .collect()
}

#[test]
fn gap_prints_and_logs_a_versioned_record() {
    let dir = tempfile::tempdir().unwrap();
    let o = chaingap(&["gap", "--scenario", "homogeneous", "--n", "8", "--output", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("gap "));
    let log = fs::read_to_string(dir.path().join("out/gaps.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(rec["v"], 1);
    assert_eq!(rec["n"], 8);

    // a second call appends
    chaingap(&["gap", "--scenario", "homogeneous", "--n", "6", "--output", "out"], dir.path());
    let log = fs::read_to_string(dir.path().join("out/gaps.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn direct_and_wigner_agree_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let mut gaps = Vec::new();
    for method in ["direct", "wigner"] {
        let o = chaingap(&["gap", "--scenario", "impurity", "--n", "12", "--method", method], dir.path());
        assert_eq!(o.status.code(), Some(0));
        let g: f64 = stdout(&o).split_whitespace().nth(1).unwrap().parse().unwrap();
        gaps.push(g);
    }
    assert!((gaps[0] - gaps[1]).abs() <= 1e-8 * gaps[0], "{gaps:?}");
}

#[test]
fn sweep_writes_csv_and_relative_script() {
    let dir = tempfile::tempdir().unwrap();
    let o = chaingap(
        &["sweep", "--scenario", "homogeneous", "--sizes", "4,6,8,10", "--output", "runs"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv_path = dir.path().join("runs/homogeneous_d1_direct.csv");
    let text = fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert!(!text.contains('\r'));
    let rows = parse_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 4);
    // 15 significant digits
    let gap_field = text.lines().nth(1).unwrap().split(',').nth(5).unwrap();
    let mantissa = gap_field.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 15, "{gap_field}");

    let script = fs::read_to_string(dir.path().join("runs/homogeneous_d1_direct.gp")).unwrap();
    assert!(script.contains("'homogeneous_d1_direct.csv'"));
    assert!(!script.contains(dir.path().to_str().unwrap()));
    assert!(!script.contains("'/"));
    assert!(stdout(&o).contains("fit power_law"));
}

#[test]
fn sweeps_are_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "sweep", "--scenario", "disorder", "--target", "mass", "--sizes", "2,3,4,5", "--seeds", "1,2,3", "--output",
            out,
        ]
    };
    let a = chaingap_with_workers(&args("a"), dir.path(), "1");
    let b = chaingap_with_workers(&args("b"), dir.path(), "4");
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let name = "disorder_mass_d1_direct.csv";
    let ta = fs::read_to_string(dir.path().join("a").join(name)).unwrap();
    let tb = fs::read_to_string(dir.path().join("b").join(name)).unwrap();
    assert_eq!(without_wall_time(&ta), without_wall_time(&tb));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "n = 6\nmethod = \"pencil\"\n\n[scenario]\nkind = \"homogeneous\"\ngamma = 2.0\n",
    )
    .unwrap();
    let o = chaingap(&["gap", "--config", "run.toml", "--n", "8"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(dir.path().join("gaps.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(log.trim()).unwrap();
    assert_eq!(rec["n"], 8);
    assert_eq!(rec["method"], "pencil");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    // unknown config key
    fs::write(p.join("bad.toml"), "n = 6\nwidth = 3\n").unwrap();
    let o = chaingap(&["gap", "--config", "bad.toml"], p);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("width"));
    // missing friction for a square
    assert_eq!(chaingap(&["gap", "--scenario", "homogeneous", "--dim", "2", "--n", "4"], p).status.code(), Some(1));
    // unparseable flag
    assert_eq!(chaingap(&["sweep", "--sizes", "four"], p).status.code(), Some(1));
    // every row fails
    let o = chaingap(&["sweep", "--scenario", "impurity", "--sizes", "5,7"], p);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(chaingap(&["--help"], p).status.code(), Some(0));
}

#[test]
fn verify_passes_on_the_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let o = chaingap(&["verify"], dir.path());
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.lines().any(|l| l.starts_with("PASS")));
    assert!(!text.lines().any(|l| l.starts_with("FAIL")));
}
