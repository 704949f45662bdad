use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mps_capacity::closed_form::{aklt_capacity, mg_capacity};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mps-capacity"));
    c.env_remove("MPSCAP_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(csv_text: &str) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn capacity_aklt_row() {
    let o = run(&["capacity", "--model", "aklt", "--theta", "0.9553", "--n", "16"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "model,param,n,estimator,closed_form,numeric,gap");
    let r = &rows(&text)[0];
    assert_eq!(&r[..4], ["aklt", "0.9553", "16", "cond"]);
    let closed: f64 = r[4].parse().unwrap();
    assert!((closed - 0.6667).abs() < 1e-4);
    let numeric: f64 = r[5].parse().unwrap();
    let gap: f64 = r[6].parse().unwrap();
    assert!((closed - numeric - gap).abs() < 1e-15);
    assert!((0.0..1.5 / 16.0).contains(&gap));
}

#[test]
fn sweep_mg_golden() {
    let o = run(&["sweep", "--model", "mg", "--g", "0:0.9:0.1", "--n", "14"]);
    assert_eq!(o.status.code(), Some(0));
    let rs = rows(&stdout(&o));
    assert_eq!(rs.len(), 10);
    for (i, r) in rs.iter().enumerate() {
        let g: f64 = r[1].parse().unwrap();
        assert!((g - i as f64 / 10.0).abs() < 1e-12);
        assert_eq!(r[2], "14");
        let closed: f64 = r[4].parse().unwrap();
        let numeric: f64 = r[5].parse().unwrap();
        assert!((closed - mg_capacity(g).unwrap()).abs() < 1e-15);
        let gap = closed - numeric;
        assert!((-1e-10..0.01).contains(&gap), "g={g} gap={gap}");
    }
    // the formula is symmetric about 1/2 and the numerics follow
    let num = |i: usize| rs[i][5].parse::<f64>().unwrap();
    assert!((num(4) - num(6)).abs() < 1e-10);
}

#[test]
fn sweep_is_deterministic_and_both_estimators() {
    let args = ["sweep", "--model", "aklt", "--n", "6", "--estimator", "both"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let rs = rows(&stdout(&a));
    // default grid: 16 angles plus the ground angle, two estimators each
    assert_eq!(rs.len(), 34);
    for r in &rs {
        let t: f64 = r[1].parse().unwrap();
        assert!((r[4].parse::<f64>().unwrap() - aklt_capacity(t)).abs() < 1e-15);
    }
}

#[test]
fn verify_mg_passes() {
    let o = run(&["verify", "--model", "mg", "--n-max", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rs = rows(&stdout(&o));
    assert!(rs.iter().all(|r| r[1] == "true"));
    assert!(rs.iter().any(|r| r[0] == "mg: two-path entropy agreement"));
}

#[test]
fn verify_custom_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coin.json");
    fs::write(&path, r#"{"d":2,"D":1,"kraus":[[[0.6,0.0]],[[0.8,0.0]]]}"#).unwrap();
    let o = run(&["verify", "--model", "custom", "--model-file", path.to_str().unwrap(), "--n-max", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["capacity", "--model", "custom", "--model-file", path.to_str().unwrap(), "--n", "3"]);
    let r = &rows(&stdout(&o))[0];
    assert_eq!(r[0], "custom");
    assert_eq!(r[4], "");
    // i.i.d. coin: capacity 1 - h(0.36)
    let h = -(0.36f64 * 0.36f64.log2() + 0.64 * 0.64f64.log2());
    assert!((r[5].parse::<f64>().unwrap() - (1.0 - h)).abs() < 1e-12);
}

#[test]
fn verification_failure_exits_one() {
    // an aggressive cut drops real probability mass, which oracle reports
    let o = run(&["oracle", "--model", "aklt", "--theta", "0.5", "--n-max", "4", "--prune-tol", "0.1"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("disagree"));
}

#[test]
fn invalid_custom_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    // not trace preserving
    fs::write(&path, r#"{"d":2,"D":1,"kraus":[[[0.5,0.0]],[[0.5,0.0]]]}"#).unwrap();
    let o = run(&["verify", "--model", "custom", "--model-file", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_two() {
    for args in [
        vec!["capacity", "--n", "0"],
        vec!["sweep", "--model", "mg", "--g", "0:0.9:0"],
        vec!["capacity", "--model", "mg", "--g", "1.5"],
        vec!["capacity", "--model", "aklt", "--g", "0.3"],
        vec!["verify", "--format", "svg"],
        vec!["nonsense"],
        vec!["capacity", "--model", "custom"],
        vec![],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "args {args:?}");
    }
}

#[test]
fn spectrum_side_by_side() {
    let o = run(&["spectrum", "--model", "aklt", "--theta-ground", "--n", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "family,value,multiplicity,source");
    let rs = rows(&text);
    let lemma: u64 = rs.iter().filter(|r| r[3] == "closed_form").map(|r| r[2].parse::<u64>().unwrap()).sum();
    let enumd: u64 = rs.iter().filter(|r| r[3] == "enumeration").map(|r| r[2].parse::<u64>().unwrap()).sum();
    assert_eq!(lemma, 15);
    assert_eq!(enumd, 15);
}

#[test]
fn oracle_and_channel_commands() {
    let o = run(&["oracle", "--model", "mg", "--g", "0.3", "--n-max", "6"]);
    assert_eq!(o.status.code(), Some(0));
    let rs = rows(&stdout(&o));
    assert_eq!(rs.len(), 6);
    assert!(rs.iter().all(|r| r[7] == "true"));

    let o = run(&["channel", "--g-ground", "--n", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let r = &rows(&stdout(&o))[0];
    assert_eq!(r[3], "4");
    assert!((r[7].parse::<f64>().unwrap() - 1.811278124459133).abs() < 1e-12);
    assert_eq!(r[12], "symbol i -> Z(i-1)");

    let o = run(&["channel", "--model", "aklt", "--n", "7"]);
    assert_eq!(o.status.code(), Some(2), "oversized channel is a resource error");
}

#[test]
fn channel_with_input_state() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("plus.json");
    let out = dir.path().join("out.json");
    // |++><++| on two qubits
    let pairs: Vec<String> = (0..16).map(|_| "[0.25,0.0]".to_string()).collect();
    fs::write(&input, format!(r#"{{"dim":4,"entries":[{}]}}"#, pairs.join(","))).unwrap();
    let o = run(&[
        "channel",
        "--g-ground",
        "--n",
        "2",
        "--input-state",
        input.to_str().unwrap(),
        "--state-out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["coherent_info_at_input"].as_f64().is_some());
    let rho = mps_capacity::channel::DensityMatrix::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rho.dim(), 4);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["capacity", "--g-ground", "--n", "6"])
        .env("MPSCAP_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = fs::read_to_string(dir.path().join("capacity.csv")).unwrap();
    assert!(text.starts_with("model,param,n,estimator"));
}

fn svg_of(args: &[&str], dir: &Path, name: &str) -> String {
    let path = dir.join(name);
    let mut full: Vec<&str> = args.to_vec();
    let p = path.to_str().unwrap().to_string();
    full.extend(["--format", "svg", "--output", &p]);
    let o = run(&full);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    fs::read_to_string(path).unwrap()
}

#[test]
fn svg_plots_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sweep", "--model", "mg", "--g", "0:0.9:0.1", "--n", "8"];
    let a = svg_of(&args, dir.path(), "a.svg");
    let b = svg_of(&args, dir.path(), "b.svg");
    assert_eq!(a, b);
    assert!(a.starts_with("<svg"));
    assert!(a.contains("closed form"));
    assert_eq!(a.matches("<polyline").count(), 2);

    let curve = svg_of(&["capacity", "--theta-ground", "--n-max", "8"], dir.path(), "c.svg");
    assert!(curve.contains(">n<"));

    let o = run(&["capacity", "--theta-ground", "--n", "4", "--format", "svg", "--output", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2), "single point cannot be plotted");
}

#[test]
fn config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"command":"sweep","model":"mg","params":"0:0.9:0.1","n":14}"#).unwrap();
    let from_file = run(&["--config", cfg.to_str().unwrap()]);
    let from_flags = run(&["sweep", "--model", "mg", "--g", "0:0.9:0.1", "--n", "14"]);
    assert_eq!(from_file.status.code(), Some(0));
    assert_eq!(from_file.stdout, from_flags.stdout);

    fs::write(&cfg, r#"{"command":"sweep","mystery":true}"#).unwrap();
    assert_eq!(run(&["--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["--config", "/nonexistent/run.json"]).status.code(), Some(2));
}
