use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const LOGISTIC: &str = r#"{"d": 1, "p": 2, "w": [[[[-1, 0]]], [[[1, 0]]]], "phi0": [[0.5, 0]]}"#;

fn carleman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carleman")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "logistic.json", LOGISTIC);
    let out = dir.path().join("ok");
    let res = carleman(&["certify", "--system", s(&good), "--level", "3", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(std::fs::read_to_string(out.join("certificate.json")).unwrap().contains("\"Lambda1\""));

    let bad = write(dir.path(), "unstable.toml", "d = 1\np = 1\nw = [[[1.0]]]\nphi0 = [0.1]\n");
    let out = dir.path().join("bad");
    let res = carleman(&["certify", "--system", s(&bad), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    let report: String = std::fs::read_to_string(out.join("certificate.json")).unwrap();
    let ws = report.find("\"W_S\"").unwrap();
    assert!(report[ws..].split('}').next().unwrap().contains("\"fail\""));

    let res = carleman(&["certify", "--system", s(&dir.path().join("missing.json"))]);
    assert_eq!(res.status.code(), Some(2));
    let broken = write(dir.path(), "broken.json", "{\"d\": 1");
    let res = carleman(&["certify", "--system", s(&broken), "--out", s(&dir.path().join("x"))]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn converge_rows_flags_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write(dir.path(), "logistic.json", LOGISTIC);
    let run = |name: &str, nmax: &str| {
        let out = dir.path().join(name);
        let res = carleman(&["converge", "--system", s(&sys), "--level-max", nmax, "--seed", "7", "--out", s(&out)]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        (std::fs::read(out.join("convergence.csv")).unwrap(), std::fs::read_to_string(out.join("convergence_manifest.json")).unwrap())
    };
    let (csv, manifest) = run("a", "10");
    let text = String::from_utf8(csv.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sweep_var,e1,eta2,eta3,bound_eta1,R,fitted_ratio");
    assert_eq!(lines.len(), 11);
    assert!(!lines[10].ends_with(','));
    assert!(manifest.contains("system_sha256"));
    assert_eq!(run("b", "10").0, csv);

    let (single, manifest) = run("c", "1");
    assert_eq!(String::from_utf8(single).unwrap().lines().count(), 2);
    assert!(manifest.contains("insufficient points"));
}

#[test]
fn burgers_case_study_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ok");
    let res = carleman(&["burgers", "--order", "3", "--modes", "4", "--viscosity", "auto", "--samples", "2000", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["km_baseline.json", "burgers_certificate.json", "burgers_convergence.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(carleman(&["burgers", "--order", "2", "--out", s(&dir.path().join("even"))]).status.code(), Some(2));
    let weak = dir.path().join("weak");
    let res = carleman(&["burgers", "--viscosity", "1e-6", "--samples", "500", "--out", s(&weak)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(weak.join("burgers_certificate.json").exists());
    assert!(!weak.join("burgers_convergence.csv").exists());
}

#[test]
fn km_bounds_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("km");
    assert_eq!(carleman(&["km", "--cutoff-p", "50", "--cutoff-m", "100", "--out", s(&out)]).status.code(), Some(0));
    let baseline = out.join("km_baseline.json");
    let res = carleman(&["km", "--cutoff-p", "50", "--cutoff-m", "100", "--baseline", s(&baseline), "--out", s(&dir.path().join("km2"))]);
    assert_eq!(res.status.code(), Some(0));
    let off = write(dir.path(), "off.json", r#"{"M": 3, "cutoff_P": 50, "cutoff_m": 100, "value": 0.7, "tail": 0.0}"#);
    let res = carleman(&["km", "--cutoff-p", "50", "--cutoff-m", "100", "--baseline", s(&off), "--out", s(&dir.path().join("km3"))]);
    assert_eq!(res.status.code(), Some(1));

    let sys = write(dir.path(), "weak.json", r#"{"d": 1, "p": 2, "w": [[[-1]], [[0.3]]], "phi0": [0.1]}"#);
    let res = carleman(&["bounds", "--system", s(&sys), "--level", "4", "--lambdas", "0.5,1,2,10", "--out", s(&dir.path().join("b"))]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let strong = write(dir.path(), "strong.json", r#"{"d": 1, "p": 2, "w": [[[-1]], [[0.6]]], "phi0": [0.1]}"#);
    let res = carleman(&["bounds", "--system", s(&strong), "--out", s(&dir.path().join("b2"))]);
    assert_eq!(res.status.code(), Some(1));

    let logistic = write(dir.path(), "logistic.json", LOGISTIC);
    let sim = dir.path().join("sim");
    let res = carleman(&["simulate", "--system", s(&logistic), "--level", "6", "--points", "5", "--out", s(&sim)]);
    assert_eq!(res.status.code(), Some(0));
    let csv = std::fs::read_to_string(sim.join("simulate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.lines().nth(1).unwrap().starts_with("0,0,0.5,0,0.5,0"));
}

#[test]
fn config_file_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write(dir.path(), "logistic.json", LOGISTIC);
    let out = dir.path().join("cfg");
    let cfg = write(dir.path(), "run.toml", &format!("system = {:?}\nlevel_max = 3\nout = {:?}\n", s(&sys), s(&out)));
    let res = carleman(&["converge", "--config", s(&cfg), "--level-max", "4"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(std::fs::read_to_string(out.join("convergence.csv")).unwrap().lines().count(), 5);

    let res = Command::new(env!("CARGO_BIN_EXE_carleman"))
        .args(["converge", "--config", s(&cfg)])
        .env("CARLEMAN_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0));
    let res = Command::new(env!("CARGO_BIN_EXE_carleman")).args(["km"]).env("CARLEMAN_THREADS", "lots").output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    let bogus = write(dir.path(), "bogus.toml", "levels = 3\n");
    assert_eq!(carleman(&["km", "--config", s(&bogus)]).status.code(), Some(2));
    assert_eq!(carleman(&["nonsense"]).status.code(), Some(2));
}
