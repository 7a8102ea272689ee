use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn beltrami(command: &str, out: &Path, extra: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_beltrami"))
        .arg(command)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn result(out: &Path, command: &str) -> Value {
    let text = std::fs::read_to_string(out.join(format!("{command}.json"))).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["command"], command);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    v["result"].clone()
}

#[test]
fn zero_coefficients_solve_in_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = beltrami("solve", dir.path(), &["--override", "n=64", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = result(dir.path(), "solve");
    assert_eq!(r["iterations"], 1);
    assert!(r["ratio"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("h.bin").exists());
}

#[test]
fn unit_weight_has_constant_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = beltrami("apconst", dir.path(), &["--override", "n=64"]);
    assert!(o.status.success());
    let e = result(dir.path(), "apconst")["estimate"].as_f64().unwrap();
    assert!((e - 1.0).abs() < 1e-12, "{e}");
}

#[test]
fn radial_stretch_matches_its_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = beltrami("qcmap", dir.path(), &["--override", "n=128", "--override", "mu=radial_stretch"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = result(dir.path(), "qcmap");
    assert_eq!(r["K"].as_f64().unwrap(), 2.0);
    assert!(r["oracle_sup_error"].as_f64().unwrap() <= 5e-2);
    let mesh = std::fs::read_to_string(dir.path().join("mesh.csv")).unwrap();
    assert!(mesh.starts_with("family,line,x,y"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--override", "n=64", "--override", "kind=apriori", "--override", "ensemble=3", "--seed", "11"];
    assert!(beltrami("probe", a.path(), &args).status.success());
    assert!(beltrami("probe", b.path(), &args).status.success());
    let x = std::fs::read(a.path().join("probe.json")).unwrap();
    let y = std::fs::read(b.path().join("probe.json")).unwrap();
    assert_eq!(x, y);
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("job.cfg");
    std::fs::write(&cfg, "# transform job\nn = 32\nop = beurling\nfield = disk\n").unwrap();
    let o = beltrami("transform", dir.path(), &["--config", cfg.to_str().unwrap(), "--override", "op=maximal"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = result(dir.path(), "transform");
    assert_eq!(r["op"], "maximal");
    assert_eq!(r["n"], 32);
}

#[test]
fn report_collects_numeric_results() {
    let dir = tempfile::tempdir().unwrap();
    assert!(beltrami("apconst", dir.path(), &["--override", "n=32"]).status.success());
    assert!(beltrami("report", dir.path(), &[]).status.success());
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("file,command,experiment,config_hash,metric,value"));
    assert!(csv.lines().any(|l| l.starts_with("apconst.json,apconst,") && l.contains(",estimate,")));
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_value = beltrami("solve", dir.path(), &["--override", "n=many"]);
    assert_eq!(bad_value.status.code(), Some(1));
    let bad_choice = beltrami("transform", dir.path(), &["--override", "op=laplace"]);
    assert_eq!(bad_choice.status.code(), Some(1));
    let missing = beltrami("solve", dir.path(), &["--config", "/nonexistent/job.cfg"]);
    assert_eq!(missing.status.code(), Some(3));
    let diverging = beltrami(
        "solve",
        dir.path(),
        &["--override", "n=32", "--override", "mu=bump", "--override", "mu_re=0.9", "--override", "max_iter=2"],
    );
    assert_eq!(diverging.status.code(), Some(2), "{}", String::from_utf8_lossy(&diverging.stderr));
}
