//! End-to-end runs of the `bmmpp` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const MODEL: &str = r#"{"K":2,"D0":[[-5,2],[5,-10]],"Dk":[[1,2],[2,3]]}"#;

struct Dir(PathBuf);

impl Dir {
    fn new(name: &str) -> Self {
        let p = std::env::temp_dir().join(format!("bmmpp-cli-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&p);
        std::fs::create_dir_all(&p).unwrap();
        Dir(p)
    }

    fn file(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.0.join(name);
        std::fs::write(&p, contents).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for Dir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn bmmpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmmpp")).args(args).env_remove("BMMPP_OUT_DIR").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = bmmpp(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn envelope(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    serde_json::from_slice(out.stderr.trim_ascii()).expect("error envelope is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn simulate_is_reproducible() {
    let d = Dir::new("sim");
    let m = d.file("m.json", MODEL);
    let a = ok(&["simulate", "--model", s(&m), "--n", "300", "--seed", "7"]);
    let b = ok(&["simulate", "--model", s(&m), "--n", "300", "--seed", "7"]);
    assert_eq!(a, b);
    assert_eq!(a.lines().next(), Some("t,b"));
    let rows = csv(&a);
    assert_eq!(rows.len(), 300);
    assert!(rows.iter().all(|r| r[0].parse::<f64>().unwrap() > 0.0 && matches!(r[1].as_str(), "1" | "2")));
    assert_ne!(a, ok(&["simulate", "--model", s(&m), "--n", "300", "--seed", "8"]));
}

#[test]
fn fit_then_describe_compares() {
    let d = Dir::new("fit");
    let m = d.file("m.json", MODEL);
    let t = d.path("t.csv");
    ok(&["simulate", "--model", s(&m), "--n", "20000", "--seed", "3", "--out", s(&t)]);
    let f = d.path("fit.json");
    let c = d.path("cmp.csv");
    ok(&["fit", "--trace", s(&t), "--multistart", "16", "--seed", "1", "--out", s(&f), "--compare-out", s(&c)]);
    let res: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&f).unwrap()).unwrap();
    assert_eq!(res["model"]["K"], 2);
    assert_eq!(res["stages"].as_array().unwrap().len(), 2);

    let table = ok(&["describe", "--model", s(&f), "--trace", s(&t)]);
    assert_eq!(table.lines().next(), Some("descriptor,empirical,fitted"));
    assert_eq!(table, std::fs::read_to_string(&c).unwrap());
    let mu1 = csv(&table).into_iter().find(|r| r[0] == "mu1").unwrap();
    let (e, x): (f64, f64) = (mu1[1].parse().unwrap(), mu1[2].parse().unwrap());
    assert!((e - x).abs() / e < 1e-3, "mu1 {e} vs {x}");
}

#[test]
fn em_improves_on_its_start() {
    let d = Dir::new("em");
    let m = d.file("m.json", MODEL);
    let t = d.path("t.csv");
    ok(&["simulate", "--model", s(&m), "--n", "500", "--seed", "5", "--out", s(&t)]);
    let start: serde_json::Value = serde_json::from_str(&ok(&["loglik", "--model", s(&m), "--trace", s(&t)])).unwrap();
    let f = d.path("em.json");
    ok(&["fit", "--trace", s(&t), "--method", "em", "--init", s(&m), "--out", s(&f)]);
    let after: serde_json::Value =
        serde_json::from_str(&ok(&["loglik", "--model", s(&f), "--trace", s(&t)])).unwrap();
    assert_eq!(after["n"], 500);
    assert!(after["loglik"].as_f64().unwrap() >= start["loglik"].as_f64().unwrap() - 1e-6);
}

#[test]
fn count_outputs() {
    let d = Dir::new("count");
    let m = d.file("m.json", MODEL);
    let pmf = ok(&["count", "--model", s(&m), "--t", "0.5,2", "--eps", "1e-12"]);
    assert_eq!(pmf.lines().next(), Some("t,n,p"));
    for t in ["0.5", "2.0"] {
        let mass: f64 = csv(&pmf).iter().filter(|r| r[0] == t).map(|r| r[2].parse::<f64>().unwrap()).sum();
        assert!((mass - 1.0).abs() < 1e-10, "t = {t}: {mass}");
    }
    let stats = ok(&["count", "--model", s(&m), "--t", "1", "--moments"]);
    let row = &csv(&stats)[0];
    // Event rate of this model is 25/7.
    assert!((row[1].parse::<f64>().unwrap() - 25.0 / 7.0).abs() < 1e-12);
    assert!(row[2].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn queue_outputs_and_instability() {
    let d = Dir::new("queue");
    let m = d.file("m.json", MODEL);
    let out = ok(&["queue", "--model", s(&m), "--rho", "0.5"]);
    assert_eq!(out.lines().next(), Some("i,z,tail"));
    let rows = csv(&out);
    let mass: f64 = rows.iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((mass - 1.0).abs() < 1e-8);

    let err = envelope(&bmmpp(&["queue", "--model", s(&m), "--rho", "0.7", "--rho-kind", "batch"]));
    assert_eq!(err["stage"], "queue");
    assert!(err["data"]["rho"].as_f64().unwrap() >= 1.0);
}

#[test]
fn ingest_both_formats() {
    let d = Dir::new("ingest");
    let raw = d.file("raw.txt", "time size\n0.0005 64\n0.0006 1500\n0.0031 64\n0.0100 80\n");
    let f1 = ok(&["ingest", "--input", s(&raw), "--format", "1", "--bin", "1e-3"]);
    let rows = csv(&f1);
    assert_eq!(rows.iter().map(|r| r[1].as_str()).collect::<Vec<_>>(), ["2", "1", "1"]);
    let summary = d.path("sum.json");
    let f2 = ok(&["ingest", "--input", s(&raw), "--format", "2", "--threshold", "100", "--summary", s(&summary)]);
    assert_eq!(csv(&f2).iter().map(|r| r[1].as_str()).collect::<Vec<_>>(), ["1", "2", "1", "1"]);
    let sum: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(sum["n"], 4);

    let err = envelope(&bmmpp(&["ingest", "--input", s(&raw), "--format", "1", "--cap", "1"]));
    assert_eq!(err["stage"], "ingest");
}

#[test]
fn scatter_is_deterministic_and_bounded() {
    let a = ok(&["sample-scatter", "--count", "200", "--seed", "4"]);
    assert_eq!(a, ok(&["sample-scatter", "--count", "200", "--seed", "4"]));
    let rows = csv(&a);
    assert_eq!(rows.len(), 200);
    for r in rows {
        let (cv, rho): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert!(cv >= 1.0 - 1e-12);
        assert!((-1e-12..0.5).contains(&rho));
    }
}

#[test]
fn config_and_out_dir() {
    let d = Dir::new("config");
    let m = d.file("m.json", MODEL);
    let cfg = d.file("cfg.json", r#"{"n": 12, "seed": 9, "out": "nested/sim.csv"}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_bmmpp"))
        .args(["simulate", "--model", s(&m), "--config", s(&cfg)])
        .env("BMMPP_OUT_DIR", &d.0)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let written = std::fs::read_to_string(d.path("nested/sim.csv")).unwrap();
    assert_eq!(written, ok(&["simulate", "--model", s(&m), "--n", "12", "--seed", "9"]));
    // Command-line flags win over the config.
    let short = ok(&["simulate", "--model", s(&m), "--config", s(&d.file("c2.json", r#"{"n": 12}"#)), "--n", "3"]);
    assert_eq!(csv(&short).len(), 3);
}

#[test]
fn errors_use_the_envelope() {
    let d = Dir::new("errors");
    let bad = d.file("bad.json", r#"{"K":1,"D0":[[-1,2],[1,-2]],"Dk":[[0,1]]}"#);
    let err = envelope(&bmmpp(&["describe", "--model", s(&bad)]));
    assert_eq!(err["stage"], "describe");
    assert!(err["message"].as_str().unwrap().contains("invalid model"));

    let t = d.file("t.csv", "t,b\n1.0,1\n-2.0,1\n");
    let m = d.file("m.json", MODEL);
    let err = envelope(&bmmpp(&["loglik", "--model", s(&m), "--trace", s(&t)]));
    assert_eq!(err["stage"], "loglik");

    let err = envelope(&bmmpp(&["count", "--model", s(&m)]));
    assert_eq!(err["stage"], "args");
    for key in ["stage", "message", "data"] {
        assert!(err.get(key).is_some());
    }
}
