use std::path::Path;
use std::process::{Command, Output};

fn encstore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_encstore"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn reduce_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = encstore(&[
            "reduce",
            "--k",
            "5",
            "--variance",
            "0.95",
            "--seed",
            "7",
            "--out",
            path(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ta = std::fs::read_to_string(a.join("repdays.csv")).unwrap();
    assert_eq!(ta, std::fs::read_to_string(b.join("repdays.csv")).unwrap());
    assert!(ta.starts_with("# encstore config_hash="));

    let one = dir.path().join("one");
    assert!(encstore(&["reduce", "--k", "1", "--out", path(&one)])
        .status
        .success());
    let text = std::fs::read_to_string(one.join("repdays.csv")).unwrap();
    let days = encstore_core::scenario::parse_repdays(
        &text,
        &encstore_core::desk::desk_system(encstore_core::desk::DESK_SEED).days(),
    )
    .unwrap();
    assert_eq!(days.len(), 1);
    assert_eq!(days[0].probability, 1.0);
}

#[test]
fn bad_configuration_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = encstore(&["sweep", "--carbon-prices", "", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = encstore(&[
        "--set",
        "no_such_key=1",
        "reduce",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));
    let o = encstore(&["reduce", "--k", "0", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mps_only_writes_models_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = encstore(&[
        "--solver",
        "mps-only",
        "--set",
        "k=2",
        "plan",
        "--enc",
        "on",
        "--out",
        path(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["baseline_day0.mps", "baseline_day1.mps", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let m = json(&dir.path().join("manifest.json"));
    // the ENC model needs baselines, which only a solver can provide
    assert!(m["pending"].is_string());
    assert!(!dir.path().join("viu.mps").exists());
    let model = encstore_milp::import_mps(&dir.path().join("baseline_day0.mps")).unwrap();
    assert!(model.has_integers());
}

#[test]
fn plan_writes_outcome_with_evidence() {
    let dir = tempfile::tempdir().unwrap();
    let viu = dir.path().join("viu");
    let o = encstore(&[
        "--set",
        "k=2",
        "plan",
        "--perspective",
        "viu",
        "--enc",
        "off",
        "--out",
        path(&viu),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&viu.join("outcome.json"));
    let cost = v["outcome"]["social_cost"].as_f64().unwrap();
    assert_eq!(v["outcome"]["evidence"]["viu_bound"].as_f64(), Some(cost));
    assert!(v["duality"]["max_duality_gap"].as_f64().unwrap() <= 1e-7);
    assert!(v["duality"]["profit_gap"].as_f64().unwrap() <= 1e-6);
    let hash = v["config_hash"].as_str().unwrap().to_string();
    let records = std::fs::read_to_string(viu.join("records.csv")).unwrap();
    assert!(records.starts_with(&format!("# encstore config_hash={hash}")));

    let phsi = dir.path().join("phsi");
    let o = encstore(&[
        "--set",
        "k=2",
        "plan",
        "--perspective",
        "phsi",
        "--enc",
        "on",
        "--out",
        path(&phsi),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = json(&phsi.join("outcome.json"));
    assert!(p["outcome"]["profit"].as_f64().unwrap() >= 0.0);
    assert!(p["audit"]["enc_excess"].as_f64().unwrap() <= 1e-6);
    assert_ne!(p["config_hash"].as_str().unwrap(), hash);
}

#[test]
fn sweep_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = encstore(&[
            "--set",
            "k=2",
            "sweep",
            "--carbon-prices",
            "0",
            "--storage-prices",
            "40000",
            "--perspectives",
            "viu",
            "--out",
            path(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in [
        "sweep.csv",
        "failures.csv",
        "report/summary.csv",
        "report/emissions.svg",
    ] {
        let ta = std::fs::read(a.join(f)).unwrap();
        assert_eq!(ta, std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = std::fs::read_to_string(a.join("sweep.csv")).unwrap();
    // stamp, header, two ENC arms
    assert_eq!(csv.lines().count(), 4);
}
