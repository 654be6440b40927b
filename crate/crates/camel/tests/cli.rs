use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn camel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camel"))
        .args(args)
        .env_remove("CAMEL_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = camel(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_chain_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = smoke_config();
    ok(&["synth", "--config", s(&cfg), "--out-dir", s(&d.join("data"))]);
    ok(&[
        "preprocess",
        "--data",
        s(&d.join("data/train")),
        "--out-dir",
        s(&d.join("pre")),
    ]);
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&d.join("pre")),
        "--out",
        s(&d.join("w.bin")),
    ]);
    let seq = d.join("data/test/synth-002");
    ok(&[
        "track",
        "--model",
        "camel",
        "--weights",
        s(&d.join("w.bin")),
        "--config",
        s(&cfg),
        "--dets",
        s(&seq),
        "--out",
        s(&d.join("pred.txt")),
    ]);
    for m in ["ema", "kf", "fused"] {
        ok(&[
            "track",
            "--model",
            m,
            "--dets",
            s(&seq),
            "--out",
            s(&d.join(format!("{m}.txt"))),
        ]);
    }
    let text = ok(&[
        "evaluate",
        "--gt",
        s(&seq.join("gt.txt")),
        "--pred",
        s(&d.join("pred.txt")),
        "--metrics",
        "idf1,mota,assacc",
        "--json-out",
        s(&d.join("eval.json")),
    ]);
    assert!(text.contains("idf1 ") && text.contains("mota ") && text.contains("assacc "));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("eval.json")).unwrap()).unwrap();
    assert!(report["idf1"]["idf1"].as_f64().unwrap() <= 1.0);

    for kind in ["association", "fusion"] {
        ok(&[
            "oracle",
            "--kind",
            kind,
            "--dets",
            s(&seq),
            "--gt",
            s(&seq.join("gt.txt")),
            "--out",
            s(&d.join(format!("{kind}.txt"))),
        ]);
    }
    for f in [
        "data/manifest.json",
        "pre/manifest.json",
        "w.bin.manifest.json",
        "pred.txt.manifest.json",
        "eval.json.manifest.json",
    ] {
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join(f)).unwrap()).unwrap();
        assert!(m["versions"]["camel"].is_string(), "{f}");
        assert!(!m["outputs"].as_array().unwrap().is_empty(), "{f}");
    }
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("w.bin.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 0);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn gridsearch_scores_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = smoke_config();
    ok(&["synth", "--config", s(&cfg), "--out-dir", s(&d.join("data"))]);
    ok(&[
        "preprocess",
        "--data",
        s(&d.join("data/train")),
        "--out-dir",
        s(&d.join("pre")),
    ]);
    ok(&[
        "gridsearch",
        "--config",
        s(&cfg),
        "--data",
        s(&d.join("pre")),
        "--param-grid",
        "p_swap=0,0.3;learning_rate=0.001",
        "--out-dir",
        s(&d.join("grid")),
    ]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("grid/gridsearch.json")).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
}

#[test]
fn ablation_has_twelve_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("abl");
    let table = ok(&["ablate", "--config", s(&smoke_config()), "--out-dir", s(&out)]);
    let rows: Vec<u32> = table
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(rows, (1..=12).collect::<Vec<_>>());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 12);
    assert_eq!(v[11]["assacc"], 1.0);
}

#[test]
fn seed_flag_beats_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed_env: Option<&str>, flag: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut c = Command::new(env!("CARGO_BIN_EXE_camel"));
        c.args(["synth", "--config", s(&smoke_config()), "--out-dir", s(&out)]);
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        match seed_env {
            Some(v) => c.env("CAMEL_SEED", v),
            None => c.env_remove("CAMEL_SEED"),
        };
        let o = c.output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(out.join("test/synth-002/det.txt")).unwrap()
    };
    let base = run(None, None, "a");
    let env7 = run(Some("7"), None, "b");
    let flag7 = run(Some("3"), Some("7"), "c");
    assert_ne!(base, env7);
    assert_eq!(env7, flag7);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(camel(&["track", "--bogus"]).status.code(), Some(2));
    assert_eq!(camel(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        camel(&["track", "--model", "lstm", "--dets", "x", "--out", "y"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        camel(&["evaluate", "--gt", "a", "--pred", "b", "--metrics", "hota"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        camel(&["ablate", "--out-dir", "x", "--rows", "13"]).status.code(),
        Some(2)
    );
    let o = Command::new(env!("CARGO_BIN_EXE_camel"))
        .args(["synth", "--out-dir", "unused"])
        .env("CAMEL_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn data_errors_exit_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.txt");
    let pred = dir.path().join("pred.txt");
    std::fs::write(&gt, "1,1,0,0,10,10,1\n2,1,0,0,10,nan,1\n").unwrap();
    std::fs::write(&pred, "1,1,0,0,10,10,1\n").unwrap();
    let o = camel(&["evaluate", "--gt", s(&gt), "--pred", s(&pred)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("gt.txt") && err.contains("line 2"), "{err}");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[synth]\nn_objectz = 3\n").unwrap();
    let o = camel(&["synth", "--config", s(&bad), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.toml"));

    let o = camel(&[
        "evaluate",
        "--gt",
        s(&dir.path().join("missing.txt")),
        "--pred",
        s(&pred),
    ]);
    assert_eq!(o.status.code(), Some(1));
}
