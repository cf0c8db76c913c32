use std::path::PathBuf;

use latentq::cli::{run, EXIT_FAIL, EXIT_INPUT, EXIT_PASS};
use serde_json::Value;

fn root(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel).to_string_lossy().into_owned()
}

fn latentq(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("latentq").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn verify_exit_codes() {
    let simplest = root("configs/simplest_lqt.json");
    let (code, out, _) = latentq(&["verify", "--config", &simplest, "--seed", "7", "--trials", "4"]);
    assert_eq!(code, EXIT_PASS);
    let report: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 9);
    assert_eq!(report["seed"], 7);

    let (code, out, _) = latentq(&["verify", "--config", &root("configs/qt.json"), "--trials", "4"]);
    assert_eq!(code, EXIT_PASS);
    let report: Value = serde_json::from_str(&out).unwrap();
    for c in report["checks"].as_array().unwrap() {
        assert!(c["max_deviation"].as_f64().unwrap() < 1e-15);
    }

    let (code, _, err) = latentq(&["verify", "--config", &root("configs/broken.json"), "--trials", "3"]);
    assert_eq!(code, EXIT_FAIL, "{err}");
}

#[test]
fn reports_are_reproducible() {
    let args = ["verify", "--config", &root("configs/simplest_lqt.json"), "--seed", "3", "--trials", "2"];
    let (_, a, _) = latentq(&args);
    let (_, b, _) = latentq(&args);
    assert_eq!(a, b);
}

#[test]
fn bell_outputs() {
    let cfg = root("configs/simplest_lqt.json");
    let (code, csv, _) =
        latentq(&["bell", "--config", &cfg, "--scenario", &root("scenarios/chsh.json"), "--format", "csv"]);
    assert_eq!(code, EXIT_PASS);
    assert_eq!(csv.lines().count(), 17);
    let (_, json, _) = latentq(&["bell", "--config", &cfg, "--scenario", &root("scenarios/chsh.json")]);
    let report: Value = serde_json::from_str(&json).unwrap();
    assert!((report["chsh"].as_f64().unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-6);

    let (code, csv, _) =
        latentq(&["bell", "--config", &cfg, "--scenario", &root("scenarios/single_party.json"), "--format", "csv"]);
    assert_eq!(code, EXIT_PASS);
    assert!(csv.starts_with("x0,a0,p_lqt,p_qt"));

    let (code, json, _) = latentq(&["bell", "--config", &cfg, "--scenario", &root("scenarios/crossed_partition.json")]);
    assert_eq!(code, EXIT_PASS);
    let report: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(report["structure"]["pass"], true);
}

#[test]
fn tomography_outputs() {
    let (code, out, _) = latentq(&["tomography", "--config", &root("configs/simplest_lqt.json"), "--system", "Q,Q"]);
    assert_eq!(code, EXIT_PASS);
    let r: Value = serde_json::from_str(&out).unwrap();
    assert_eq!((r["span"].as_u64(), r["ambient"].as_u64()), (Some(16), Some(64)));
    assert!((r["witness_success"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let (_, out, _) = latentq(&["tomography", "--config", &root("configs/qt.json"), "--system", "Q,Q"]);
    let r: Value = serde_json::from_str(&out).unwrap();
    assert_eq!((r["span"].as_u64(), r["ambient"].as_u64()), (Some(16), Some(16)));
    assert!(r["witness"].is_null());
}

#[test]
fn compose_writes_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let parts = dir.path().join("parts.json");
    std::fs::write(
        &parts,
        r#"{"kind": "state", "parts": [{"system": ["Q"], "op": "zero"}, {"system": ["Q"], "op": "maximally_mixed"}]}"#,
    )
    .unwrap();
    let out = dir.path().join("report.json");
    let (code, stdout, _) = latentq(&[
        "compose",
        "--config",
        &root("configs/simplest_lqt.json"),
        "--parts",
        parts.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_PASS);
    assert!(stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["dim"], 8);
    assert_eq!(r["system"], "Q·Q");
}

#[test]
fn malformed_input_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = root("configs/simplest_lqt.json");
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.to_string_lossy().into_owned()
    };
    let cases: Vec<Vec<String>> = vec![
        vec!["verify".into(), "--config".into(), "/nonexistent.json".into()],
        vec!["verify".into(), "--config".into(), write("a.json", "{not json")],
        vec!["verify".into(), "--config".into(), write("b.json", r#"{"theory": {"labels": {"Q": 2}}, "extra": 1}"#)],
        vec!["verify".into(), "--config".into(), write("c.json", r#"{"theory": {"labels": {"Q": 0}}}"#)],
        vec![
            "verify".into(),
            "--config".into(),
            write(
                "d.json",
                r#"{"theory": {"labels": {"Q": 2}, "default_latent_dim": 2, "default_latent_state": "pure_basis7"}}"#,
            ),
        ],
        vec!["verify".into(), "--config".into(), cfg.clone(), "--tol".into(), "-1".into()],
        vec![
            "bell".into(),
            "--config".into(),
            cfg.clone(),
            "--scenario".into(),
            write(
                "e.json",
                r#"{"parties": [{"system": ["Q"], "settings": ["Z"]}], "state": {"matrix": [[[2, 0], [0, 0]], [[0, 0], [0, 0]]]}}"#,
            ),
        ],
        vec![
            "bell".into(),
            "--config".into(),
            cfg.clone(),
            "--scenario".into(),
            write(
                "f.json",
                r#"{"parties": [{"system": ["Q"], "settings": [{"effects": [[[[1, 0]]]]}]}], "state": "embed_qt:zero"}"#,
            ),
        ],
        vec!["tomography".into(), "--config".into(), cfg.clone(), "--system".into(), "Q".into()],
        vec![
            "compose".into(),
            "--config".into(),
            cfg.clone(),
            "--parts".into(),
            write("g.json", r#"{"kind": "state", "parts": []}"#),
        ],
        vec!["frobnicate".into()],
        vec!["verify".into()],
    ];
    for args in cases {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let (code, _, err) = latentq(&argv);
        assert_eq!(code, EXIT_INPUT, "{args:?}: {err}");
    }
}

#[test]
fn binary_exit_codes_and_env_tolerance() {
    let bin = env!("CARGO_BIN_EXE_latentq");
    let bell = |tol: Option<&str>| {
        let mut cmd = std::process::Command::new(bin);
        cmd.args([
            "bell",
            "--config",
            &root("configs/simplest_lqt.json"),
            "--scenario",
            &root("scenarios/crossed_partition.json"),
        ]);
        cmd.env_remove("LATENTQ_TOL");
        if let Some(t) = tol {
            cmd.env("LATENTQ_TOL", t);
        }
        cmd.output().unwrap().status.code()
    };
    assert_eq!(bell(None), Some(EXIT_PASS));
    assert_eq!(bell(Some("1e-30")), Some(EXIT_FAIL));
    assert_eq!(bell(Some("abc")), Some(EXIT_INPUT));
}
