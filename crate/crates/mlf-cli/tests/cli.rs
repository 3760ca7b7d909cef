use std::collections::BTreeSet;
use std::fs;
use std::process::Command as Proc;

use mlf_cli::*;
use sha2::{Digest, Sha256};

fn cfg(text: &str) -> RunConfig {
    parse_config(text).unwrap()
}

#[test]
fn empty_config_gives_defaults() {
    let c = cfg("{}");
    assert_eq!(c, RunConfig::default());
    assert_eq!(c.scenario, Scenario::Morse("sphere2-height".into()));
    assert_eq!(c.command, Command::ReportAll);
    assert!(c.overridden.is_empty());
    assert_eq!(c.tol("monodromy"), 1e-4);
}

#[test]
fn overrides_are_recorded() {
    let c = cfg(r#"{"scenario": "quadric-n3", "command": "verify-lemma h0", "seed": 7, "tolerances": {"transport-fiber": 1e-8}}"#);
    assert_eq!(c.scenario, Scenario::Morse("quadric-n3".into()));
    assert_eq!(c.command, Command::VerifyLemma(Lemma::H0));
    assert_eq!(c.seed, 7);
    assert_eq!(c.tol("transport-fiber"), 1e-8);
    assert_eq!(c.overridden, BTreeSet::from(["transport-fiber".to_string()]));
    assert_eq!(cfg(r#"{"scenario": "heegaard-genus-3"}"#).scenario, Scenario::Heegaard(3));
}

#[test]
fn bad_configs_are_rejected() {
    match parse_config("{\n  \"seed\": 3,\n  \"scenario\": \n}") {
        Err(CliError::Parse { line, column, .. }) => assert_eq!((line, column), (4, 1)),
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_config(r#"{"sead": 1}"#), Err(CliError::UnknownKey(k)) if k == "sead"));
    assert!(matches!(parse_config(r#"{"tolerances": {"nope": 1.0}}"#), Err(CliError::UnknownKey(_))));
    assert!(matches!(parse_config(r#"{"tolerances": {"monodromy": -1.0}}"#), Err(CliError::Invalid(_))));
    assert!(matches!(parse_config(r#"{"scenario": "klein-bottle"}"#), Err(CliError::UnknownScenario(_))));
    assert!(matches!(parse_config(r#"{"command": "verify-lemma xyz"}"#), Err(CliError::UnknownCommand(_))));
    assert!(matches!(parse_config(r#"{"samples": 0}"#), Err(CliError::Invalid(_))));
    for e in [parse_config("{"), parse_config(r#"{"sead": 1}"#)] {
        assert_eq!(e.unwrap_err().exit_code(), 2);
    }
}

#[test]
fn command_names_round_trip() {
    for name in ["transport", "monodromy", "thimble", "morse-smale", "probe-incompleteness", "heegaard-export", "double-check", "scan-delta", "report-all"] {
        assert_eq!(name.parse::<Command>().unwrap().to_string(), name);
    }
    for l in Lemma::ALL {
        let s = format!("verify-lemma {}", l.name());
        assert_eq!(s.parse::<Command>().unwrap(), Command::VerifyLemma(l));
    }
}

#[test]
fn heegaard_export_writes_the_diagram() {
    let mut c = cfg(r#"{"scenario": "heegaard-genus-1", "command": "heegaard-export"}"#);
    let r = run_command(&c);
    assert_eq!(r.exit_code(), 0);
    assert_eq!(r.check("heegaard-curves").unwrap().detail, "4 framed attaching curves");
    let files: Vec<&str> = r.artifacts.iter().map(|a| a.file.as_str()).collect();
    assert_eq!(files, ["heegaard.txt", "heegaard.svg", "heegaard.json"]);
    c.command = Command::Monodromy;
    let r = run_command(&c);
    assert_eq!(r.checks[0].status, Status::Skipped);
    assert!(!r.checks[0].detail.is_empty());
}

#[test]
fn monodromy_emits_table_and_plot() {
    let c = cfg(r#"{"scenario": "quadric-n2", "command": "monodromy"}"#);
    let r = run_command(&c);
    let rec = r.check("monodromy-twist").unwrap();
    assert_eq!(rec.status, Status::Pass);
    assert_eq!(rec.tolerance, Some(1e-4));
    assert!(rec.margin.unwrap() > 0.0);
    let csv = &r.artifacts.iter().find(|a| a.file == "monodromy.csv").unwrap().contents;
    assert_eq!(csv.lines().next().unwrap(), "r,measured,model,radial_error,fiber_error");
    assert_eq!(csv.lines().count(), 22);
    assert!(r.artifacts.iter().any(|a| a.file == "monodromy.svg" && a.contents.starts_with("<svg")));
    assert!(r.artifacts.iter().any(|a| a.file == "annulus.svg"));
}

#[test]
fn report_all_runs_every_group_once() {
    let c = cfg(r#"{"scenario": "sphere2-height", "samples": 4000}"#);
    let r = run_command(&c);
    let names: Vec<&str> = r.checks.iter().map(|c| c.name.as_str()).collect();
    let unique: BTreeSet<&str> = names.iter().copied().collect();
    assert_eq!(unique.len(), names.len());
    for prefix in ["hnu", "cnu", "h0", "slope", "pf", "surgery", "sharp", "pw", "transport", "monodromy", "thimble", "morse-smale", "probe", "double", "scan-delta", "heegaard"] {
        assert!(names.iter().any(|n| n.starts_with(prefix)), "{prefix}");
    }
    for c in &r.checks {
        if c.status == Status::Skipped {
            assert!(!c.detail.is_empty(), "{}", c.name);
        }
    }
    // the doubled sphere values do not hold, so the run fails
    assert_eq!(r.check("h0-sphere-values-2r2").unwrap().status, Status::Fail);
    assert_eq!(r.check("h0-sphere-values-r2").unwrap().status, Status::Pass);
    assert_eq!(r.exit_code(), 1);
    let torus = run_command(&cfg(r#"{"scenario": "torus-tilted", "command": "verify-lemma pf"}"#));
    assert_eq!(torus.checks[0].status, Status::Skipped);
}

#[test]
fn outputs_are_deterministic_and_hashed() {
    let c = cfg(r#"{"scenario": "quadric-n2", "command": "report-all", "samples": 3000}"#);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = emit_outputs(&run_command(&c), a.path()).unwrap();
    let mb = emit_outputs(&run_command(&c), b.path()).unwrap();
    assert_eq!(ma, mb);
    assert!(ma.len() > 3);
    for e in &ma {
        let bytes = fs::read(a.path().join(&e.file)).unwrap();
        assert_eq!(bytes, fs::read(b.path().join(&e.file)).unwrap());
        assert_eq!(e.bytes, bytes.len());
        assert_eq!(e.sha256, hex::encode(Sha256::digest(&bytes)));
    }
    assert_eq!(fs::read(a.path().join("manifest.json")).unwrap(), fs::read(b.path().join("manifest.json")).unwrap());
    let report = fs::read_to_string(a.path().join("report.json")).unwrap();
    assert!(report.contains("\"tolerance\"") && report.contains("\"margin\""));
    assert!(!report.contains("runtime"));
    let csv = fs::read_to_string(a.path().join("checks.csv")).unwrap();
    assert!(csv.starts_with("name,status,value,tolerance,margin,detail\n"));
}

#[test]
fn emit_surfaces_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    fs::write(&file, "x").unwrap();
    let r = run_command(&cfg(r#"{"scenario": "heegaard-genus-0", "command": "heegaard-export"}"#));
    let e = emit_outputs(&r, &file.join("sub")).unwrap_err();
    assert!(matches!(e, CliError::Io { .. }));
    assert_eq!(e.exit_code(), 1);
}

fn mlf() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_mlf"))
}

#[test]
fn binary_exit_codes_and_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let st = mlf().args(["heegaard-export", "--scenario", "heegaard-genus-2"]).env("MLF_OUT_DIR", dir.path()).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(dir.path().join("heegaard.svg").exists() && dir.path().join("manifest.json").exists());

    let out = dir.path().join("explicit");
    let st = mlf().args(["verify-lemma", "h0", "--scenario", "quadric-n2", "--out"]).arg(&out).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(out.join("report.json").exists());

    assert_eq!(mlf().args(["transport", "--scenario", "nowhere"]).output().unwrap().status.code(), Some(2));
    assert_eq!(mlf().args(["fly"]).output().unwrap().status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"scenario\": 1}").unwrap();
    let st = mlf().args(["transport", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("line 1"));

    let good = dir.path().join("good.json");
    fs::write(&good, r#"{"scenario": "quadric-n2", "seed": 4}"#).unwrap();
    let st = mlf().args(["transport", "--config"]).arg(&good).arg("--out").arg(dir.path().join("t")).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stdout));
    let report = fs::read_to_string(dir.path().join("t/report.json")).unwrap();
    assert!(report.contains("\"seed\": 4") && report.contains("\"scenario\": \"quadric-n2\""));
}
