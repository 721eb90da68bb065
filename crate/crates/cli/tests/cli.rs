use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(format!("{name}.json"))
}

fn mpcq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpcq")).args(args).output().expect("mpcq runs")
}

fn credit_inputs(dir: &Path) {
    fs::write(dir.join("demographics.csv"), "ssn,zip\n1,10\n2,10\n3,20\n").unwrap();
    fs::write(dir.join("scores1.csv"), "ssn,score\n1,50\n3,70\n").unwrap();
    fs::write(dir.join("scores2.csv"), "ssn,score\n2,90\n4,40\n").unwrap();
}

/// Rows of a CSV keyed by column name, in file order.
fn read_csv(path: &Path) -> Vec<BTreeMap<String, i64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(|v| v.parse().unwrap())).collect())
        .collect()
}

fn simulate(inputs: &Path, out: &Path, seed: u64, extra: &[&str]) -> Output {
    let query = fixture("credit_scores");
    let seed = seed.to_string();
    let mut args = vec![
        "simulate",
        query.to_str().unwrap(),
        "--inputs",
        inputs.to_str().unwrap(),
        "--seed",
        &seed,
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    mpcq(&args)
}

#[test]
fn simulate_writes_outputs_and_passes_audit() {
    let tmp = tempfile::tempdir().unwrap();
    let (inputs, out) = (tmp.path().join("in"), tmp.path().join("run"));
    fs::create_dir(&inputs).unwrap();
    credit_inputs(&inputs);
    let res = simulate(&inputs, &out, 7, &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let mut rows = read_csv(&out.join("outputs/pA/result.csv"));
    rows.sort_by_key(|r| r["zip"]);
    let got: Vec<_> = rows.iter().map(|r| (r["zip"], r["count"], r["total"], r["avg_score"])).collect();
    assert_eq!(got, vec![(10, 2, 140, 70), (20, 1, 70, 70)]);

    for file in ["compiled.json", "trace.json", "ledger.json", "counters.json", "audit.json"] {
        assert!(out.join(file).is_file(), "{file} missing");
    }
    for party in ["pA", "pB", "pC"] {
        assert!(out.join("plans").join(format!("{party}.json")).is_file());
        assert!(out.join("transcripts").join(format!("{party}.json")).is_file());
    }
    let counters: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("counters.json")).unwrap()).unwrap();
    assert_eq!(counters["total"], counters["estimate"]["total"]);

    let audit = mpcq(&["audit", out.to_str().unwrap()]);
    assert_eq!(audit.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&audit.stdout).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn audit_flags_tampered_ledger() {
    let tmp = tempfile::tempdir().unwrap();
    let (inputs, out) = (tmp.path().join("in"), tmp.path().join("run"));
    fs::create_dir(&inputs).unwrap();
    credit_inputs(&inputs);
    assert!(simulate(&inputs, &out, 1, &[]).status.success());

    let path = out.join("ledger.json");
    let mut ledger: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let events = ledger["events"].as_array_mut().unwrap();
    let mut forged = events
        .iter()
        .find(|e| e["item"]["kind"] == "column_values" && e["item"]["relation"] == "scores1")
        .expect("pB sees its own input")
        .clone();
    forged["item"]["relation"] = "scores2".into();
    events.push(forged);
    fs::write(&path, serde_json::to_string(&ledger).unwrap()).unwrap();

    let audit = mpcq(&["audit", out.to_str().unwrap()]);
    assert_eq!(audit.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&audit.stdout).unwrap();
    assert_eq!(report["violations"].as_array().unwrap().len(), 1);
}

#[test]
fn missing_input_names_the_owner() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = tmp.path().join("in");
    fs::create_dir(&inputs).unwrap();
    credit_inputs(&inputs);
    fs::remove_file(inputs.join("scores2.csv")).unwrap();
    let res = simulate(&inputs, &tmp.path().join("run"), 0, &[]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("pC") && err.contains("scores2"), "{err}");
}

#[test]
fn withheld_consent_fails_compilation() {
    let query = fixture("market_concentration");
    let res = mpcq(&["compile", query.to_str().unwrap(), "--consent=pB:false"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("pB"));
    assert!(mpcq(&["compile", query.to_str().unwrap()]).status.success());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(mpcq(&["simulate"]).status.code(), Some(2));
    assert_eq!(mpcq(&["frobnicate"]).status.code(), Some(2));
    let query = fixture("comorbidity");
    assert_eq!(mpcq(&["verify", query.to_str().unwrap(), "--trials", "0"]).status.code(), Some(2));
}

#[test]
fn verify_reports_clean_trials() {
    let query = fixture("comorbidity");
    let res = mpcq(&["verify", query.to_str().unwrap(), "--trials", "5", "--max-rows", "20", "--large-rows", "50"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 5);
}

#[test]
fn seed_changes_transcripts_but_not_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = tmp.path().join("in");
    fs::create_dir(&inputs).unwrap();
    credit_inputs(&inputs);
    let runs: Vec<PathBuf> = [7u64, 7, 8]
        .iter()
        .enumerate()
        .map(|(i, seed)| {
            let out = tmp.path().join(format!("run{i}"));
            assert!(simulate(&inputs, &out, *seed, &[]).status.success());
            out
        })
        .collect();
    let read = |dir: &Path, file: &str| fs::read_to_string(dir.join(file)).unwrap();
    let result = "outputs/pA/result.csv";
    let transcript = "transcripts/pB.json";
    assert_eq!(read(&runs[0], result), read(&runs[2], result));
    assert_eq!(read(&runs[0], transcript), read(&runs[1], transcript));
    assert_ne!(read(&runs[0], transcript), read(&runs[2], transcript));
}
