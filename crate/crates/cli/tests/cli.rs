use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entorder"))
}

fn run(args: &[&str]) -> (i32, Value, String) {
    let out = bin().args(args).output().expect("binary runs");
    let code = out.status.code().unwrap_or(-1);
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    let json = serde_json::from_str(&stdout).unwrap_or(Value::Null);
    (code, json, stderr)
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const W_STATE: &str = r#"{"dims":[2,2,2],"amps":[
 {"idx":[0,0,1],"re":1,"im":0},{"idx":[0,1,0],"re":1,"im":0},{"idx":[1,0,0],"re":1,"im":0}]}"#;

#[test]
fn analyze_w_from_catalog() {
    let (code, r, _) = run(&["analyze", "--catalog", "W"]);
    assert_eq!(code, 0);
    let res = &r["results"];
    assert_eq!(res["invariants"]["tensor_rank"]["value"], 3);
    assert_eq!(res["invariants"]["local_ranks"], serde_json::json!([2, 2, 2]));
    assert_eq!(res["partition"], serde_json::json!([[1, 2, 3]]));
    assert_eq!(r["tool"]["name"], "entorder");
    assert_eq!(r["seed"], 0);
    assert_eq!(r["inputs"], serde_json::json!(["catalog:W"]));
}

#[test]
fn analyze_psi4_and_state_file() {
    let (_, r, _) = run(&["analyze", "--catalog", "Psi4", "--format", "raw"]);
    assert_eq!(r["invariants"]["tensor_rank"]["value"], 4);
    assert_eq!(r["invariants"]["local_ranks"], serde_json::json!([2, 3, 3]));

    let dir = TempDir::new().unwrap();
    let f = write(dir.path(), "w.state", W_STATE);
    let (code, r, _) = run(&["analyze", &f, "--format", "raw"]);
    assert_eq!(code, 0);
    assert!((r["norm"].as_f64().unwrap() - 3f64.sqrt()).abs() < 1e-12);
    assert_eq!(r["ghz_witness"]["present"], false);
}

#[test]
fn reports_are_byte_identical() {
    let a = bin().args(["compare", "--catalog", "theta08", "--catalog", "Bell", "--seed", "5"]).output().unwrap();
    let b = bin().args(["compare", "--catalog", "theta08", "--catalog", "Bell", "--seed", "5"]).output().unwrap();
    assert_eq!(a.stdout, b.stdout);
    let c = bin().args(["simulate", "rus", "--src-catalog", "theta08", "--target-catalog", "Bell", "--trials", "500"]).output().unwrap();
    let d = bin().args(["simulate", "rus", "--src-catalog", "theta08", "--target-catalog", "Bell", "--trials", "500"]).output().unwrap();
    assert_eq!(c.stdout, d.stdout);
}

#[test]
fn compare_ghz_w_all_regimes() {
    let (code, r, _) = run(&["compare", "--catalog", "GHZ2x3", "--catalog", "W", "--regime", "all", "--format", "raw"]);
    assert_eq!(code, 0);
    let v = r["verdicts"].as_array().unwrap();
    let by: Vec<(&str, &str)> = v.iter().map(|x| (x["regime"].as_str().unwrap(), x["answer"].as_str().unwrap())).collect();
    assert!(by.contains(&("SLOCC", "No")));
    assert!(by.contains(&("MCLOCC", "Yes")));
    let locc = by.iter().find(|x| x.0 == "LOCC").unwrap().1;
    assert!(locc == "No" || locc == "Unknown");
    for x in v {
        assert!(x.get("witness_ref").is_some());
    }
}

#[test]
fn compare_identity_with_files_and_mixed_order() {
    let dir = TempDir::new().unwrap();
    let f = write(dir.path(), "a.state", W_STATE);
    let (code, r, _) = run(&["compare", &f, &f, "--regime", "locc", "--format", "raw"]);
    assert_eq!(code, 0);
    assert_eq!(r["verdicts"][0]["answer"], "Yes");
    assert_eq!(r["verdicts"][0]["reason"]["kind"], "identity");

    // catalog first, file second
    let (_, r, _) = run(&["compare", "--catalog", "theta08", &write(dir.path(), "bell.state", BELL), "--regime", "slocc"]);
    assert_eq!(r["inputs"][0], "catalog:theta08");
    assert_eq!(r["results"]["verdicts"][0]["answer"], "Yes");
    let wref = r["results"]["verdicts"][0]["witness_ref"].as_str().unwrap();
    assert_eq!(r["results"]["witnesses"][0]["id"], wref);
}

const BELL: &str = r#"{"dims":[2,2],"amps":[{"idx":[0,0],"re":1,"im":0},{"idx":[1,1],"re":1,"im":0}]}"#;

#[test]
fn compare_psi2_psi5_is_unknown_and_exits_zero() {
    let (code, r, _) = run(&["compare", "--catalog", "Psi2", "--catalog", "Psi5", "--regime", "slocc", "--format", "raw"]);
    assert_eq!(code, 0);
    assert_eq!(r["verdicts"][0]["answer"], "Unknown");
}

#[test]
fn mcslocc_alias_adds_a_note() {
    let (code, r, _) = run(&["compare", "--catalog", "W", "--catalog", "GHZ2", "--regime", "mcslocc", "--format", "raw"]);
    assert_eq!(code, 0);
    assert_eq!(r["verdicts"][0]["regime"], "MCLOCC");
    assert_eq!(r["notes"].as_array().unwrap().len(), 1);
}

#[test]
fn simulate_ghz_merge() {
    let (code, r, _) = run(&["simulate", "ghz-merge", "-d", "3", "--left", "2", "--right", "3", "--exhaustive", "--format", "raw"]);
    assert_eq!(code, 0);
    assert_eq!(r["trace"]["branches"].as_array().unwrap().len(), 3);
    assert!((r["trace"]["success_probability"].as_f64().unwrap() - 1.0).abs() < 1e-10);
}

#[test]
fn simulate_ghz_to_reduced_separable_from_a_file() {
    let dir = TempDir::new().unwrap();
    // 0.6|0,0,0⟩ + 0.8|1⟩(|0⟩+|1⟩)/√2|1⟩
    let h = 0.8 / 2f64.sqrt();
    let text = format!(
        r#"{{"dims":[2,2,2],"amps":[{{"idx":[0,0,0],"re":0.6,"im":0}},{{"idx":[1,0,1],"re":{h},"im":0}},{{"idx":[1,1,1],"re":{h},"im":0}}]}}"#
    );
    let f = write(dir.path(), "vecs.state", &text);
    let (code, r, _) = run(&["simulate", "ghz-to-rsep", "-d", "2", "-N", "3", "--p", "0.36,0.64", "--a-file", &f, "--format", "raw"]);
    assert_eq!(code, 0);
    for b in r["trace"]["branches"].as_array().unwrap() {
        assert!(b["overlap"].as_f64().unwrap() > 1.0 - 1e-9);
    }
    let (code, _, err) = run(&["simulate", "ghz-to-rsep", "-d", "2", "-N", "3", "--p", "0.5,0.5", "--a-file", &f]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn simulate_rus_matches_the_exact_probability() {
    let (code, r, _) = run(&["simulate", "rus", "--src-catalog", "theta08", "--target-catalog", "Bell", "--trials", "10000", "--seed", "7", "--format", "raw"]);
    assert_eq!(code, 0);
    assert!((r["single_trial_probability"].as_f64().unwrap() - 0.72).abs() < 1e-9);
    assert!(r["deviation_in_sigma"].as_f64().unwrap() < 5.0);
}

#[test]
fn simulate_teleport_sampled_and_bell_extract() {
    let (code, r, _) = run(&["simulate", "teleport", "--payload", "0.6,0.8", "--sample", "--seed", "9", "--format", "raw"]);
    assert_eq!(code, 0);
    assert_eq!(r["trace"]["branches"].as_array().unwrap().len(), 1);
    let (code, r, _) = run(&["simulate", "bell-extract", "--src-catalog", "W", "--pair", "1,3", "--format", "raw"]);
    assert_eq!(code, 0);
    assert_eq!(r["pair"], serde_json::json!([1, 3]));
}

#[test]
fn graph_fig1_writes_dot() {
    let dir = TempDir::new().unwrap();
    let dot = dir.path().join("out.dot");
    let (code, r, _) = run(&["graph", "--catalog", "fig1", "--dot", dot.to_str().unwrap(), "--format", "raw"]);
    assert_eq!(code, 0);
    assert_eq!(r["edges"], serde_json::json!([[1, 2], [2, 3]]));
    let text = fs::read_to_string(&dot).unwrap();
    assert!(text.contains("A1 -- A2;") && text.contains("A2 -- A3;") && text.contains("A4;"));

    let (_, r, _) = run(&["graph", "--catalog", "GHZ2x3", "--format", "raw"]);
    assert_eq!(r["edges"], serde_json::json!([[1, 2], [1, 3], [2, 3]]));
    let (_, r, _) = run(&["graph", "--catalog", "prod3", "--format", "raw"]);
    assert_eq!(r["edges"], serde_json::json!([]));
}

#[test]
fn rank_examples_and_witness_export() {
    let (_, r, _) = run(&["rank", "--catalog", "Psi6", "--format", "raw"]);
    assert_eq!((r["value"].clone(), r["method"].clone()), (serde_json::json!(4), serde_json::json!("pencil")));
    let (_, r, _) = run(&["rank", "--catalog", "GHZ5", "--format", "raw"]);
    assert_eq!(r["value"], 5);
    assert_eq!(r["method"], "flattening+construction");
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("terms.json");
    let (code, r, _) = run(&["rank", "--catalog", "W", "--budget", "high", "--witness-out", out.to_str().unwrap(), "--format", "raw"]);
    assert_eq!(code, 0);
    assert_eq!(r["value"], 3);
    let terms: Vec<Value> = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(terms.len(), 3);
}

#[test]
fn catalog_lists_entries() {
    let (code, r, _) = run(&["catalog", "--format", "raw"]);
    assert_eq!(code, 0);
    let names: Vec<&str> = r["entries"].as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    for n in ["GHZ2", "W", "Psi1", "Psi6", "fig1", "tgp10", "theta08", "incomp224"] {
        assert!(names.contains(&n), "{n}");
    }
}

#[test]
fn out_flag_writes_the_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    let o = bin().args(["analyze", "--catalog", "W", "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let r: Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(r["command"], serde_json::json!(["analyze", "--catalog", "W", "--out", dir.path().join("r.json").to_str().unwrap()]));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    // input errors
    let bad = write(dir.path(), "bad.state", r#"{"dims":[2],"amps":[{"idx":[3],"re":1,"im":0}]}"#);
    let (code, _, err) = run(&["analyze", &bad]);
    assert_eq!(code, 2);
    assert!(err.contains("amps[0].idx"), "{err}");
    let garbled = write(dir.path(), "garbled.state", "{\n  \"dims\": [2,\n  oops\n}");
    let (code, _, err) = run(&["analyze", &garbled]);
    assert_eq!(code, 2);
    assert!(err.contains("line 3"), "{err}");
    let dup = write(dir.path(), "dup.state", r#"{"dims":[2],"amps":[{"idx":[0],"re":1,"im":0},{"idx":[0],"re":1,"im":0}]}"#);
    assert_eq!(run(&["analyze", &dup]).0, 2);
    assert_eq!(run(&["compare", "--catalog", "W", "--catalog", "Bell"]).0, 2);
    assert_eq!(run(&["compare", "--catalog", "W"]).0, 2);
    assert_eq!(run(&["compare", "--catalog", "W", "--catalog", "W", "--regime", "xyz"]).0, 2);
    assert_eq!(run(&["analyze", "--catalog", "nonsense"]).0, 2);
    assert_eq!(run(&["simulate", "ghz-merge", "-d", "1", "--left", "2", "--right", "2"]).0, 2);
    assert_eq!(run(&["frobnicate"]).0, 2);
    // parties 1 and 4 of fig1 are independent; GHZ → W has no SLOCC witness
    assert_eq!(run(&["simulate", "bell-extract", "--src-catalog", "fig1", "--pair", "1,4"]).0, 2);
    assert_eq!(run(&["simulate", "rus", "--src-catalog", "GHZ2", "--target-catalog", "W"]).0, 2);
    // I/O errors
    assert_eq!(run(&["analyze", dir.path().join("missing.state").to_str().unwrap()]).0, 4);
    let blocked = dir.path().join("no/such/dir/out.dot");
    assert_eq!(run(&["graph", "--catalog", "W", "--dot", blocked.to_str().unwrap()]).0, 4);
    assert_eq!(run(&["analyze", "--catalog", "W", "--out", blocked.to_str().unwrap()]).0, 4);
}

#[test]
fn unmet_success_condition_exits_three() {
    // no trial means no success
    let (code, r, _) = run(&["simulate", "rus", "--src-catalog", "theta08", "--target-catalog", "Bell", "--trials", "0"]);
    assert_eq!(code, 3);
    assert_eq!(r["results"]["success"], false);
}
