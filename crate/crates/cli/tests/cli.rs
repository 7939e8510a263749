use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_govledger");

fn govledger(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("GOVLEDGER_SCENARIO_DIR").output().unwrap()
}

fn run_to(dir: &Path, scenario: &str, extra: &[&str]) -> (Output, PathBuf) {
    let out = dir.join(format!("{scenario}.json"));
    let mut args = vec!["run", "--scenario", scenario, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (govledger(&args), out)
}

fn chain_of(report: &Path) -> String {
    format!("{}.chain", report.display())
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn honest_small_matches_golden_hash() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = run_to(dir.path(), "honest_small", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let golden = include_str!("golden/honest_small.report_hash").trim();
    assert_eq!(read_json(&report)["report_hash"], golden);
}

#[test]
fn run_output_validates() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["honest_small", "recovery", "fork"] {
        let (out, report) = run_to(dir.path(), name, &[]);
        assert_eq!(out.status.code(), Some(0));
        let v = govledger(&["validate", "--chain", &chain_of(&report)]);
        assert_eq!(v.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&v.stdout));
    }
}

#[test]
fn coalition_below_two_thirds_keeps_safety() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = run_to(dir.path(), "coalition_49", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let forged = &read_json(&report)["report"]["forged"][0];
    assert_eq!(forged["sealed"], false);
}

#[test]
fn seed_override_is_echoed_and_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (_, plain) = run_to(dir.path(), "honest_small", &[]);
    let plain = read_json(&plain);
    let out = govledger(&["run", "--scenario", "honest_small", "--seed", "99"]);
    assert_eq!(out.status.code(), Some(0));
    let seeded: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(seeded["report"]["header"]["seed_override"], 99);
    assert_eq!(plain["report"]["header"]["seed_override"], Value::Null);
    assert_ne!(seeded["report_hash"], plain["report_hash"]);
}

#[test]
fn malformed_scenario_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(include_str!("../scenarios/honest_small.json")).unwrap();
    v["round_config"]["t_c"] = (-5).into();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let out = govledger(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("round_config.t_c"));

    v["round_config"]["t_c"] = 5.into();
    v.as_object_mut().unwrap().remove("crashes");
    std::fs::write(&path, v.to_string()).unwrap();
    let out = govledger(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("crashes"));
}

#[test]
fn failed_invariant_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(include_str!("../scenarios/coalition_49.json")).unwrap();
    v["adversary_actions"][0]["action"]["fraction"] = "7/10".into();
    let path = dir.path().join("strong.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let out = govledger(&["run", "--scenario", path.to_str().unwrap(), "--out", dir.path().join("r.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed Safety"));
}

#[test]
fn edited_payload_nibble_reports_its_block() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report) = run_to(dir.path(), "witness_exclusion", &[]);
    let text = std::fs::read_to_string(chain_of(&report)).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    // Line 0 is the context; block 4 is line 5.
    let mut block: Value = serde_json::from_str(&lines[5]).unwrap();
    assert_eq!(block["height"], 4);
    let value = block["block"]["transactions"][0]["record_value"].as_str().unwrap().to_string();
    let first = if value.starts_with('0') { "1" } else { "0" };
    block["block"]["transactions"][0]["record_value"] = format!("{first}{}", &value[1..]).into();
    lines[5] = block.to_string();
    let path = dir.path().join("edited.chain");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = govledger(&["validate", "--chain", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("at index 4:"), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn unreadable_dumps_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.chain");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(govledger(&["validate", "--chain", empty.to_str().unwrap()]).status.code(), Some(2));
    let junk = dir.path().join("junk.chain");
    std::fs::write(&junk, "{not json\n").unwrap();
    assert_eq!(govledger(&["validate", "--chain", junk.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("missing.chain");
    assert_eq!(govledger(&["validate", "--chain", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn query_listings() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report) = run_to(dir.path(), "recovery", &[]);
    let chain = chain_of(&report);
    let rec = &read_json(&report)["report"]["recoveries"][0];

    let old = govledger(&["query", "--chain", &chain, "--address", rec["old_address"].as_str().unwrap()]);
    assert_eq!(old.status.code(), Some(0));
    let old: Value = serde_json::from_slice(&old.stdout).unwrap();
    assert_eq!(old["retired"]["replaced_by"], rec["new_address"]);
    let heights: Vec<u64> = old["records"].as_array().unwrap().iter().map(|r| r["block_height"].as_u64().unwrap()).collect();
    assert!(heights.windows(2).all(|w| w[0] <= w[1]));

    let new = govledger(&["query", "--chain", &chain, "--address", rec["new_address"].as_str().unwrap()]);
    let new: Value = serde_json::from_slice(&new.stdout).unwrap();
    assert_eq!(new["records"].as_array().unwrap().len(), old["records"].as_array().unwrap().len());

    let unknown = govledger(&["query", "--chain", &chain, "--address", &"ab".repeat(20)]);
    assert_eq!(unknown.status.code(), Some(0));
    let unknown: Value = serde_json::from_slice(&unknown.stdout).unwrap();
    assert_eq!(unknown["records"].as_array().unwrap().len(), 0);

    assert_eq!(govledger(&["query", "--chain", &chain, "--address", "xyz"]).status.code(), Some(2));
    assert_eq!(govledger(&["query", "--chain", &chain, "--address", "abcd"]).status.code(), Some(2));
}

#[test]
fn diff_flags_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let (_, a) = run_to(dir.path(), "honest_small", &[]);
    let b = dir.path().join("other.json");
    govledger(&["run", "--scenario", "honest_small", "--seed", "3", "--out", b.to_str().unwrap()]);
    let same = govledger(&["diff", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert_eq!(same.status.code(), Some(0));
    let differ = govledger(&["diff", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(differ.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&differ.stdout).contains("$.report_hash:"));
    let chain = chain_of(&a);
    assert_eq!(govledger(&["diff", a.to_str().unwrap(), &chain]).status.code(), Some(2));
}

#[test]
fn scenario_dir_takes_precedence_over_bundled() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(include_str!("../scenarios/honest_liveness.json")).unwrap();
    v["name"] = "from_dir".into();
    std::fs::write(dir.path().join("honest_liveness.json"), v.to_string()).unwrap();
    let out = Command::new(BIN)
        .args(["inspect", "--scenario", "honest_liveness"])
        .env("GOVLEDGER_SCENARIO_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"from_dir\""));
    let bundled = govledger(&["inspect", "--scenario", "honest_liveness"]);
    assert!(String::from_utf8_lossy(&bundled.stdout).contains("\"honest_liveness\""));
    assert_eq!(govledger(&["run", "--scenario", "no_such_scenario"]).status.code(), Some(2));
}

#[test]
fn output_is_byte_identical_across_runs() {
    let a = govledger(&["run", "--scenario", "fork"]);
    let b = govledger(&["run", "--scenario", "fork"]);
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn reports_hold_no_private_keys() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report) = run_to(dir.path(), "recovery", &[]);
    for text in [std::fs::read_to_string(&report).unwrap(), std::fs::read_to_string(chain_of(&report)).unwrap()] {
        assert!(!text.contains("private"));
        assert!(!text.contains("secret"));
    }
    let r = read_json(&report);
    assert_eq!(r["report"]["containment"]["violations"].as_array().unwrap().len(), 0);
}
