use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use govledger_core::crypto::Address;
use govledger_core::ledger::dump::ChainDump;
use govledger_core::ledger::{validate_blocks, ChainVerdict};
use govledger_core::registry::query_records;
use govledger_core::sim::{run_with_seed, ReportFile, Scenario};
use serde_json::Value;

use crate::{bundled, Status};

/// Writes a line to standard output; a closed pipe is not an error.
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn fail(status: Status, msg: impl std::fmt::Display) -> Status {
    eprintln!("error: {msg}");
    status
}

/// Scenario text from, in order: an existing file, the scenario directory,
/// the bundled set.
fn scenario_text(source: &str, dir: Option<&Path>) -> Result<(String, String), String> {
    let path = Path::new(source);
    if path.is_file() {
        return fs::read_to_string(path).map(|t| (path.display().to_string(), t)).map_err(|e| format!("{source}: {e}"));
    }
    if let Some(dir) = dir {
        for candidate in [dir.join(source), dir.join(format!("{source}.json"))] {
            if candidate.is_file() {
                let text = fs::read_to_string(&candidate).map_err(|e| format!("{}: {e}", candidate.display()))?;
                return Ok((candidate.display().to_string(), text));
            }
        }
    }
    bundled::get(source)
        .map(|t| (format!("bundled:{source}"), t.to_string()))
        .ok_or_else(|| format!("{source}: no such scenario file or bundled scenario"))
}

fn load_scenario(source: &str, dir: Option<&Path>) -> Result<Scenario, Status> {
    let (origin, text) = scenario_text(source, dir).map_err(|e| fail(Status::Usage, e))?;
    Scenario::from_json(&text).map_err(|e| fail(Status::Usage, format!("{origin}: {e}")))
}

fn load_chain(path: &Path) -> Result<ChainDump, Status> {
    let text = fs::read_to_string(path).map_err(|e| fail(Status::Usage, format!("{}: {e}", path.display())))?;
    ChainDump::parse(&text).map_err(|e| fail(Status::Usage, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Status> {
    fs::write(path, text).map_err(|e| fail(Status::Usage, format!("{}: {e}", path.display())))
}

pub fn run(source: &str, dir: Option<&Path>, seed: Option<u64>, out: Option<&Path>, chain: Option<&Path>) -> Status {
    let scenario = match load_scenario(source, dir) {
        Ok(s) => s,
        Err(status) => return status,
    };
    let outcome = match run_with_seed(&scenario, seed) {
        Ok(o) => o,
        Err(e) => return fail(Status::Usage, format!("{}: {e}", scenario.name)),
    };
    let report = outcome.report_json() + "\n";
    let chain_path: Option<PathBuf> = chain.map(Path::to_path_buf).or_else(|| out.map(|o| {
        let mut p = o.as_os_str().to_owned();
        p.push(".chain");
        PathBuf::from(p)
    }));
    match out {
        Some(o) => {
            if let Err(s) = write(o, &report) {
                return s;
            }
        }
        None => {
            let _ = std::io::stdout().lock().write_all(report.as_bytes());
        }
    }
    if let Some(c) = chain_path {
        if let Err(s) = write(&c, &outcome.chain.to_text()) {
            return s;
        }
    }
    let r = &outcome.report;
    let failed: Vec<_> = r.invariants.iter().filter(|i| !i.passed).collect();
    eprintln!(
        "{}: {} blocks sealed, {}/{} invariants passed, report {}",
        r.header.name,
        r.sealed_blocks,
        r.invariants.len() - failed.len(),
        r.invariants.len(),
        outcome.report_hash
    );
    for i in &failed {
        eprintln!("  failed {:?}: {}", i.name, i.detail);
    }
    if failed.is_empty() {
        Status::Ok
    } else {
        Status::Failed
    }
}

pub fn validate(path: &Path) -> Status {
    let dump = match load_chain(path) {
        Ok(d) => d,
        Err(s) => return s,
    };
    match validate_blocks(&dump.blocks, &dump.context) {
        Ok(ChainVerdict::Valid { height }) => {
            out!("valid: {} blocks, height {height}, head {}", dump.blocks.len(), dump.blocks[height].hash());
            Status::Ok
        }
        Ok(ChainVerdict::Invalid { index, reason }) => {
            out!("invalid: first invalid block at index {index}: {reason}");
            Status::Failed
        }
        Err(e) => {
            out!("invalid: {e}");
            Status::Failed
        }
    }
}

pub fn query(path: &Path, address: &str) -> Status {
    let address = match Address::from_hex(address.trim().trim_start_matches("0x")) {
        Ok(a) => a,
        Err(e) => return fail(Status::Usage, format!("--address: {e}")),
    };
    let dump = match load_chain(path) {
        Ok(d) => d,
        Err(s) => return s,
    };
    let result = query_records(&dump.blocks, &address);
    out!("{}", serde_json::to_string_pretty(&result).expect("query result serializes"));
    Status::Ok
}

pub fn inspect_chain(path: &Path) -> Status {
    let dump = match load_chain(path) {
        Ok(d) => d,
        Err(s) => return s,
    };
    out!("network {} members {} delegate terms {}", dump.context.network.name, dump.context.members.len(), dump.context.delegate_terms.len());
    for (h, b) in dump.blocks.iter().enumerate() {
        out!(
            "{h:>5} {} t={} witness={} records={} endorsements={}",
            b.hash(),
            b.header.timestamp,
            b.witness_address,
            b.transactions.len(),
            b.endorsements.len()
        );
    }
    Status::Ok
}

pub fn inspect_scenario(source: &str, dir: Option<&Path>) -> Status {
    match load_scenario(source, dir) {
        Ok(s) => {
            out!("digest {}", s.digest());
            out!("{}", serde_json::to_string_pretty(&s).expect("scenario serializes"));
            Status::Ok
        }
        Err(status) => status,
    }
}

fn differences(path: &str, a: &Value, b: &Value, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for key in x.keys().chain(y.keys().filter(|k| !x.contains_key(*k))) {
                let p = format!("{path}.{key}");
                match (x.get(key), y.get(key)) {
                    (Some(l), Some(r)) => differences(&p, l, r, out),
                    (l, r) => out.push(format!("{p}: {} != {}", brief(l), brief(r))),
                }
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                out.push(format!("{path}: length {} != {}", x.len(), y.len()));
            }
            for (i, (l, r)) in x.iter().zip(y).enumerate() {
                differences(&format!("{path}[{i}]"), l, r, out);
            }
        }
        _ if a != b => out.push(format!("{path}: {} != {}", brief(Some(a)), brief(Some(b)))),
        _ => {}
    }
}

fn brief(v: Option<&Value>) -> String {
    let s = v.map_or("<missing>".to_string(), Value::to_string);
    if s.chars().count() > 80 {
        format!("{}...", s.chars().take(77).collect::<String>())
    } else {
        s
    }
}

fn load_report(path: &Path) -> Result<Value, Status> {
    let text = fs::read_to_string(path).map_err(|e| fail(Status::Usage, format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| fail(Status::Usage, format!("{}: {e}", path.display())))?;
    serde_json::from_value::<ReportFile>(value.clone())
        .map_err(|e| fail(Status::Usage, format!("{}: not a report file: {e}", path.display())))?;
    Ok(value)
}

pub fn diff(left: &Path, right: &Path) -> Status {
    let (a, b) = match (load_report(left), load_report(right)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    let mut out = Vec::new();
    differences("$", &a, &b, &mut out);
    if out.is_empty() {
        out!("identical");
        return Status::Ok;
    }
    // Shallow paths first; they summarize the deeper ones.
    out.sort_by_key(|p| p.split(':').next().map_or(0, |path| path.matches(['.', '[']).count()));
    out!("{} differences", out.len());
    for line in out.iter().take(50) {
        out!("  {line}");
    }
    Status::Failed
}
