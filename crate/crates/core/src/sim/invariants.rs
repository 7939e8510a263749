//! End-of-run checks recorded in the report's invariant ledger, and the
//! private-key scanner every outgoing payload passes through.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::engine::Simulation;
use super::message::MessageKind;
use super::node::SimNode;
use super::report::{ContainmentReport, InvariantResult, SimulationReport};
use super::scenario::Invariant;
use crate::consensus::StakeTable;
use crate::crypto::{hash256, Digest, KeyPair};
use crate::ledger::dump::ChainDump;
use crate::ledger::{validate_blocks, Block, ChainVerdict, Transaction};
use crate::registry::{query_records, AdmissionError};

/// Looks for private key material in outgoing bytes and text, both as raw
/// 32-byte runs and as hex, and for JSON keys that name secrets.
#[derive(Debug, Clone, Default)]
pub(crate) struct SecretScanner {
    raw: BTreeSet<[u8; 32]>,
    hex: Vec<String>,
    seen: BTreeSet<Digest>,
    scanned: u64,
    violations: Vec<String>,
}

impl SecretScanner {
    pub fn add(&mut self, key: &KeyPair) {
        let bytes = key.private_key_bytes();
        if self.raw.insert(bytes) {
            self.hex.push(hex::encode(bytes));
        }
    }

    pub fn scan_payload(&mut self, kind: MessageKind, payload: &[u8]) {
        if !self.seen.insert(hash256(payload)) {
            return;
        }
        self.scanned += 1;
        if payload.windows(32).any(|w| self.raw.contains(<&[u8; 32]>::try_from(w).expect("window of 32"))) {
            self.violations.push(format!("{kind:?} payload carries a private key"));
        }
        let label = format!("{kind:?} payload");
        if let Ok(text) = std::str::from_utf8(payload) {
            self.scan_text(&label, text);
        }
    }

    pub fn scan_text(&mut self, label: &str, text: &str) {
        self.scanned += 1;
        let lower = text.to_ascii_lowercase();
        if self.hex.iter().any(|h| lower.contains(h.as_str())) {
            self.violations.push(format!("{label} contains a private key in hex"));
        }
        for line in text.lines() {
            if let Ok(v) = serde_json::from_str::<Value>(line) {
                self.scan_keys(label, &v);
            }
        }
        if let Ok(v) = serde_json::from_str::<Value>(text) {
            self.scan_keys(label, &v);
        }
    }

    fn scan_keys(&mut self, label: &str, v: &Value) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let k = k.to_ascii_lowercase();
                    if k.contains("private") || k.contains("secret") {
                        self.violations.push(format!("{label} has a field named {k:?}"));
                    }
                    self.scan_keys(label, child);
                }
            }
            Value::Array(items) => items.iter().for_each(|i| self.scan_keys(label, i)),
            _ => {}
        }
    }

    pub fn report(&self) -> ContainmentReport {
        ContainmentReport { scanned: self.scanned, violations: self.violations.clone() }
    }
}

fn result(name: Invariant, passed: bool, detail: impl Into<String>) -> InvariantResult {
    InvariantResult { name, passed, detail: detail.into() }
}

fn hashes(chain: &[Block]) -> Vec<Digest> {
    chain.iter().map(Block::hash).collect()
}

pub(crate) fn evaluate(sim: &Simulation, report: &SimulationReport, dump: &ChainDump) -> Vec<InvariantResult> {
    let honest: Vec<&SimNode> = sim.nodes().iter().filter(|n| n.is_honest_full()).collect();
    let mut seen = BTreeSet::new();
    sim.scenario()
        .invariants
        .iter()
        .filter(|i| seen.insert(**i))
        .map(|inv| check(*inv, sim, report, dump, &honest))
        .collect()
}

fn check(inv: Invariant, sim: &Simulation, report: &SimulationReport, dump: &ChainDump, honest: &[&SimNode]) -> InvariantResult {
    let chain = &dump.blocks;
    let t_c = sim.scenario().round_config.t_c;
    match inv {
        Invariant::Convergence => {
            let heads: BTreeSet<Digest> = honest.iter().map(|n| n.store().tip().hash()).collect();
            let forked: Vec<&str> =
                honest.iter().filter(|n| n.store().branches().len() > 1).map(|n| n.name.as_str()).collect();
            let stray: Vec<u64> = report
                .boundary_divergences
                .iter()
                .copied()
                .filter(|t| !report.forks.iter().any(|f| *t >= f.diverged_tick && f.resolved_tick.is_none_or(|r| *t <= r)))
                .collect();
            let passed = heads.len() == 1 && forked.is_empty() && stray.is_empty();
            let detail = if passed {
                format!("{} honest full nodes share head {} at height {}", honest.len(), report.final_head, report.sealed_blocks)
            } else {
                format!("{} distinct heads; nodes holding ties: {:?}; split at round starts {:?}", heads.len(), forked, stray)
            };
            result(inv, passed, detail)
        }
        Invariant::Safety => {
            let longest = honest.iter().map(|n| hashes(n.store().canonical())).max_by_key(Vec::len).unwrap_or_default();
            let conflicting: Vec<&str> = honest
                .iter()
                .filter(|n| !longest.starts_with(&hashes(n.store().canonical())))
                .map(|n| n.name.as_str())
                .collect();
            let directory = &sim.registry().directory;
            let mut unadmissible = Vec::new();
            for (h, b) in chain.iter().enumerate().skip(1) {
                for (i, tx) in b.transactions.iter().enumerate() {
                    match directory.admit(tx) {
                        Ok(()) | Err(AdmissionError::Retired) => {}
                        Err(e) => unadmissible.push(format!("block {h} tx {i}: {e}")),
                    }
                }
            }
            let passed = conflicting.is_empty() && unadmissible.is_empty();
            let detail = if passed {
                format!("honest chains agree and all {} sealed blocks hold admissible records", chain.len() - 1)
            } else {
                format!("conflicting nodes {conflicting:?}; unadmissible sealed records {unadmissible:?}")
            };
            result(inv, passed, detail)
        }
        Invariant::WitnessExclusion => {
            let offending: usize = honest
                .iter()
                .flat_map(|n| n.store().canonical().iter().skip(1))
                .filter(|b| b.transactions.iter().any(|t| t.submitter_address == b.witness_address))
                .count();
            let refused: u64 = sim
                .nodes()
                .iter()
                .flat_map(|n| n.rejections.iter())
                .filter(|(k, _)| k.contains("self-transaction"))
                .map(|(_, v)| v)
                .sum();
            result(inv, offending == 0, format!("{offending} sealed blocks contain a witness's own record; {refused} proposals refused for it"))
        }
        Invariant::Liveness => {
            let expected = (sim.scenario().run_ticks / t_c) as usize;
            result(inv, report.sealed_blocks == expected, format!("{} of {expected} rounds sealed", report.sealed_blocks))
        }
        Invariant::FloodResilience => {
            let flood = sim.flood_hashes();
            let horizon = sim.scenario().run_ticks.saturating_sub(2 * t_c);
            let sealed: BTreeSet<Digest> = chain.iter().flat_map(|b| b.transactions.iter().map(Transaction::hash)).collect();
            let stranded = honest
                .first()
                .map(|n| {
                    n.known
                        .iter()
                        .filter(|(h, t)| !flood.contains(*h) && !sealed.contains(*h) && t.submitted_at <= horizon)
                        .count()
                })
                .unwrap_or(0);
            let f = &report.flood;
            let passed = f.sent > 0 && f.admitted == 0 && stranded == 0;
            result(inv, passed, format!("{} flood records sent, {} rejected, {} admitted; {stranded} legitimate records left unsealed", f.sent, f.rejected, f.admitted))
        }
        Invariant::StakeConsistency => {
            let stakes = StakeTable::replay(dump.context.grants(), &chain[1..]);
            let mismatched: Vec<String> = dump
                .context
                .members
                .iter()
                .filter(|(a, m)| stakes.get(a) != m.grant + query_records(chain, a).records.len() as u64)
                .map(|(a, _)| a.to_hex())
                .collect();
            result(
                inv,
                mismatched.is_empty(),
                format!("{} members checked, {} mismatched", dump.context.members.len(), mismatched.len()),
            )
        }
        Invariant::KeyContainment => {
            let c = &report.containment;
            result(inv, c.scanned > 0 && c.violations.is_empty(), format!("{} outputs scanned, {} violations", c.scanned, c.violations.len()))
        }
        Invariant::WalletUbiquity => {
            let wallets: Vec<_> = sim.registry().directory.wallets().map(|w| w.address).collect();
            let missing: usize = honest.iter().map(|n| wallets.iter().filter(|a| !n.directory.contains(a)).count()).sum();
            let queries: BTreeSet<String> = honest
                .iter()
                .map(|n| {
                    let c = n.store().canonical();
                    let all: Vec<_> = wallets.iter().map(|a| query_records(c, a)).collect();
                    serde_json::to_string(&all).expect("query results serialize")
                })
                .collect();
            let passed = missing == 0 && queries.len() <= 1;
            result(inv, passed, format!("{} wallets on {} honest nodes, {missing} missing entries, {} distinct query views", wallets.len(), honest.len(), queries.len()))
        }
        Invariant::RecoveryAppendOnly => {
            let final_hashes = hashes(chain);
            let mut ok = 0;
            let mut problems = Vec::new();
            for r in &report.recoveries {
                let Some(new) = r.new_address else {
                    problems.push(format!("{}: {}", r.user, r.error.clone().unwrap_or_default()));
                    continue;
                };
                let old_q = r.old_query.as_ref().expect("filled for successful recoveries");
                let new_q = r.new_query.as_ref().expect("filled for successful recoveries");
                let prefix_kept = final_hashes.starts_with(&r.prefix);
                let retired = old_q.retired.as_ref().is_some_and(|m| m.replaced_by == new);
                if prefix_kept && retired && old_q.records.len() == r.records_before && new_q.records.len() == r.records_before {
                    ok += 1;
                } else {
                    problems.push(format!(
                        "{}: prefix kept {prefix_kept}, retired {retired}, old {} new {} of {}",
                        r.user,
                        old_q.records.len(),
                        new_q.records.len(),
                        r.records_before
                    ));
                }
            }
            let passed = ok > 0 && problems.is_empty();
            result(inv, passed, format!("{ok} recoveries append-only; problems {problems:?}"))
        }
        Invariant::TamperDetected => {
            let honest_names: BTreeSet<&str> = honest.iter().map(|n| n.name.as_str()).collect();
            let honest_valid = honest.iter().all(|n| {
                validate_blocks(n.store().canonical(), &dump.context).map(|v| v.is_valid()).unwrap_or(false)
            });
            let mut problems = Vec::new();
            for t in &report.tampers {
                match &t.actor_verdict {
                    Some(ChainVerdict::Invalid { index, .. }) if *index == t.height => {}
                    other => problems.push(format!("actor verdict {other:?} for height {}", t.height)),
                }
                let accepted: Vec<&str> = t
                    .receipts
                    .iter()
                    .filter(|r| honest_names.contains(r.node.as_str()) && r.outcome == "accepted")
                    .map(|r| r.node.as_str())
                    .collect();
                if !accepted.is_empty() {
                    problems.push(format!("accepted by {accepted:?}"));
                }
                if t.receipts.is_empty() {
                    problems.push("no peer received the tampered block".into());
                }
            }
            let passed = !report.tampers.is_empty() && problems.is_empty() && honest_valid;
            result(inv, passed, format!("{} tamper attempts; honest chains valid {honest_valid}; problems {problems:?}", report.tampers.len()))
        }
        Invariant::LightweightVerified => {
            let bad: Vec<&str> = report
                .lightweight
                .iter()
                .filter(|l| {
                    !l.outcome.all_verified()
                        || l.outcome.halted
                        || l.blocks_received > 0
                        || l.outcome.verdicts.len() != l.expected_transactions
                        || l.outcome.last_good_height != report.sealed_blocks
                })
                .map(|l| l.node.as_str())
                .collect();
            let proofs: usize = report.lightweight.iter().map(|l| l.outcome.verdicts.len()).sum();
            let passed = !report.lightweight.is_empty() && bad.is_empty();
            result(inv, passed, format!("{} lightweight nodes, {proofs} inclusion proofs checked; failing {bad:?}", report.lightweight.len()))
        }
        Invariant::OnboardingGate => {
            let directory = &sim.registry().directory;
            let unregistered: usize = honest
                .iter()
                .map(|n| n.known.values().filter(|t| !directory.contains(&t.submitter_address)).count())
                .sum();
            let unfinished: Vec<&str> =
                report.registrations.iter().filter(|r| r.completed_at.is_none()).map(|r| r.node.as_str()).collect();
            let refused: u64 = sim
                .nodes()
                .iter()
                .filter_map(|n| n.rejections.get(&AdmissionError::Unregistered.to_string()))
                .sum();
            let passed = unregistered == 0 && unfinished.is_empty() && report.flood.admitted == 0;
            result(
                inv,
                passed,
                format!("{unregistered} records from unregistered wallets held; {refused} refused; unfinished registrations {unfinished:?}"),
            )
        }
        Invariant::ForkResolution => {
            let mut by_round = BTreeMap::new();
            for f in &report.forks {
                by_round.insert(f.round, (f.resolved_tick, f.rounds_to_resolve, f.error.clone()));
            }
            let passed = !report.forks.is_empty() && report.forks.iter().all(|f| f.error.is_none() && f.resolved_tick.is_some());
            result(inv, passed, format!("forks by round (resolved tick, rounds, error): {by_round:?}"))
        }
    }
}
