//! One line per acceptance criterion; the test fails if any line fails.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use govledger_core::consensus::{elect_witness_panel, StakeTable, Vote};
use govledger_core::crypto::{hash256, Address};
use govledger_core::fraction::Fraction;
use govledger_core::ledger::BlockHeader;
use govledger_core::merkle::{build_proof, merkle_root, verify_proof};
use govledger_core::registry::query_records;
use govledger_core::sim::lightweight::{lightweight_sync, serve_proofs};
use govledger_core::sim::{run, Invariant, SimulationOutcome};
use govledger_core::suite::*;
use sha2::{Digest as _, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_govledger");

type Check<'a> = Box<dyn Fn() -> Line + 'a>;

struct Line {
    passed: bool,
    detail: String,
}

fn line(passed: bool, detail: impl Into<String>) -> Line {
    Line { passed, detail: detail.into() }
}

fn passed(out: &SimulationOutcome, inv: Invariant) -> bool {
    out.report.invariant(inv).is_some_and(|r| r.passed)
}

/// Runs `f` over `seeds` on all cores, keeping seed order.
fn parallel<T: Send>(seeds: Vec<u64>, f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get()).min(seeds.len().max(1));
    let chunks: Vec<Vec<u64>> = seeds.chunks(seeds.len().div_ceil(workers).max(1)).map(<[u64]>::to_vec).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = chunks.iter().map(|c| s.spawn(|| c.iter().map(|x| f(*x)).collect::<Vec<T>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker")).collect()
    })
}

fn tamper_detection(dir: &Path) -> Line {
    let chain = honest_chain(1, 3, 20);
    let started = Instant::now();
    let mut hits = 0;
    let mut misses = Vec::new();
    for seed in 0..100u64 {
        let (bad, height) = tamper_trial(&chain, seed);
        let path = dir.join(format!("tampered-{seed}.chain"));
        std::fs::write(&path, bad.to_text()).unwrap();
        let out = Command::new(BIN).arg("validate").arg("--chain").arg(&path).output().unwrap();
        let text = String::from_utf8_lossy(&out.stdout);
        if out.status.code() == Some(1) && text.contains(&format!("at index {height}:")) {
            hits += 1;
        } else {
            misses.push(seed);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    line(hits == 100 && secs < 5.0, format!("{hits}/100 detected at the tampered index in {secs:.2}s; misses {misses:?}"))
}

fn fork_resolution() -> Line {
    let results = parallel((0..100).collect(), |seed| {
        let out = run(&fork_scenario(seed, 2)).unwrap();
        let f = out.report.forks.first().cloned();
        let ok = f.as_ref().is_some_and(|f| f.error.is_none() && f.rounds_to_resolve.is_some_and(|r| r <= 2))
            && !out.report.orphans.is_empty()
            && passed(&out, Invariant::Convergence);
        (ok, f.and_then(|f| f.rounds_to_resolve).unwrap_or(u64::MAX))
    });
    let ok = results.iter().filter(|r| r.0).count();
    let worst = results.iter().map(|r| r.1).max().unwrap_or(0);
    line(ok == 100, format!("{ok}/100 forks resolved with orphans logged and one honest head; slowest {worst} rounds"))
}

fn coalition() -> Line {
    let t = Fraction::new(51, 100).unwrap();
    let fr = |n, d| Fraction::new(n, d).unwrap();
    let rows = coalition_sweep(&[fr(1, 10), fr(4, 10), fr(49, 100), fr(7, 10)], t);
    let below = rows[..3].iter().filter(|r| r.honest_finalized).count();
    let above = rows[3].coalition_sealed && rows[3].honest_finalized;
    let detail = rows
        .iter()
        .map(|r| format!("{}:{}/{}{}", r.fraction, r.coalition_stake, r.eligible_stake, if r.honest_finalized { " finalized" } else { "" }))
        .collect::<Vec<_>>()
        .join(", ");
    line(below == 0 && above, format!("threshold 51/100; {detail}"))
}

fn witness_exclusion() -> Line {
    let out = run(&witness_exclusion_scenario(50, 50)).unwrap();
    let ok = passed(&out, Invariant::WitnessExclusion) && out.report.sealed_blocks == 50;
    line(ok, out.report.invariant(Invariant::WitnessExclusion).map(|r| r.detail.clone()).unwrap_or_default())
}

fn sha(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn fold_root(mut level: Vec<[u8; 32]>) -> [u8; 32] {
    if level.is_empty() {
        return sha(&[b""]);
    }
    while level.len() > 1 {
        level = level.chunks(2).map(|c| sha(&[&c[0], c.get(1).unwrap_or(&c[0])])).collect();
    }
    level[0]
}

fn merkle_oracle() -> Line {
    let mut checks = 0;
    let mut bad = Vec::new();
    for n in 0..=16usize {
        let txs: Vec<Vec<u8>> = (0..n).map(|i| format!("leaf {i}").into_bytes()).collect();
        let root = merkle_root(&txs);
        if root.0 != fold_root(txs.iter().map(|t| sha(&[t])).collect()) {
            bad.push(format!("root n={n}"));
        }
        for i in 0..n {
            let proof = build_proof(&txs, i).unwrap();
            let mut altered = txs[i].clone();
            altered[0] ^= 1;
            if !verify_proof(&root, &hash256(&txs[i]), &proof) || verify_proof(&root, &hash256(&altered), &proof) {
                bad.push(format!("proof n={n} i={i}"));
            }
            checks += 1;
        }
    }
    line(bad.is_empty(), format!("{checks} proofs over n <= 16 checked; mismatches {bad:?}"))
}

fn election_oracle() -> Line {
    let addr = |n: u8| Address([n; 20]);
    let delegates = [addr(90), addr(60), addr(30)];
    let voters = [addr(1), addr(2), addr(3), addr(4)];
    let mut mismatches = 0;
    let mut cases = 0;
    for code in 0..(18u64).pow(4) {
        let mut c = code;
        let ballots: Vec<(Address, u64, usize)> = voters
            .iter()
            .map(|v| {
                let s = c % 6;
                c /= 6;
                let t = (c % 3) as usize;
                c /= 3;
                (*v, s, t)
            })
            .collect();
        if ballots.iter().all(|b| b.1 == 0) {
            continue;
        }
        let stakes = StakeTable::from_grants(ballots.iter().map(|b| (b.0, b.1)));
        let votes: Vec<Vote> = ballots.iter().map(|b| Vote { voter: b.0, target_delegate: delegates[b.2], weight: b.1 }).collect();
        let set: BTreeSet<Address> = delegates.into_iter().collect();
        let panel = elect_witness_panel(&set, &votes, &[], &stakes, 3, 0, code).unwrap();
        // Oracle: count every delegate's ballots, then repeatedly pick the
        // heaviest remaining, lowest address first on ties.
        let mut weight: BTreeMap<Address, u64> = delegates.iter().map(|d| (*d, 0)).collect();
        for b in &ballots {
            *weight.get_mut(&delegates[b.2]).unwrap() += b.1;
        }
        let mut expected = Vec::new();
        while !weight.is_empty() {
            let top = *weight.values().max().unwrap();
            let pick = *weight.iter().find(|(_, w)| **w == top).unwrap().0;
            expected.push((pick, top));
            weight.remove(&pick);
        }
        let got: Vec<(Address, u64)> = panel.ranking.iter().map(|r| (r.address, r.weight)).collect();
        if got != expected {
            mismatches += 1;
        }
        cases += 1;
    }
    // Delegate 30 holds a single token but two voters back it; delegate 90
    // holds 5 and only votes for itself.
    let (low, high, backer, small) = (addr(30), addr(90), addr(1), addr(2));
    let stakes = StakeTable::from_grants([(low, 1), (high, 5), (backer, 5), (small, 2)]);
    let votes = vec![
        Vote { voter: low, target_delegate: low, weight: 1 },
        Vote { voter: high, target_delegate: high, weight: 5 },
        Vote { voter: backer, target_delegate: low, weight: 5 },
        Vote { voter: small, target_delegate: low, weight: 2 },
    ];
    let panel = elect_witness_panel(&[low, high].into(), &votes, &[], &stakes, 1, 0, 0).unwrap();
    let outranks = panel.members == vec![low] && panel.ranking[0].weight == 8 && panel.ranking[1].weight == 5;
    line(
        mismatches == 0 && outranks && stakes.get(&low) < stakes.get(&high),
        format!("{cases} electorates, {mismatches} mismatches; 1-token delegate ranked first: {outranks}"),
    )
}

fn determinism(dir: &Path) -> Line {
    let mut names: Vec<String> = std::fs::read_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios"))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().trim_end_matches(".json").to_string())
        .collect();
    names.sort();
    let mut bad = Vec::new();
    for name in &names {
        let a = dir.join(format!("{name}-a.json"));
        let b = dir.join(format!("{name}-b.json"));
        for p in [&a, &b] {
            Command::new(BIN).args(["run", "--scenario", name.as_str(), "--out"]).arg(p).output().unwrap();
        }
        let hash = |p: &Path| -> Option<String> {
            let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).ok()?).ok()?;
            v["report_hash"].as_str().map(str::to_string)
        };
        let same = hash(&a).is_some() && hash(&a) == hash(&b);
        let diff = Command::new(BIN).arg("diff").arg(&a).arg(&b).output().unwrap().status;
        let chains = std::fs::read(dir.join(format!("{name}-a.json.chain"))).ok() == std::fs::read(dir.join(format!("{name}-b.json.chain"))).ok();
        if !(same && diff.code() == Some(0) && chains) {
            bad.push(name.clone());
        }
    }
    line(bad.is_empty() && names.len() >= 10, format!("{} bundled scenarios run twice; divergent {bad:?}", names.len()))
}

fn liveness() -> Line {
    let honest = run(&with_busy_delegates(base_scenario("live", 8, 3, 30))).unwrap();
    let crashed = run(&crash_scenario(8, 30, "dept-4", 3)).unwrap();
    let every_round = crashed.report.elections.iter().filter(|e| e.tick < 30).all(|e| e.block.is_some());
    let down = crashed.report.nodes.iter().find(|n| n.name == "dept-4").and_then(|n| n.address);
    let drawn = crashed.report.elections.iter().filter(|e| e.tick >= 3 && e.witness == down).count();
    line(
        honest.report.sealed_blocks == 6 && crashed.report.sealed_blocks == 6 && every_round,
        format!(
            "honest {} blocks in 30 ticks; with dept-4 down from tick 3, {} blocks ({drawn} rounds drew it as witness)",
            honest.report.sealed_blocks, crashed.report.sealed_blocks
        ),
    )
}

fn lightweight() -> Line {
    let out = run(&lightweight_scenario(9)).unwrap();
    let in_sim = passed(&out, Invariant::LightweightVerified);
    let blocks = &out.chain.blocks;
    let headers: Vec<BlockHeader> = blocks.iter().map(|b| b.header.clone()).collect();
    let mut proofs = serve_proofs(blocks, |_| true);
    let honest = lightweight_sync(&blocks[0].header, std::slice::from_ref(&headers), &proofs);
    let target = proofs.len() / 2;
    proofs[target].transaction.record_value.push(b'x');
    let tampered = lightweight_sync(&blocks[0].header, &[headers], &proofs);
    let rejected = !tampered.verdicts[target].verified && tampered.verdicts.iter().filter(|v| !v.verified).count() == 1;
    line(
        in_sim && honest.all_verified() && rejected,
        format!("{} proofs verified from headers alone; tampered record at proof {target} rejected: {rejected}", honest.verdicts.len()),
    )
}

fn recovery() -> Line {
    let out = run(&recovery_scenario(10)).unwrap();
    let Some(r) = out.report.recoveries.first() else { return line(false, "no recovery ran") };
    let chain: Vec<_> = out.chain.blocks.iter().map(|b| b.hash()).collect();
    let unchanged = chain.starts_with(&r.prefix) && !r.prefix.is_empty();
    let new = r.new_address.map(|a| query_records(&out.chain.blocks, &a));
    let old = query_records(&out.chain.blocks, &r.old_address);
    let credited = new.as_ref().is_some_and(|n| n.records.len() == old.records.len() && old.records.len() == r.records_before);
    line(
        unchanged && credited && old.retired.is_some(),
        format!(
            "{} blocks kept their hashes; old address {} records, new address {}",
            r.prefix.len(),
            old.records.len(),
            new.map_or(0, |n| n.records.len())
        ),
    )
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Check)> = vec![
        ("tamper detection", Box::new(|| tamper_detection(dir.path()))),
        ("fork resolution", Box::new(fork_resolution)),
        ("coalition threshold", Box::new(coalition)),
        ("witness exclusion", Box::new(witness_exclusion)),
        ("merkle oracle", Box::new(merkle_oracle)),
        ("election oracle", Box::new(election_oracle)),
        ("determinism", Box::new(|| determinism(dir.path()))),
        ("liveness", Box::new(liveness)),
        ("lightweight verification", Box::new(lightweight)),
        ("key recovery", Box::new(recovery)),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let l = check();
        let tag = if l.passed { "PASS" } else { "FAIL" };
        // Written past the test harness capture so plain `cargo test` shows it.
        let _ = writeln!(
            std::io::stderr(),
            "[{tag}] {:>2}. {name}: {} ({:.1}s)",
            i + 1,
            l.detail,
            started.elapsed().as_secs_f64()
        );
        if !l.passed {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
