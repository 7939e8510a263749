//! Scenario builders and cross-module checks for the security service
//! table: each service is mapped to something that can be run and judged.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::{ReassignmentPolicy, RoundConfig};
use crate::crypto::{verify, KeyPair};
use crate::fraction::Fraction;
use crate::ledger::dump::ChainDump;
use crate::ledger::tamper::flip_random_byte;
use crate::ledger::{validate_blocks, ChainVerdict, Transaction};
use crate::registry::{AdmissionError, NodeKind, NodeOrigin};
use crate::sim::scenario::{
    AdversaryAction, AdversarySpec, CrashSpec, ForgeStyle, NodeSpec, RecoverySpec, SubmissionSpec, UserSpec,
};
use crate::sim::{run, Invariant, Scenario, SimulationOutcome};

pub fn department(name: &str, vote_self: bool) -> NodeSpec {
    NodeSpec {
        name: name.to_string(),
        origin: NodeOrigin::Government,
        kind: NodeKind::Full,
        join_tick: 0,
        tokens: None,
        delegate: true,
        vote: vote_self.then(|| name.to_string()),
        delegate_to: None,
        submissions: vec![],
    }
}

pub fn submission(tick: u64, rid: &str, value: &str, target: &str) -> SubmissionSpec {
    SubmissionSpec {
        tick,
        record_identification: rid.to_string(),
        record_value: value.to_string(),
        target: target.to_string(),
    }
}

/// `departments` founding delegates voting for themselves, no users.
pub fn base_scenario(name: &str, seed: u64, departments: usize, run_ticks: u64) -> Scenario {
    Scenario {
        name: name.to_string(),
        seed,
        run_ticks,
        latency: 1,
        round_config: RoundConfig::with_panel(departments.min(3)),
        initial_tokens_full: 10,
        initial_tokens_light: 1,
        lightweight_voting: false,
        vote_reassignment: ReassignmentPolicy::NewNodeFirst,
        node_roster: (0..departments).map(|i| department(&format!("dept-{i}"), true)).collect(),
        user_roster: vec![],
        adversary_actions: vec![],
        fork_rounds: vec![],
        crashes: vec![],
        invariants: vec![Invariant::Convergence, Invariant::Safety, Invariant::Liveness],
    }
}

/// Every department submits one record per round to the next department.
pub fn with_busy_delegates(mut s: Scenario) -> Scenario {
    let n = s.node_roster.len();
    let t_c = s.round_config.t_c;
    let names: Vec<String> = s.node_roster.iter().map(|n| n.name.clone()).collect();
    for (i, node) in s.node_roster.iter_mut().enumerate() {
        let target = &names[(i + 1) % n];
        node.submissions = (1..=s.run_ticks / t_c)
            .map(|r| r * t_c - t_c + 1 + (i as u64 % (t_c - 1)))
            .filter(|tick| *tick > node.join_tick)
            .map(|tick| submission(tick, "MINUTES", &format!("{} record at {tick}", node.name), target))
            .collect();
    }
    s
}

/// Honest chain with `blocks` blocks including genesis, sealed by
/// `departments` delegates with one user record per round.
pub fn honest_chain(seed: u64, departments: usize, blocks: usize) -> ChainDump {
    let rounds = blocks as u64 - 1;
    let mut s = with_busy_delegates(base_scenario("honest-chain", seed, departments, rounds * 5));
    s.invariants = vec![Invariant::Liveness];
    let out = run(&s).expect("builder scenarios are valid");
    out.chain
}

/// Flips one random byte in a random non-tip block; returns the dump and
/// the tampered height.
pub fn tamper_trial(chain: &ChainDump, seed: u64) -> (ChainDump, usize) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let height = rand::Rng::gen_range(&mut rng, 0..chain.blocks.len() - 1);
    let (bad, _) = flip_random_byte(&chain.blocks[height], &mut rng);
    let mut blocks = chain.blocks.clone();
    blocks[height] = bad;
    (ChainDump { context: chain.context.clone(), blocks }, height)
}

/// Four departments; two competing blocks in round `fork_round`.
pub fn fork_scenario(seed: u64, fork_round: u64) -> Scenario {
    let mut s = with_busy_delegates(base_scenario("fork", seed, 4, (fork_round + 4) * 5));
    s.round_config.panel_size = 2;
    s.fork_rounds = vec![fork_round];
    s.invariants = vec![Invariant::Convergence, Invariant::Safety, Invariant::ForkResolution, Invariant::Liveness];
    s
}

/// Five departments; `crashed` stops at `tick`.
pub fn crash_scenario(seed: u64, run_ticks: u64, crashed: &str, tick: u64) -> Scenario {
    let mut s = with_busy_delegates(base_scenario("crash", seed, 5, run_ticks));
    s.crashes = vec![CrashSpec { node: crashed.to_string(), tick }];
    s
}

/// A leader with the heaviest stake forges a record under a victim's user
/// id; delegates covering `fraction` of the remaining stake endorse it
/// blindly. Ten equal-stake honest-or-colluding delegates.
pub fn coalition_scenario(fraction: Fraction, threshold: Fraction, seed: u64) -> Scenario {
    let mut s = base_scenario("coalition", seed, 11, 100);
    s.round_config.finality_fraction = threshold;
    s.round_config.panel_size = 2;
    s.node_roster[0].name = "leader".into();
    s.node_roster[0].vote = Some("leader".into());
    s.node_roster[0].tokens = Some(100);
    s.user_roster = vec![UserSpec {
        name: "victim".into(),
        register_tick: 1,
        via: Some("dept-1".into()),
        submissions: vec![submission(3, "TIN", "victim record", "dept-2")],
        recovery: None,
    }];
    s.adversary_actions = vec![AdversarySpec {
        trigger_tick: 5,
        action: AdversaryAction::StakeCoalition { fraction, leader: "leader".into() },
    }];
    s.invariants = vec![Invariant::Safety];
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: Fraction,
    pub threshold: Fraction,
    pub coalition_stake: u64,
    pub eligible_stake: u64,
    /// The coalition gathered enough endorsement weight to seal.
    pub coalition_sealed: bool,
    /// Some honest full node ended with the forged block on its chain.
    pub honest_finalized: bool,
}

/// Runs the forge-and-collude scenario for each coalition fraction.
pub fn coalition_sweep(fractions: &[Fraction], threshold: Fraction) -> Vec<SweepRow> {
    fractions
        .iter()
        .map(|f| {
            let out = run(&coalition_scenario(*f, threshold, 7)).expect("builder scenarios are valid");
            let forged = out.report.forged.first();
            SweepRow {
                fraction: *f,
                threshold,
                coalition_stake: forged.map_or(0, |r| r.coalition_stake),
                eligible_stake: forged.map_or(0, |r| r.eligible_weight),
                coalition_sealed: forged.is_some_and(|r| r.sealed),
                honest_finalized: forged.is_some_and(|r| !r.honest_adopters.is_empty()),
            }
        })
        .collect()
}

/// Users register, submit, and one of them loses a key and recovers it
/// through a department.
pub fn recovery_scenario(seed: u64) -> Scenario {
    let mut s = base_scenario("recovery", seed, 3, 60);
    s.user_roster = vec![
        UserSpec {
            name: "alice".into(),
            register_tick: 1,
            via: Some("dept-0".into()),
            submissions: vec![
                submission(3, "TIN", "alice tin", "dept-1"),
                submission(8, "LICENSE", "alice license", "dept-2"),
                submission(13, "PASSPORT", "alice passport", "dept-1"),
            ],
            recovery: Some(RecoverySpec { tick: 27, agent: "dept-1".into(), identity_proven: true }),
        },
        UserSpec {
            name: "bob".into(),
            register_tick: 2,
            via: None,
            submissions: vec![submission(6, "TIN", "bob tin", "dept-0")],
            recovery: None,
        },
    ];
    s.invariants = vec![
        Invariant::Convergence,
        Invariant::Safety,
        Invariant::RecoveryAppendOnly,
        Invariant::StakeConsistency,
        Invariant::KeyContainment,
        Invariant::WalletUbiquity,
    ];
    s
}

/// Departments plus a lightweight citizen node whose wallet receives records.
pub fn lightweight_scenario(seed: u64) -> Scenario {
    let mut s = with_busy_delegates(base_scenario("lightweight", seed, 3, 40));
    s.node_roster.push(NodeSpec {
        name: "citizen".into(),
        origin: NodeOrigin::Citizen,
        kind: NodeKind::Lightweight,
        join_tick: 2,
        tokens: None,
        delegate: false,
        vote: None,
        delegate_to: None,
        submissions: vec![submission(6, "TIN", "citizen tin", "dept-0"), submission(12, "BILL", "citizen bill", "dept-1")],
    });
    s.invariants = vec![Invariant::Convergence, Invariant::LightweightVerified, Invariant::Liveness];
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceVerdict {
    pub service: String,
    pub proxy: String,
    pub passed: bool,
    pub detail: String,
}

fn verdict(service: &str, proxy: &str, passed: bool, detail: String) -> ServiceVerdict {
    ServiceVerdict { service: service.into(), proxy: proxy.into(), passed, detail }
}

fn invariant_passed(out: &SimulationOutcome, inv: Invariant) -> bool {
    out.report.invariant(inv).is_some_and(|r| r.passed)
}

/// One verdict per security service, each backed by a runnable proxy.
pub fn check_table1_services() -> Vec<ServiceVerdict> {
    let mut out = Vec::new();

    // Authentication: a record whose signature does not match is refused.
    let recovery = run(&recovery_scenario(3)).expect("valid");
    let chain = &recovery.chain;
    let mut directory = crate::registry::Directory::new();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let user = KeyPair::from_rng(&mut rng);
    let imposter = KeyPair::from_rng(&mut rng);
    directory.announce(crate::registry::WalletAnnouncement {
        address: user.address(),
        public_key: user.public_key(),
        role: crate::ledger::MemberRole::User,
        full_node: false,
        grant: 0,
        joined_at: 0,
        owner_id: "00000001".into(),
    });
    let mut forged = Transaction::new_signed(&imposter, "00000001", b"x".to_vec(), "TIN", 1);
    forged.submitter_address = user.address();
    let unsigned = Transaction::new_signed(&imposter, "00000002", b"x".to_vec(), "TIN", 1);
    let auth = directory.admit(&forged) == Err(AdmissionError::AuthenticationFailed)
        && directory.admit(&unsigned) == Err(AdmissionError::Unregistered);
    out.push(verdict("Authentication", "mis-signed and unregistered submissions refused at admission", auth, String::new()));

    // Access control: recovery through a lightweight business node fails.
    let mut s = recovery_scenario(4);
    s.node_roster.push(NodeSpec {
        name: "shop".into(),
        origin: NodeOrigin::Business,
        kind: NodeKind::Lightweight,
        join_tick: 1,
        tokens: None,
        delegate: false,
        vote: None,
        delegate_to: None,
        submissions: vec![],
    });
    s.user_roster[0].recovery = Some(RecoverySpec { tick: 27, agent: "shop".into(), identity_proven: true });
    let denied = run(&s).expect("valid");
    let rejected = denied.report.recoveries.first().is_some_and(|r| r.new_address.is_none() && r.error.is_some());
    out.push(verdict(
        "Access control",
        "recovery requested through a non-department node",
        rejected,
        denied.report.recoveries.first().and_then(|r| r.error.clone()).unwrap_or_default(),
    ));

    // Integrity: byte flips in a stored chain are found at the right index.
    let honest = honest_chain(11, 3, 12);
    let detected = (0..20u64)
        .filter(|seed| {
            let (bad, h) = tamper_trial(&honest, *seed);
            matches!(validate_blocks(&bad.blocks, &bad.context), Ok(ChainVerdict::Invalid { index, .. }) if index == h)
        })
        .count();
    out.push(verdict("Integrity", "random byte flips detected at the tampered index", detected == 20, format!("{detected}/20")));

    // Non-repudiation: every sealed record re-verifies against the key its
    // submitter broadcast.
    let mut checked = 0;
    let nonrep = chain.blocks.iter().skip(1).flat_map(|b| &b.transactions).all(|tx| {
        checked += 1;
        chain.context.members.get(&tx.submitter_address).is_some_and(|m| verify(&m.public_key, &tx.message(), &tx.submitter_signature))
    });
    out.push(verdict("Non-repudiation", "sealed signatures verify against broadcast keys", nonrep && checked > 0, format!("{checked} records")));

    // Availability: one crashed department does not stop sealing.
    let crash = run(&crash_scenario(5, 40, "dept-3", 12)).expect("valid");
    out.push(verdict(
        "Availability",
        "single department crash keeps every round sealed",
        invariant_passed(&crash, Invariant::Liveness),
        format!("{} blocks sealed", crash.report.sealed_blocks),
    ));

    // Confidentiality: no private key leaves a node. Record payloads are
    // stored in the clear; only key containment and hash commitment are checked.
    out.push(verdict(
        "Confidentiality",
        "private-key scan over every emitted message, dump and report",
        invariant_passed(&recovery, Invariant::KeyContainment),
        format!("{} outputs scanned; payload encryption not modelled", recovery.report.containment.scanned),
    ));

    // Trust: equal inputs give equal reports and honest nodes agree.
    let again = run(&recovery_scenario(3)).expect("valid");
    let trust = again.report_hash == recovery.report_hash && invariant_passed(&recovery, Invariant::Convergence);
    out.push(verdict("Trust", "repeat run hashes equal and honest nodes converge", trust, recovery.report_hash.to_hex()));

    out
}

/// Self-transaction forging by one delegate; used to check eviction.
pub fn forge_scenario(seed: u64, style: ForgeStyle) -> Scenario {
    let mut s = with_busy_delegates(base_scenario("forge", seed, 4, 50));
    s.adversary_actions =
        vec![AdversarySpec { trigger_tick: 5, action: AdversaryAction::ForgeProposal { actor: "dept-0".into(), style } }];
    s.invariants = vec![Invariant::Convergence, Invariant::Safety, Invariant::WitnessExclusion];
    s
}

/// Three departments, a citizen phone, a business server and two users.
pub fn honest_small(seed: u64) -> Scenario {
    let mut s = base_scenario("honest_small", seed, 3, 50);
    s.node_roster[1].submissions = vec![submission(7, "PERMIT", "building permit 17", "dept-2")];
    s.node_roster.push(NodeSpec {
        name: "citizen-phone".into(),
        origin: NodeOrigin::Citizen,
        kind: NodeKind::Lightweight,
        join_tick: 3,
        tokens: None,
        delegate: false,
        vote: None,
        delegate_to: None,
        submissions: vec![submission(9, "TIN", "citizen tin", "dept-0")],
    });
    s.node_roster.push(NodeSpec {
        name: "bakery".into(),
        origin: NodeOrigin::Business,
        kind: NodeKind::Full,
        join_tick: 4,
        tokens: None,
        delegate: false,
        vote: Some("dept-1".into()),
        delegate_to: None,
        submissions: vec![submission(12, "LICENSE", "trade license", "dept-0")],
    });
    s.user_roster = vec![
        UserSpec {
            name: "alice".into(),
            register_tick: 1,
            via: Some("dept-0".into()),
            submissions: vec![submission(4, "TIN", "alice tin", "dept-1"), submission(16, "PASSPORT", "alice passport", "bakery")],
            recovery: None,
        },
        UserSpec {
            name: "bob".into(),
            register_tick: 2,
            via: None,
            submissions: vec![submission(6, "BIRTH", "bob birth record", "dept-2")],
            recovery: None,
        },
    ];
    s.invariants = vec![
        Invariant::Convergence,
        Invariant::Safety,
        Invariant::WitnessExclusion,
        Invariant::Liveness,
        Invariant::StakeConsistency,
        Invariant::KeyContainment,
        Invariant::WalletUbiquity,
        Invariant::LightweightVerified,
        Invariant::OnboardingGate,
    ];
    s
}

/// Every delegate submits every round for `rounds` rounds.
pub fn witness_exclusion_scenario(seed: u64, rounds: u64) -> Scenario {
    let mut s = with_busy_delegates(base_scenario("witness_exclusion", seed, 4, rounds * 5));
    s.invariants =
        vec![Invariant::Convergence, Invariant::Safety, Invariant::WitnessExclusion, Invariant::Liveness, Invariant::StakeConsistency];
    s
}

/// One department rewrites a byte of its stored copy of an old block.
pub fn tamper_scenario(seed: u64) -> Scenario {
    let mut s = with_busy_delegates(base_scenario("tamper", seed, 4, 50));
    s.adversary_actions = vec![AdversarySpec {
        trigger_tick: 22,
        action: AdversaryAction::TamperBlock { actor: "dept-3".into(), height: 2, byte_index: 40 },
    }];
    s.invariants = vec![Invariant::Convergence, Invariant::Safety, Invariant::TamperDetected, Invariant::Liveness];
    s
}

/// An unregistered sender floods a department while a user keeps working.
pub fn flood_scenario(seed: u64) -> Scenario {
    let mut s = base_scenario("flood", seed, 3, 40);
    s.user_roster = vec![UserSpec {
        name: "carol".into(),
        register_tick: 1,
        via: Some("dept-2".into()),
        submissions: vec![submission(4, "TIN", "carol tin", "dept-0"), submission(14, "BILL", "carol bill", "dept-1")],
        recovery: None,
    }];
    s.adversary_actions =
        vec![AdversarySpec { trigger_tick: 3, action: AdversaryAction::FloodTransactions { rate: 5, duration: 20 } }];
    s.invariants =
        vec![Invariant::Convergence, Invariant::Safety, Invariant::Liveness, Invariant::FloodResilience, Invariant::OnboardingGate];
    s
}

/// Verdicts per security service plus the coalition safety table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub table1: Vec<ServiceVerdict>,
    pub coalition_sweep: Vec<SweepRow>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.table1.iter().all(|v| v.passed)
            && self.coalition_sweep.iter().all(|r| r.honest_finalized == r.threshold.is_met(r.coalition_stake, r.eligible_stake))
    }
}

pub fn suite_report(threshold: Fraction) -> SuiteReport {
    let fractions: Vec<Fraction> =
        [(0, 1), (1, 10), (4, 10), (49, 100), (7, 10)].iter().filter_map(|(n, d)| Fraction::new(*n, *d)).collect();
    SuiteReport { table1: check_table1_services(), coalition_sweep: coalition_sweep(&fractions, threshold) }
}
