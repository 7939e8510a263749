use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lightweight::SyncOutcome;
use super::message::MessageKind;
use super::node::OrphanEvent;
use super::scenario::{ForgeStyle, Invariant};
use crate::consensus::{EvictionRecord, RankedDelegate, Reassignment, ReassignmentPolicy, RoundConfig};
use crate::crypto::{hash256, Address, Digest};
use crate::fraction::Fraction;
use crate::ledger::dump::ChainDump;
use crate::ledger::ChainVerdict;
use crate::registry::{NodeKind, NodeOrigin, QueryResult};

/// Values used when a scenario does not override them, echoed so a report
/// is self-describing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Defaults {
    pub t_c: u64,
    pub finality_fraction: Fraction,
    pub latency: u64,
    pub initial_tokens_full: u64,
    pub initial_tokens_light: u64,
    pub vote_reassignment: ReassignmentPolicy,
    pub user_id_width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub name: String,
    pub scenario_hash: Digest,
    pub seed: u64,
    /// Set when the seed came from the command line instead of the scenario.
    pub seed_override: Option<u64>,
    pub run_ticks: u64,
    pub final_tick: u64,
    pub latency: u64,
    pub round_config: RoundConfig,
    pub defaults: Defaults,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeReport {
    pub name: String,
    pub origin: NodeOrigin,
    pub kind: NodeKind,
    pub address: Option<Address>,
    pub joined_at: Option<u64>,
    pub crashed_at: Option<u64>,
    pub adversarial: bool,
    pub delegate: bool,
    /// Canonical head; lightweight nodes report their best header.
    pub head: Option<Digest>,
    pub height: usize,
    pub branches: usize,
    pub stake: u64,
    pub mempool: usize,
    pub directory_size: usize,
    pub blocks_received: u64,
    pub headers_received: usize,
    pub rejections: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub name: Invariant,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundOutcome {
    Sealed,
    Pending,
    NoQuorum,
    Missed,
    Fork,
}

/// One line per round: who was ranked, who produced and with what support.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectionAudit {
    pub round: u64,
    pub tick: u64,
    pub ranking: Vec<RankedDelegate>,
    pub panel: Vec<Address>,
    pub witness: Option<Address>,
    /// Delegate whose block sealed, or the last one that tried.
    pub producer: Option<Address>,
    pub outcome: RoundOutcome,
    pub block: Option<Digest>,
    pub endorsement_weight: u64,
    pub eligible_weight: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForkRecord {
    pub round: u64,
    pub diverged_tick: u64,
    pub blocks: Vec<Digest>,
    pub resolved_tick: Option<u64>,
    pub rounds_to_resolve: Option<u64>,
    pub orphaned: Vec<Digest>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgedProposal {
    pub round: u64,
    pub tick: u64,
    pub actor: String,
    pub style: ForgeStyle,
    pub block: Option<Digest>,
    pub coalition: Vec<String>,
    pub coalition_stake: u64,
    pub endorsement_weight: u64,
    pub eligible_weight: u64,
    pub sealed: bool,
    /// Honest full nodes whose canonical chain holds the block at the end.
    pub honest_adopters: Vec<String>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TamperReceipt {
    pub node: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TamperRecord {
    pub tick: u64,
    pub actor: String,
    pub height: usize,
    pub byte_index: Option<usize>,
    pub original_hash: Option<Digest>,
    pub tampered_hash: Option<Digest>,
    pub actor_verdict: Option<ChainVerdict>,
    pub receipts: Vec<TamperReceipt>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub user: String,
    pub user_id: String,
    pub agent: String,
    pub tick: u64,
    pub old_address: Address,
    pub new_address: Option<Address>,
    pub error: Option<String>,
    pub records_before: usize,
    /// Canonical block hashes at the agent when recovery started.
    pub prefix: Vec<Digest>,
    pub old_query: Option<QueryResult>,
    pub new_query: Option<QueryResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LightReport {
    pub node: String,
    pub trusted: Option<String>,
    pub headers_received: usize,
    pub blocks_received: u64,
    pub expected_transactions: usize,
    pub outcome: SyncOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloodReport {
    pub sent: u64,
    pub rejected: u64,
    pub admitted: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub scanned: u64,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub node: String,
    pub requested_at: u64,
    pub verifiers: Vec<String>,
    pub completed_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub header: ReportHeader,
    pub invariants: Vec<InvariantResult>,
    pub nodes: Vec<NodeReport>,
    pub sealed_blocks: usize,
    pub final_head: Digest,
    pub elections: Vec<ElectionAudit>,
    pub evictions: Vec<EvictionRecord>,
    pub reassignments: Vec<Reassignment>,
    pub orphans: Vec<OrphanEvent>,
    pub forks: Vec<ForkRecord>,
    pub forged: Vec<ForgedProposal>,
    pub tampers: Vec<TamperRecord>,
    pub recoveries: Vec<RecoveryReport>,
    pub lightweight: Vec<LightReport>,
    pub flood: FloodReport,
    pub containment: ContainmentReport,
    pub registrations: Vec<RegistrationRecord>,
    /// Ticks at round boundaries where honest heads differed.
    pub boundary_divergences: Vec<u64>,
    pub messages: BTreeMap<MessageKind, u64>,
}

impl SimulationReport {
    pub fn invariant(&self, name: Invariant) -> Option<&InvariantResult> {
        self.invariants.iter().find(|r| r.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.invariants.iter().all(|r| r.passed)
    }

    /// Digest of the report's JSON encoding; equal for equal runs.
    pub fn digest(&self) -> Digest {
        hash256(&serde_json::to_vec(self).expect("report serializes"))
    }
}

/// Report file contents: the digest first, then the report it covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportFile {
    pub report_hash: Digest,
    pub report: SimulationReport,
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub report: SimulationReport,
    pub report_hash: Digest,
    /// Canonical chain of the reference node with its validation context.
    pub chain: ChainDump,
}

impl SimulationOutcome {
    pub fn report_file(&self) -> ReportFile {
        ReportFile { report_hash: self.report_hash, report: self.report.clone() }
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report_file()).expect("report serializes")
    }
}
