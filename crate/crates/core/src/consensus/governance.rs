use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{elect_witness_panel, ConsensusError, RoundConfig, StakeTable, VoteBook, WitnessPanel};
use crate::crypto::Address;
use crate::ledger::Member;

/// Evidence that gets a delegate evicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Misbehavior {
    InvalidProposal { reason: String },
    MissedSlot,
    SelfTransaction,
    DoubleProposal,
}

/// Who receives the votes of an evicted delegate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReassignmentPolicy {
    /// Hold the votes for the next delegate to register; after one round
    /// without one, fall back to the top surviving delegate.
    NewNodeFirst,
    /// Hand the votes to the top surviving delegate straight away.
    SurvivingDelegate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingReassignment {
    pub evicted: Address,
    pub voters: Vec<Address>,
    pub since_round: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reassignment {
    pub from: Address,
    pub to: Address,
    pub voters: Vec<Address>,
    pub round: u64,
    pub to_new_node: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvictionRecord {
    pub delegate: Address,
    pub evidence: Misbehavior,
    pub round: u64,
    pub tick: u64,
    pub affected_voters: Vec<Address>,
    /// Set when the evicted delegate was the active witness.
    pub promoted_witness: Option<Address>,
}

/// Replicated delegate set, vote book and current panel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Governance {
    config: RoundConfig,
    policy: ReassignmentPolicy,
    delegates: BTreeMap<Address, u64>,
    barred: BTreeSet<Address>,
    pub votes: VoteBook,
    pending: Vec<PendingReassignment>,
    panel: Option<WitnessPanel>,
    evictions: Vec<EvictionRecord>,
    reassignments: Vec<Reassignment>,
}

impl Governance {
    pub fn new(config: RoundConfig, policy: ReassignmentPolicy) -> Self {
        Governance {
            config,
            policy,
            delegates: BTreeMap::new(),
            barred: BTreeSet::new(),
            votes: VoteBook::new(),
            pending: Vec::new(),
            panel: None,
            evictions: Vec::new(),
            reassignments: Vec::new(),
        }
    }

    pub fn config(&self) -> &RoundConfig {
        &self.config
    }

    pub fn delegates(&self) -> BTreeSet<Address> {
        self.delegates.keys().copied().collect()
    }

    pub fn is_delegate(&self, address: &Address) -> bool {
        self.delegates.contains_key(address)
    }

    pub fn registered_at(&self, address: &Address) -> Option<u64> {
        self.delegates.get(address).copied()
    }

    pub fn is_barred(&self, address: &Address) -> bool {
        self.barred.contains(address)
    }

    pub fn panel(&self) -> Option<&WitnessPanel> {
        self.panel.as_ref()
    }

    pub fn evictions(&self) -> &[EvictionRecord] {
        &self.evictions
    }

    pub fn reassignments(&self) -> &[Reassignment] {
        &self.reassignments
    }

    pub fn pending(&self) -> &[PendingReassignment] {
        &self.pending
    }

    /// Adds an onboarded full node to the delegate set. Returns `false` if
    /// it was already registered.
    pub fn register_delegate(
        &mut self,
        address: Address,
        members: &BTreeMap<Address, Member>,
        tick: u64,
        round: u64,
    ) -> Result<bool, ConsensusError> {
        let member = members.get(&address).ok_or(ConsensusError::UnknownAddress(address))?;
        if self.barred.contains(&address) {
            return Err(ConsensusError::Barred(address));
        }
        if !member.full_node {
            return Err(ConsensusError::NotFullNode(address));
        }
        if self.delegates.contains_key(&address) {
            return Ok(false);
        }
        self.delegates.insert(address, tick);
        if self.policy == ReassignmentPolicy::NewNodeFirst {
            for p in std::mem::take(&mut self.pending) {
                self.grant(p, address, round, true);
            }
        }
        Ok(true)
    }

    /// Lifts an eviction bar; the node must register again to serve.
    pub fn readmit(&mut self, address: &Address) -> bool {
        self.barred.remove(address)
    }

    /// Runs a stake-weighted election over the current delegates. Voters
    /// whose delegate was evicted and who await reassignment sit it out.
    pub fn elect(&mut self, round: u64, round_seed: u64, stakes: &StakeTable) -> Result<&WitnessPanel, ConsensusError> {
        let waiting: BTreeSet<Address> = self.pending.iter().flat_map(|p| p.voters.iter().copied()).collect();
        let (votes, delegations) = self.votes.snapshot(stakes, &waiting);
        let panel = elect_witness_panel(
            &self.delegates(),
            &votes,
            &delegations,
            stakes,
            self.config.panel_size,
            round,
            round_seed,
        )?;
        Ok(self.panel.insert(panel))
    }

    /// Settles pending reassignments that have waited a full round.
    pub fn start_round(&mut self, round: u64) {
        let (due, keep): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending)
            .into_iter()
            .partition(|p| self.policy == ReassignmentPolicy::SurvivingDelegate || round > p.since_round + 1);
        self.pending = keep;
        for p in due {
            match self.top_surviving() {
                Some(to) => self.grant(p, to, round, false),
                None => self.pending.push(p),
            }
        }
    }

    fn top_surviving(&self) -> Option<Address> {
        let ranked = self.panel.iter().flat_map(|p| p.ranking.iter().map(|r| r.address));
        ranked.chain(self.delegates.keys().copied()).find(|a| self.delegates.contains_key(a))
    }

    fn grant(&mut self, p: PendingReassignment, to: Address, round: u64, to_new_node: bool) {
        for v in &p.voters {
            // A voter that changed its mind since the eviction keeps its new choice.
            if self.votes.intent(v) == Some(super::VoteIntent::Vote(p.evicted)) {
                self.votes.cast_vote(*v, to);
            }
        }
        self.reassignments.push(Reassignment { from: p.evicted, to, voters: p.voters, round, to_new_node });
    }

    /// Evicts `delegate`, bars it from re-registering, pools its voters and
    /// repairs the current panel, promoting the first backup if the delegate
    /// was the active witness.
    pub fn handle_misbehavior(
        &mut self,
        delegate: Address,
        evidence: Misbehavior,
        round: u64,
        tick: u64,
    ) -> Result<&EvictionRecord, ConsensusError> {
        if self.delegates.remove(&delegate).is_none() {
            return Err(ConsensusError::UnknownDelegate(delegate));
        }
        self.barred.insert(delegate);
        let affected_voters = self.votes.voters_for(&delegate);
        if !affected_voters.is_empty() {
            self.pending.push(PendingReassignment { evicted: delegate, voters: affected_voters.clone(), since_round: round });
        }

        let mut promoted_witness = None;
        if let Some(panel) = self.panel.as_mut() {
            panel.ranking.retain(|r| r.address != delegate);
            panel.members.retain(|m| *m != delegate);
            panel.backup_order.retain(|m| *m != delegate);
            if panel.active_witness == delegate && !panel.backup_order.is_empty() {
                let next = panel.backup_order.remove(0);
                panel.active_witness = next;
                promoted_witness = Some(next);
            }
            let k = self.config.panel_size;
            for r in panel.ranking.iter() {
                if panel.members.len() >= k {
                    break;
                }
                if !panel.members.contains(&r.address) {
                    panel.members.push(r.address);
                    panel.backup_order.push(r.address);
                }
            }
        }
        if self.policy == ReassignmentPolicy::SurvivingDelegate {
            self.start_round(round);
        }
        self.evictions.push(EvictionRecord { delegate, evidence, round, tick, affected_voters, promoted_witness });
        Ok(self.evictions.last().expect("just pushed"))
    }
}
