use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::invariants::{evaluate, SecretScanner};
use super::lightweight::{best_header_chain, lightweight_sync, serve_proofs};
use super::message::{decode_endorsement, encode_endorsement, Message, MessageKind, MessageQueue, NodeId};
use super::node::{ChainStore, Insert, OrphanEvent, SimNode};
use super::report::*;
use super::scenario::{AdversaryAction, ForgeStyle, Scenario, ScenarioError};
use crate::consensus::production::{assemble_block, seal_header};
use crate::consensus::{
    default_finality_fraction, endorse_block, finalize_block, produce_block, EndorseRejection, Finalization,
    Governance, Misbehavior, ReassignmentPolicy, StakeTable, DEFAULT_T_C,
};
use crate::crypto::{hash256, hash256_concat, sign, Address, Digest, KeyPair};
use crate::ledger::dump::ChainDump;
use crate::ledger::tamper::flip_first_decodable;
use crate::ledger::{
    validate_block, validate_blocks, Block, BlockHeader, Endorsement, InvalidReason, LedgerContext, NetworkConfig,
    Transaction, BLOCK_VERSION,
};
use crate::registry::{
    query_records, submit_record, AdmissionError, Credentials, GrantPolicy, NodeKind, NodeRequest, Registry,
    RegistryError, UserRecord, WalletAnnouncement, USER_ID_WIDTH,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("registration failed: {0}")]
    Registry(#[from] RegistryError),
    #[error("fork impossible in round {round}: {reason}")]
    ForkImpossible { round: u64, reason: String },
}

/// Wallet gossip; `retires` marks the address a recovery replaced.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct WalletMessage {
    node: Option<String>,
    wallet: WalletAnnouncement,
    retires: Option<Address>,
}

/// One production attempt within a round.
#[derive(Debug)]
struct Attempt {
    round: u64,
    producer: NodeId,
    address: Address,
    tick: u64,
    proposals: Vec<Block>,
    endorsements: Vec<(Digest, Endorsement)>,
    evidence: Vec<Misbehavior>,
    forged: Option<usize>,
    checked: bool,
    finalized: bool,
}

#[derive(Debug)]
struct RoundState {
    round: u64,
    start: u64,
    sealed: bool,
    audit: Option<usize>,
}

#[derive(Debug)]
struct SimUser {
    name: String,
    id: NodeId,
    creds: Option<Credentials<UserRecord>>,
}

#[derive(Debug)]
struct Flood {
    key: KeyPair,
    start: u64,
    until: u64,
    rate: u64,
    counter: u64,
    hashes: BTreeSet<Digest>,
}

#[derive(Debug, Default)]
struct Coalition {
    leader: Option<NodeId>,
    members: BTreeSet<NodeId>,
    trigger: u64,
    forged: bool,
}

/// Tick-driven multi-node run of one scenario. Every random choice flows
/// from the scenario seed, so equal inputs give equal reports.
pub struct Simulation {
    scenario: Scenario,
    seed: u64,
    seed_override: Option<u64>,
    clock: u64,
    rng: ChaCha20Rng,
    registry: Registry,
    context: LedgerContext,
    gov: Governance,
    nodes: Vec<SimNode>,
    users: Vec<SimUser>,
    by_address: BTreeMap<Address, NodeId>,
    queue: MessageQueue,
    inbox: BTreeMap<NodeId, Vec<Block>>,
    buffered: BTreeMap<NodeId, Vec<Message>>,
    pending_blocks: BTreeMap<NodeId, Vec<Block>>,
    seen_proposals: BTreeMap<(NodeId, Address, u64), Digest>,
    attempts: Vec<Attempt>,
    round: Option<RoundState>,
    votes_applied: BTreeSet<NodeId>,
    coalition: Coalition,
    withhold: Vec<(NodeId, u64, u64)>,
    forges: Vec<(NodeId, ForgeStyle, u64, bool)>,
    flood: Option<Flood>,
    scanner: SecretScanner,
    tampered_payloads: BTreeMap<Digest, usize>,
    elections: Vec<ElectionAudit>,
    forks: Vec<ForkRecord>,
    forged: Vec<ForgedProposal>,
    tampers: Vec<TamperRecord>,
    recoveries: Vec<RecoveryReport>,
    orphans: Vec<OrphanEvent>,
    registrations: Vec<RegistrationRecord>,
    boundary_divergences: Vec<u64>,
}

fn round_seed(seed: u64, round: u64) -> u64 {
    let d = hash256_concat(&[&seed.to_be_bytes(), &round.to_be_bytes()]);
    u64::from_be_bytes(d.0[..8].try_into().expect("eight bytes"))
}

fn evidence_for(rejection: &EndorseRejection) -> Option<Misbehavior> {
    match rejection {
        EndorseRejection::SelfEndorsement => None,
        EndorseRejection::Invalid { reason: InvalidReason::WitnessSelfTransaction } => Some(Misbehavior::SelfTransaction),
        EndorseRejection::Invalid { reason } => Some(Misbehavior::InvalidProposal { reason: reason.to_string() }),
    }
}

impl Simulation {
    pub fn new(scenario: Scenario, seed_override: Option<u64>) -> Result<Self, SimError> {
        scenario.validate()?;
        let seed = seed_override.unwrap_or(scenario.seed);
        let network =
            NetworkConfig { name: scenario.name.clone(), version: BLOCK_VERSION, genesis_payload: scenario.name.as_bytes().to_vec() };
        let context = LedgerContext::new(network, scenario.round_config.finality_fraction);
        let gov = Governance::new(scenario.round_config.clone(), scenario.vote_reassignment);
        let registry = Registry::new(GrantPolicy {
            initial_tokens_full: scenario.initial_tokens_full,
            initial_tokens_light: scenario.initial_tokens_light,
        });
        let nodes: Vec<SimNode> = scenario
            .node_roster
            .iter()
            .enumerate()
            .map(|(i, n)| SimNode::new(i, n.name.clone(), n.origin, n.kind))
            .collect();
        let n = nodes.len();
        let users = scenario
            .user_roster
            .iter()
            .enumerate()
            .map(|(i, u)| SimUser { name: u.name.clone(), id: n + 1 + i, creds: None })
            .collect();
        let mut sim = Simulation {
            seed,
            seed_override,
            clock: 0,
            rng: ChaCha20Rng::seed_from_u64(seed),
            registry,
            context,
            gov,
            nodes,
            users,
            by_address: BTreeMap::new(),
            queue: MessageQueue::default(),
            inbox: BTreeMap::new(),
            buffered: BTreeMap::new(),
            pending_blocks: BTreeMap::new(),
            seen_proposals: BTreeMap::new(),
            attempts: Vec::new(),
            round: None,
            votes_applied: BTreeSet::new(),
            coalition: Coalition::default(),
            withhold: Vec::new(),
            forges: Vec::new(),
            flood: None,
            scanner: SecretScanner::default(),
            tampered_payloads: BTreeMap::new(),
            elections: Vec::new(),
            forks: Vec::new(),
            forged: Vec::new(),
            tampers: Vec::new(),
            recoveries: Vec::new(),
            orphans: Vec::new(),
            registrations: Vec::new(),
            boundary_divergences: Vec::new(),
            scenario,
        };
        sim.bootstrap()?;
        sim.arm_adversaries();
        Ok(sim)
    }

    fn bootstrap(&mut self) -> Result<(), SimError> {
        let genesis = self.context.genesis();
        let founders: Vec<NodeId> = (0..self.nodes.len()).filter(|i| self.scenario.node_roster[*i].join_tick == 0).collect();
        for &i in &founders {
            let entry = &self.scenario.node_roster[i];
            let req = NodeRequest { node_id: entry.name.clone(), origin: entry.origin, kind: entry.kind, tokens: entry.tokens };
            let creds = self.registry.bootstrap_node(&req, &mut self.rng)?;
            self.install_key(i, creds.keypair);
            self.context.members.insert(creds.record.wallet.address, creds.record.wallet.member());
            let node = &mut self.nodes[i];
            node.joined_at = Some(0);
            node.store = Some(ChainStore::new(genesis.clone()));
            if !node.is_full() {
                node.headers.push(genesis.header.clone());
            }
        }
        for &i in &founders {
            self.nodes[i].directory = self.registry.directory.clone();
            if self.scenario.node_roster[i].delegate {
                let addr = self.nodes[i].address.expect("key installed");
                self.gov.register_delegate(addr, &self.context.members, 0, 0).expect("founding delegate registers");
                self.context.open_term(addr, 0);
            }
        }
        self.apply_votes();
        Ok(())
    }

    fn install_key(&mut self, i: NodeId, key: KeyPair) {
        self.scanner.add(&key);
        self.nodes[i].address = Some(key.address());
        self.by_address.insert(key.address(), i);
        self.nodes[i].key = Some(key);
    }

    fn arm_adversaries(&mut self) {
        let t_c = self.scenario.round_config.t_c;
        for a in self.scenario.adversary_actions.clone() {
            match a.action {
                AdversaryAction::TamperBlock { actor, .. } => {
                    self.mark_adversarial(&actor);
                }
                AdversaryAction::WithholdEndorsement { actor, rounds } => {
                    let i = self.mark_adversarial(&actor);
                    self.withhold.push((i, a.trigger_tick, a.trigger_tick + rounds * t_c));
                }
                AdversaryAction::FloodTransactions { rate, duration } => {
                    let key = KeyPair::from_rng(&mut self.rng);
                    self.scanner.add(&key);
                    self.flood = Some(Flood {
                        key,
                        start: a.trigger_tick,
                        until: a.trigger_tick + duration,
                        rate,
                        counter: 0,
                        hashes: BTreeSet::new(),
                    });
                }
                AdversaryAction::StakeCoalition { fraction, leader } => {
                    let leader = self.mark_adversarial(&leader);
                    // Stake at tick 0 of every node that will serve as a delegate.
                    let stake_of = |s: &super::scenario::NodeSpec| {
                        s.tokens.unwrap_or(match s.kind {
                            NodeKind::Full => self.scenario.initial_tokens_full,
                            NodeKind::Lightweight => self.scenario.initial_tokens_light,
                        })
                    };
                    let roster = &self.scenario.node_roster;
                    let candidates: Vec<NodeId> = (0..roster.len()).filter(|i| roster[*i].delegate && *i != leader).collect();
                    let total: u64 = candidates.iter().map(|i| stake_of(&roster[*i])).sum();
                    let mut taken = 0u64;
                    let mut members = BTreeSet::new();
                    for &i in candidates.iter().rev() {
                        let s = stake_of(&roster[i]);
                        // (taken + s) / total <= fraction
                        if ((taken + s) as u128) * fraction.denominator() as u128
                            <= fraction.numerator() as u128 * total as u128
                        {
                            taken += s;
                            members.insert(i);
                        }
                    }
                    for &m in &members {
                        self.nodes[m].adversarial = true;
                    }
                    self.coalition = Coalition { leader: Some(leader), members, trigger: a.trigger_tick, forged: false };
                }
                AdversaryAction::ForgeProposal { actor, style } => {
                    let i = self.mark_adversarial(&actor);
                    self.forges.push((i, style, a.trigger_tick, false));
                }
            }
        }
    }

    fn mark_adversarial(&mut self, name: &str) -> NodeId {
        let i = self.scenario.node_index(name).expect("validated node name");
        self.nodes[i].adversarial = true;
        i
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Canonical head of a full node, or best header of a lightweight one.
    pub fn head_of(&self, name: &str) -> Option<Digest> {
        let n = &self.nodes[self.scenario.node_index(name)?];
        match &n.store {
            Some(s) if n.is_full() => Some(s.tip().hash()),
            _ => n.headers.last().map(crate::ledger::block_hash),
        }
    }

    /// Number of tied branches a full node currently keeps.
    pub fn branches_of(&self, name: &str) -> Option<usize> {
        let n = &self.nodes[self.scenario.node_index(name)?];
        n.store.as_ref().map(|s| s.branches().len())
    }

    fn latency(&self) -> u64 {
        self.scenario.latency
    }

    fn t_c(&self) -> u64 {
        self.scenario.round_config.t_c
    }

    fn send(&mut self, kind: MessageKind, sender: NodeId, recipient: NodeId, payload: Vec<u8>, deliver_at: u64) {
        self.scanner.scan_payload(kind, &payload);
        self.queue.push(Message { kind, sender, recipient, payload, deliver_at });
    }

    /// Nodes that can receive traffic: activated or awaiting activation.
    fn reachable(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.address.is_some()).map(|n| n.id).collect()
    }

    fn reachable_full(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.address.is_some() && n.is_full()).map(|n| n.id).collect()
    }

    /// First honest live full node; the fallback is any live full node.
    fn reference(&self) -> NodeId {
        self.nodes
            .iter()
            .find(|n| n.is_honest_full())
            .or_else(|| self.nodes.iter().find(|n| n.is_full() && n.is_live()))
            .or_else(|| self.nodes.iter().find(|n| n.is_full() && n.store.is_some()))
            .map(|n| n.id)
            .expect("a founding department exists")
    }

    fn stakes_at_tip(&self, i: NodeId) -> StakeTable {
        StakeTable::replay(self.context.grants(), &self.nodes[i].store().canonical()[1..])
    }

    /// Advances one tick.
    pub fn step(&mut self) {
        let tick = self.clock + 1;
        self.clock = tick;
        let in_run = tick <= self.scenario.run_ticks;
        for c in self.scenario.crashes.clone() {
            if c.tick == tick {
                let i = self.scenario.node_index(&c.node).expect("validated");
                self.nodes[i].crashed_at.get_or_insert(tick);
            }
        }
        self.deliver(tick);
        if in_run {
            self.scheduled_events(tick);
            if tick.is_multiple_of(self.t_c()) {
                self.begin_round(tick / self.t_c(), tick);
            }
        }
        self.progress_attempts(tick);
        self.track_forks(tick);
    }

    fn busy(&self) -> bool {
        !self.queue.is_empty() || self.attempts.iter().any(|a| !a.finalized)
    }

    /// Runs every round, then lets in-flight traffic settle without
    /// starting new rounds.
    pub fn run(mut self) -> SimulationOutcome {
        while self.clock < self.scenario.run_ticks {
            self.step();
        }
        let limit = self.scenario.run_ticks + self.t_c();
        while self.clock < limit && self.busy() {
            self.step();
        }
        self.finish()
    }

    // ---- message handling ----

    fn deliver(&mut self, tick: u64) {
        for m in self.queue.take_due(tick) {
            self.dispatch(m, tick);
        }
        self.review_proposals(tick);
    }

    fn dispatch(&mut self, m: Message, tick: u64) {
        let Some(node) = self.nodes.get(m.recipient) else { return };
        if node.crashed_at.is_some() {
            if m.kind == MessageKind::RegistrationRequest {
                self.retry_registration(m, tick);
            }
            return;
        }
        if node.joined_at.is_none() {
            if node.address.is_some() && m.kind != MessageKind::RegistrationRequest {
                self.buffered.entry(m.recipient).or_default().push(m);
            }
            return;
        }
        match m.kind {
            MessageKind::RegistrationRequest => self.on_registration_request(m, tick),
            MessageKind::RegistrationBroadcast | MessageKind::WalletBroadcast => self.on_wallet(m),
            MessageKind::TransactionSubmit => self.on_transaction(m, tick),
            MessageKind::BlockProposal => {
                if let Ok(b) = Block::from_canonical(&m.payload) {
                    self.inbox.entry(m.recipient).or_default().push(b);
                }
            }
            MessageKind::BlockEndorsement => self.on_endorsement(m),
            MessageKind::BlockBroadcast => self.on_block(m, tick),
            MessageKind::HeaderBroadcast => {
                if let Ok(h) = BlockHeader::from_canonical(&m.payload) {
                    self.nodes[m.recipient].add_header(h);
                }
            }
        }
    }

    fn on_wallet(&mut self, m: Message) {
        let Ok(msg) = serde_json::from_slice::<WalletMessage>(&m.payload) else { return };
        let node = &mut self.nodes[m.recipient];
        let addr = msg.wallet.address;
        node.directory.announce(msg.wallet);
        if let Some(old) = msg.retires {
            node.directory.retire(old, addr);
        }
    }

    fn on_transaction(&mut self, m: Message, tick: u64) {
        let r = m.recipient;
        if !self.nodes[r].is_full() {
            return;
        }
        let Ok(tx) = Transaction::from_canonical(&m.payload) else {
            self.nodes[r].reject("undecodable transaction");
            return;
        };
        let h = tx.hash();
        if self.nodes[r].seen.contains(&h) {
            return;
        }
        match self.nodes[r].directory.admit(&tx) {
            Ok(()) => {
                let node = &mut self.nodes[r];
                node.seen.insert(h);
                node.known.insert(h, tx);
                for peer in self.reachable_full() {
                    if peer != r && peer != m.sender {
                        self.send(MessageKind::TransactionSubmit, r, peer, m.payload.clone(), tick + self.latency());
                    }
                }
            }
            Err(e) => self.nodes[r].reject(e.to_string()),
        }
    }

    fn on_endorsement(&mut self, m: Message) {
        let Ok((hash, e)) = decode_endorsement(&m.payload) else { return };
        if let Some(a) = self
            .attempts
            .iter_mut()
            .find(|a| a.producer == m.recipient && !a.finalized && a.proposals.iter().any(|p| p.hash() == hash))
        {
            a.endorsements.push((hash, e));
        }
    }

    fn on_block(&mut self, m: Message, tick: u64) {
        let r = m.recipient;
        if !self.nodes[r].is_full() {
            return;
        }
        self.nodes[r].blocks_received += 1;
        let tamper = self.tampered_payloads.get(&hash256(&m.payload)).copied();
        let outcome = match Block::from_canonical(&m.payload) {
            Err(e) => {
                self.nodes[r].reject("undecodable block");
                format!("rejected: {e}")
            }
            Ok(block) => self.accept_block(r, block, tick),
        };
        if let Some(t) = tamper {
            let node = self.nodes[r].name.clone();
            self.tampers[t].receipts.push(TamperReceipt { node, outcome });
        }
    }

    /// Validates and stores a sealed block at node `r`; returns what happened.
    fn accept_block(&mut self, r: NodeId, block: Block, tick: u64) -> String {
        let hash = block.hash();
        let store = self.nodes[r].store();
        if let Some(held) = store.get(&hash) {
            if held.canonical_bytes() == block.canonical_bytes() {
                return "duplicate".into();
            }
        }
        let Some(parent) = store.get(&block.header.prev_hash).cloned() else {
            self.nodes[r].reject("block with unknown parent held");
            self.pending_blocks.entry(r).or_default().push(block);
            return "held: unknown parent".into();
        };
        let stakes = store.stakes_at(&parent.hash(), self.context.grants()).expect("parent located");
        let view = self.context.stake_view(block.header.timestamp, &stakes);
        if let Err(reason) = validate_block(&block, &parent, &view) {
            let node = &mut self.nodes[r];
            node.reject(format!("invalid block: {reason}"));
            node.invalid_blocks.push((hash, reason.to_string()));
            return format!("rejected: {reason}");
        }
        if self.nodes[r].store().get(&hash).is_some() {
            // Same header, different body or endorsements, and still valid.
            return "duplicate".into();
        }
        self.store_block(r, block, tick);
        self.retry_pending_blocks(r, tick);
        "accepted".into()
    }

    fn store_block(&mut self, r: NodeId, block: Block, tick: u64) {
        let node = &mut self.nodes[r];
        for tx in &block.transactions {
            let h = tx.hash();
            node.seen.insert(h);
            node.known.insert(h, tx.clone());
        }
        if let Insert::Stored { orphaned } = node.store_mut().insert(block) {
            let sealed = node.store().canonical_tx_hashes();
            for seg in orphaned {
                for (k, b) in seg.iter().enumerate() {
                    let height = self.nodes[r].store().locate(&b.header.prev_hash).map_or(0, |(_, i)| i + 1);
                    let returned = b.transactions.iter().filter(|t| !sealed.contains(&t.hash())).count();
                    self.orphans.push(OrphanEvent {
                        node: self.nodes[r].name.clone(),
                        tick,
                        block_hash: b.hash(),
                        height: if height == 0 { k + 1 } else { height },
                        returned_transactions: returned,
                    });
                }
            }
        }
    }

    fn retry_pending_blocks(&mut self, r: NodeId, tick: u64) {
        loop {
            let Some(pending) = self.pending_blocks.get_mut(&r) else { return };
            let store = self.nodes[r].store.as_ref().expect("full node");
            let Some(pos) = pending.iter().position(|b| store.get(&b.header.prev_hash).is_some()) else { return };
            let b = pending.remove(pos);
            self.accept_block(r, b, tick);
        }
    }

    // ---- onboarding ----

    fn live_delegate_nodes(&self) -> Vec<NodeId> {
        self.gov
            .delegates()
            .iter()
            .filter_map(|a| self.by_address.get(a).copied())
            .filter(|i| self.nodes[*i].is_live())
            .collect()
    }

    fn on_registration_request(&mut self, m: Message, tick: u64) {
        let Ok(msg) = serde_json::from_slice::<WalletMessage>(&m.payload) else { return };
        let v = m.recipient;
        let i = m.sender;
        if self.nodes[i].joined_at.is_some() {
            return;
        }
        // The verifier syncs the newcomer with its own view.
        let vdir = self.nodes[v].directory.clone();
        let vchain = self.nodes[v].store().canonical().to_vec();
        let vknown = self.nodes[v].known.clone();
        let wallet = msg.wallet.clone();
        {
            let node = &mut self.nodes[i];
            for w in vdir.wallets() {
                node.directory.announce(w.clone());
            }
            node.directory.announce(wallet.clone());
            node.joined_at = Some(tick);
            if node.is_full() {
                node.store = Some(ChainStore::from_chain(vchain));
                node.seen.extend(vknown.keys().copied());
                node.known = vknown;
            } else {
                for b in &vchain {
                    node.add_header(b.header.clone());
                }
                node.trusted = Some(v);
            }
        }
        self.nodes[v].directory.announce(wallet.clone());
        self.context.members.insert(wallet.address, wallet.member());
        if self.scenario.node_roster[i].delegate {
            let round = tick / self.t_c();
            if let Ok(true) = self.gov.register_delegate(wallet.address, &self.context.members, tick, round) {
                self.context.open_term(wallet.address, tick);
            }
        }
        let name = self.nodes[i].name.clone();
        if let Some(rec) = self.registrations.iter_mut().find(|r| r.node == name) {
            rec.completed_at = Some(tick);
        }
        for peer in self.reachable() {
            if peer != i && peer != v {
                self.send(MessageKind::RegistrationBroadcast, v, peer, m.payload.clone(), tick + self.latency());
            }
        }
        self.apply_votes();
        for early in self.buffered.remove(&i).unwrap_or_default() {
            self.dispatch(early, tick);
        }
    }

    fn retry_registration(&mut self, m: Message, tick: u64) {
        let candidates: Vec<NodeId> = self.live_delegate_nodes().into_iter().filter(|v| *v != m.recipient).collect();
        let Some(&v) = candidates.first() else { return };
        let name = self.nodes[m.sender].name.clone();
        let vname = self.nodes[v].name.clone();
        if let Some(rec) = self.registrations.iter_mut().find(|r| r.node == name) {
            rec.verifiers.push(vname);
        }
        self.send(MessageKind::RegistrationRequest, m.sender, v, m.payload, tick + self.latency());
    }

    fn apply_votes(&mut self) {
        for i in 0..self.nodes.len() {
            if self.votes_applied.contains(&i) || self.nodes[i].joined_at.is_none() {
                continue;
            }
            let entry = &self.scenario.node_roster[i];
            let voter = self.nodes[i].address.expect("joined nodes have keys");
            let target = entry.vote.as_ref().or(entry.delegate_to.as_ref());
            let Some(target) = target else {
                self.votes_applied.insert(i);
                continue;
            };
            let j = self.scenario.node_index(target).expect("validated");
            let Some(taddr) = self.nodes[j].address.filter(|_| self.nodes[j].joined_at.is_some()) else { continue };
            if entry.vote.is_some() {
                self.gov.votes.cast_vote(voter, taddr);
            } else {
                let _ = self.gov.votes.delegate(voter, taddr);
            }
            self.votes_applied.insert(i);
        }
    }

    fn scheduled_events(&mut self, tick: u64) {
        let l = self.latency();
        for i in 0..self.nodes.len() {
            let entry = self.scenario.node_roster[i].clone();
            if entry.join_tick == tick && tick > 0 {
                let delegates: BTreeSet<Address> =
                    self.live_delegate_nodes().iter().map(|v| self.nodes[*v].address.expect("keyed")).collect();
                let req = NodeRequest { node_id: entry.name.clone(), origin: entry.origin, kind: entry.kind, tokens: entry.tokens };
                match self.registry.add_node(&req, &delegates, &mut self.rng, tick) {
                    Ok(creds) => {
                        let v = self.by_address[&creds.record.verified_by.expect("verified")];
                        let msg = WalletMessage { node: Some(entry.name.clone()), wallet: creds.record.wallet.clone(), retires: None };
                        self.install_key(i, creds.keypair);
                        self.registrations.push(RegistrationRecord {
                            node: entry.name.clone(),
                            requested_at: tick,
                            verifiers: vec![self.nodes[v].name.clone()],
                            completed_at: None,
                        });
                        let payload = serde_json::to_vec(&msg).expect("wallet serializes");
                        self.send(MessageKind::RegistrationRequest, i, v, payload, tick + l);
                    }
                    Err(e) => self.registrations.push(RegistrationRecord {
                        node: format!("{} ({e})", entry.name),
                        requested_at: tick,
                        verifiers: vec![],
                        completed_at: None,
                    }),
                }
            }
            for s in entry.submissions.iter().filter(|s| s.tick == tick) {
                if !self.nodes[i].is_live() {
                    self.nodes[i].reject("submission before joining");
                    continue;
                }
                let key = self.nodes[i].key.as_ref().expect("live nodes have keys");
                let tx = Transaction::new_signed(key, entry.name.clone(), s.record_value.as_bytes().to_vec(), s.record_identification.clone(), tick);
                let target = self.scenario.node_index(&s.target).expect("validated");
                self.send(MessageKind::TransactionSubmit, i, target, tx.canonical_bytes(), tick + l);
            }
        }
        for u in 0..self.users.len() {
            let entry = self.scenario.user_roster[u].clone();
            if entry.register_tick == tick {
                self.register_user(u, entry.via.as_deref(), tick);
            }
            for s in entry.submissions.iter().filter(|s| s.tick == tick) {
                let user = &self.users[u];
                let Some(c) = &user.creds else { continue };
                let tx = submit_record(&c.record, &c.keypair, s.record_value.as_bytes().to_vec(), &s.record_identification, tick);
                let target = self.scenario.node_index(&s.target).expect("validated");
                let id = user.id;
                self.send(MessageKind::TransactionSubmit, id, target, tx.canonical_bytes(), tick + l);
            }
            if let Some(r) = entry.recovery.as_ref().filter(|r| r.tick == tick) {
                self.recover(u, &r.agent, r.identity_proven, tick);
            }
        }
        for a in self.scenario.adversary_actions.clone() {
            match &a.action {
                AdversaryAction::TamperBlock { actor, height, byte_index } if a.trigger_tick == tick => {
                    self.tamper(actor, *height, *byte_index, tick)
                }
                _ => {}
            }
        }
        self.flood_tick(tick);
    }

    fn register_user(&mut self, u: usize, via: Option<&str>, tick: u64) {
        let creds = self.registry.register_user(&mut self.rng, tick);
        self.scanner.add(&creds.keypair);
        let wallet = self.registry.wallet(&creds.record.address).expect("just registered").clone();
        self.context.members.insert(wallet.address, wallet.member());
        let msg = WalletMessage { node: None, wallet: wallet.clone(), retires: None };
        let payload = serde_json::to_vec(&msg).expect("wallet serializes");
        let sender = match via.and_then(|v| self.scenario.node_index(v)) {
            Some(v) if self.nodes[v].is_live() => {
                self.nodes[v].directory.announce(wallet);
                v
            }
            _ => self.users[u].id,
        };
        for peer in self.reachable() {
            if peer != sender {
                self.send(MessageKind::WalletBroadcast, sender, peer, payload.clone(), tick + self.latency());
            }
        }
        self.users[u].creds = Some(creds);
    }

    fn recover(&mut self, u: usize, agent: &str, identity_proven: bool, tick: u64) {
        let a = self.scenario.node_index(agent).expect("validated");
        let user = &self.users[u];
        let Some(creds) = &user.creds else { return };
        let user_id = creds.record.user_id.clone();
        let old = creds.record.address;
        let mut report = RecoveryReport {
            user: user.name.clone(),
            user_id: user_id.clone(),
            agent: agent.to_string(),
            tick,
            old_address: old,
            new_address: None,
            error: None,
            records_before: 0,
            prefix: vec![],
            old_query: None,
            new_query: None,
        };
        let node = &self.nodes[a];
        if !node.is_live() || node.store.is_none() {
            report.error = Some(RegistryError::UnauthorizedAgent.to_string());
            self.recoveries.push(report);
            return;
        }
        let chain = node.store().canonical().to_vec();
        report.prefix = chain.iter().map(Block::hash).collect();
        report.records_before = query_records(&chain, &old).records.len();
        let descriptor = self.registry.node(agent).expect("registered").clone();
        let key = node.key.clone().expect("keyed");
        match self.registry.recover_address(&user_id, old, &descriptor, &key, identity_proven, &chain, &mut self.rng, tick) {
            Err(e) => report.error = Some(e.to_string()),
            Ok(rec) => {
                self.scanner.add(&rec.user.keypair);
                report.new_address = Some(rec.wallet.address);
                self.context.members.insert(rec.wallet.address, rec.wallet.member());
                let msg = WalletMessage { node: None, wallet: rec.wallet.clone(), retires: Some(old) };
                let payload = serde_json::to_vec(&msg).expect("wallet serializes");
                self.nodes[a].directory.announce(rec.wallet.clone());
                self.nodes[a].directory.retire(old, rec.wallet.address);
                for peer in self.reachable() {
                    if peer != a {
                        self.send(MessageKind::WalletBroadcast, a, peer, payload.clone(), tick + self.latency());
                    }
                }
                for tx in &rec.transactions {
                    let h = tx.hash();
                    self.nodes[a].seen.insert(h);
                    self.nodes[a].known.insert(h, tx.clone());
                    for peer in self.reachable_full() {
                        if peer != a {
                            self.send(MessageKind::TransactionSubmit, a, peer, tx.canonical_bytes(), tick + self.latency());
                        }
                    }
                }
                self.users[u].creds = Some(rec.user);
            }
        }
        self.recoveries.push(report);
    }

    // ---- adversaries ----

    fn tamper(&mut self, actor: &str, height: usize, byte_index: usize, tick: u64) {
        let a = self.scenario.node_index(actor).expect("validated");
        let mut rec = TamperRecord {
            tick,
            actor: actor.to_string(),
            height,
            byte_index: None,
            original_hash: None,
            tampered_hash: None,
            actor_verdict: None,
            receipts: vec![],
            detail: String::new(),
        };
        let Some(original) = self.nodes[a].store.as_ref().and_then(|s| s.canonical().get(height)).cloned() else {
            rec.detail = format!("actor has no block at height {height}");
            self.tampers.push(rec);
            return;
        };
        let (bad, idx) = flip_first_decodable(&original, byte_index);
        self.nodes[a].store_mut().overwrite(height, bad.clone());
        rec.byte_index = Some(idx);
        rec.original_hash = Some(original.hash());
        rec.tampered_hash = Some(bad.hash());
        rec.actor_verdict = validate_blocks(self.nodes[a].store().canonical(), &self.context).ok();
        rec.detail = format!("flipped byte {idx} of block {height}");
        let payload = bad.canonical_bytes();
        self.tampered_payloads.insert(hash256(&payload), self.tampers.len());
        self.tampers.push(rec);
        for peer in self.reachable_full() {
            if peer != a {
                self.send(MessageKind::BlockBroadcast, a, peer, payload.clone(), tick + self.latency());
            }
        }
    }

    fn flood_tick(&mut self, tick: u64) {
        let targets: Vec<NodeId> = self.nodes.iter().filter(|n| n.is_full() && n.is_live()).map(|n| n.id).collect();
        let Some(f) = self.flood.as_mut() else { return };
        if tick < f.start || tick >= f.until || targets.is_empty() {
            return;
        }
        let mut out = Vec::new();
        for _ in 0..f.rate {
            let tx = Transaction::new_signed(&f.key, "flood", f.counter.to_be_bytes().to_vec(), "FLOOD", tick);
            f.hashes.insert(tx.hash());
            out.push((targets[(f.counter % targets.len() as u64) as usize], tx.canonical_bytes()));
            f.counter += 1;
        }
        let flooder = self.nodes.len();
        for (t, p) in out {
            self.send(MessageKind::TransactionSubmit, flooder, t, p, tick + self.latency());
        }
    }

    fn withholding(&self, i: NodeId, tick: u64) -> bool {
        self.withhold.iter().any(|(n, from, to)| *n == i && tick >= *from && tick < *to)
    }

    // ---- rounds ----

    fn honest_heads(&self) -> BTreeSet<Digest> {
        self.nodes.iter().filter(|n| n.is_honest_full()).map(|n| n.store().tip().hash()).collect()
    }

    fn begin_round(&mut self, r: u64, tick: u64) {
        self.gov.start_round(r);
        if self.honest_heads().len() > 1 {
            self.boundary_divergences.push(tick);
        }
        let reference = self.reference();
        let stakes = self.stakes_at_tip(reference);
        self.round = Some(RoundState { round: r, start: tick, sealed: false, audit: None });
        let panel = match self.gov.elect(r, round_seed(self.seed, r), &stakes) {
            Ok(p) => p.clone(),
            Err(_) => {
                self.elections.push(ElectionAudit {
                    round: r,
                    tick,
                    ranking: vec![],
                    panel: vec![],
                    witness: None,
                    producer: None,
                    outcome: RoundOutcome::NoQuorum,
                    block: None,
                    endorsement_weight: 0,
                    eligible_weight: 0,
                });
                return;
            }
        };
        self.elections.push(ElectionAudit {
            round: r,
            tick,
            ranking: panel.ranking.clone(),
            panel: panel.members.clone(),
            witness: Some(panel.active_witness),
            producer: None,
            outcome: RoundOutcome::Pending,
            block: None,
            endorsement_weight: 0,
            eligible_weight: 0,
        });
        if let Some(rs) = self.round.as_mut() {
            rs.audit = Some(self.elections.len() - 1);
        }
        if self.scenario.fork_rounds.contains(&r) {
            match self.induce_fork(r, tick) {
                Ok(()) => return,
                Err(e) => self.forks.push(ForkRecord {
                    round: r,
                    diverged_tick: tick,
                    blocks: vec![],
                    resolved_tick: None,
                    rounds_to_resolve: None,
                    orphaned: vec![],
                    error: Some(e.to_string()),
                }),
            }
        }
        let producer = self.by_address[&panel.active_witness];
        self.produce(producer, r, tick);
    }

    fn endorser_nodes(&self, producer: NodeId) -> Vec<NodeId> {
        self.gov
            .delegates()
            .iter()
            .filter_map(|a| self.by_address.get(a).copied())
            .filter(|i| *i != producer)
            .collect()
    }

    fn produce(&mut self, p: NodeId, round: u64, tick: u64) {
        let address = self.nodes[p].address.expect("delegates have keys");
        let mut attempt = Attempt {
            round,
            producer: p,
            address,
            tick,
            proposals: vec![],
            endorsements: vec![],
            evidence: vec![],
            forged: None,
            checked: false,
            finalized: false,
        };
        if self.nodes[p].is_live() {
            let (proposals, forged) = self.build_proposals(p, round, tick);
            attempt.proposals = proposals;
            attempt.forged = forged;
        }
        if let Some(a) = self.current_audit_mut() {
            a.producer = Some(address);
        }
        for prop in attempt.proposals.clone() {
            let payload = prop.canonical_bytes();
            for e in self.endorser_nodes(p) {
                self.send(MessageKind::BlockProposal, p, e, payload.clone(), tick + self.latency());
            }
        }
        self.attempts.push(attempt);
    }

    fn current_audit_mut(&mut self) -> Option<&mut ElectionAudit> {
        let idx = self.round.as_ref()?.audit?;
        self.elections.get_mut(idx)
    }

    fn build_proposals(&mut self, p: NodeId, round: u64, tick: u64) -> (Vec<Block>, Option<usize>) {
        let node = &self.nodes[p];
        let key = node.key.clone().expect("keyed");
        let parent = node.store().tip().clone();
        let mempool = node.mempool();
        let honest = || match self.gov.panel() {
            Some(panel) => produce_block(panel, &key, &mempool, &parent, tick).unwrap_or_else(|_| assemble_block(&key, &mempool, &parent, tick)),
            None => assemble_block(&key, &mempool, &parent, tick),
        };

        let mut style = None;
        if self.coalition.leader == Some(p) && !self.coalition.forged && tick >= self.coalition.trigger {
            self.coalition.forged = true;
            style = Some(ForgeStyle::UnadmittedRecord);
        } else if let Some(f) = self.forges.iter_mut().find(|f| f.0 == p && !f.3 && tick >= f.2) {
            f.3 = true;
            style = Some(f.1);
        }
        let Some(style) = style else { return (vec![honest()], None) };

        let coalition_names: Vec<String> = self.coalition.members.iter().map(|m| self.nodes[*m].name.clone()).collect();
        let mut record = ForgedProposal {
            round,
            tick,
            actor: self.nodes[p].name.clone(),
            style,
            block: None,
            coalition: if self.coalition.leader == Some(p) { coalition_names } else { vec![] },
            coalition_stake: 0,
            endorsement_weight: 0,
            eligible_weight: 0,
            sealed: false,
            honest_adopters: vec![],
            detail: String::new(),
        };
        let proposals = match style {
            ForgeStyle::UnadmittedRecord => {
                // Without a co-signer the leader signs the record itself.
                let signer = self.coalition.members.iter().copied().find(|m| self.nodes[*m].key.is_some() && *m != p).unwrap_or(p);
                let victim =
                    self.registry.users().next().map(|u| u.user_id.clone()).unwrap_or_else(|| self.nodes[p].name.clone());
                let skey = self.nodes[signer].key.as_ref().expect("keyed");
                let forged = Transaction::new_signed(skey, victim.clone(), b"forged record".to_vec(), "FORGED", tick);
                record.detail = format!("record signed by {} under user id {victim}", self.nodes[signer].name);
                let mut txs = assemble_block(&key, &mempool, &parent, tick).transactions;
                txs.push(forged);
                vec![seal_header(&key, txs, parent.hash(), tick)]
            }
            ForgeStyle::SelfTransaction => {
                let own = Transaction::new_signed(&key, self.nodes[p].name.clone(), b"self record".to_vec(), "SELF", tick);
                let mut block = assemble_block(&key, &mempool, &parent, tick);
                let mut txs = block.transactions.clone();
                txs.push(own);
                block = seal_header(&key, txs, parent.hash(), tick);
                record.detail = "witness included its own record".into();
                vec![block]
            }
            ForgeStyle::DoubleProposal => {
                record.detail = "two proposals for one round".into();
                vec![honest(), assemble_block(&key, &mempool, &parent, tick - 1)]
            }
            ForgeStyle::BadMerkle => {
                let mut block = honest();
                block.header.merkle_root = hash256(b"not the merkle root");
                block.witness_signature = sign(&key, block.hash().as_bytes());
                record.detail = "header commits to a wrong merkle root".into();
                vec![block]
            }
        };
        record.block = proposals.first().map(Block::hash);
        if self.coalition.leader == Some(p) {
            let stakes = self.stakes_at_tip(p);
            record.coalition_stake = self.coalition.members.iter().filter_map(|m| self.nodes[*m].address).map(|a| stakes.get(&a)).sum();
        }
        self.forged.push(record);
        (proposals, Some(self.forged.len() - 1))
    }

    /// Endorsers look at all proposals delivered this tick before signing,
    /// so a witness equivocating within one tick gets no signatures.
    fn review_proposals(&mut self, tick: u64) {
        for (e, props) in std::mem::take(&mut self.inbox) {
            let mut by_witness: BTreeMap<Address, Vec<Block>> = BTreeMap::new();
            for b in props {
                let v = by_witness.entry(b.witness_address).or_default();
                if !v.iter().any(|x| x.hash() == b.hash()) {
                    v.push(b);
                }
            }
            for (witness, blocks) in by_witness {
                self.review(e, witness, blocks, tick);
            }
        }
    }

    fn review(&mut self, e: NodeId, witness: Address, blocks: Vec<Block>, tick: u64) {
        let Some(ai) = self.attempts.iter().rposition(|a| a.address == witness && !a.finalized) else {
            self.nodes[e].reject("proposal outside any slot");
            return;
        };
        let round = self.attempts[ai].round;
        let p = self.attempts[ai].producer;
        let endorser = self.nodes[e].key.clone().expect("keyed");
        let blind = self.coalition.leader == Some(p) && self.coalition.members.contains(&e);
        if self.withholding(e, tick) && !blind {
            return;
        }
        let seen_key = (e, witness, round);
        let first_seen = self.seen_proposals.get(&seen_key).copied();
        if !blind && (blocks.len() > 1 || first_seen.is_some_and(|h| h != blocks[0].hash())) {
            self.nodes[e].reject("double proposal");
            self.attempts[ai].evidence.push(Misbehavior::DoubleProposal);
            return;
        }
        self.seen_proposals.insert(seen_key, blocks[0].hash());
        for b in blocks {
            let verdict = if blind {
                Ok(Endorsement { endorser: endorser.address(), signature: sign(&endorser, b.hash().as_bytes()) })
            } else {
                self.honest_review(e, &endorser, &b)
            };
            match verdict {
                Ok(en) => {
                    let payload = encode_endorsement(&b.hash(), &en);
                    self.send(MessageKind::BlockEndorsement, e, p, payload, tick + self.latency());
                }
                Err((reason, evidence)) => {
                    self.nodes[e].reject(format!("proposal refused: {reason}"));
                    if let Some(ev) = evidence {
                        self.attempts[ai].evidence.push(ev);
                    }
                }
            }
        }
    }

    fn honest_review(&self, e: NodeId, endorser: &KeyPair, b: &Block) -> Result<Endorsement, (String, Option<Misbehavior>)> {
        let node = &self.nodes[e];
        let store = node.store();
        let Some(prefix) = store.prefix(&b.header.prev_hash) else {
            return Err(("unknown parent".into(), None));
        };
        let parent = prefix.last().expect("non-empty");
        let stakes = StakeTable::replay(self.context.grants(), &prefix[1..]);
        let delegates = self.context.eligible_delegates(b.header.timestamp, &stakes);
        let en = endorse_block(endorser, b, parent, &self.context, &delegates).map_err(|r| (r.to_string(), evidence_for(&r)))?;
        let sealed: BTreeSet<Digest> = prefix.iter().skip(1).flat_map(|blk| blk.transactions.iter().map(Transaction::hash)).collect();
        for (i, tx) in b.transactions.iter().enumerate() {
            if sealed.contains(&tx.hash()) {
                let reason = format!("transaction {i} already sealed");
                return Err((reason.clone(), Some(Misbehavior::InvalidProposal { reason })));
            }
            match node.directory.admit(tx) {
                Ok(()) | Err(AdmissionError::Retired) => {}
                Err(AdmissionError::Unregistered) => return Err((format!("transaction {i} from an unknown wallet"), None)),
                Err(err) => {
                    let reason = format!("transaction {i} not admissible: {err}");
                    return Err((reason.clone(), Some(Misbehavior::InvalidProposal { reason })));
                }
            }
        }
        Ok(en)
    }

    fn progress_attempts(&mut self, tick: u64) {
        let l = self.latency();
        for i in 0..self.attempts.len() {
            if !self.attempts[i].checked && tick >= self.attempts[i].tick + l {
                self.attempts[i].checked = true;
                self.slot_check(i, tick);
            }
            if !self.attempts[i].finalized && tick >= self.attempts[i].tick + 2 * l {
                self.attempts[i].finalized = true;
                self.finalize(i, tick);
            }
        }
    }

    fn slot_check(&mut self, i: usize, tick: u64) {
        let a = &self.attempts[i];
        let evidence = if a.proposals.is_empty() { Some(Misbehavior::MissedSlot) } else { a.evidence.first().cloned() };
        let Some(evidence) = evidence else { return };
        let (addr, round) = (a.address, a.round);
        if !self.gov.is_delegate(&addr) {
            return;
        }
        let promoted = match self.gov.handle_misbehavior(addr, evidence, round, tick) {
            Ok(rec) => rec.promoted_witness,
            Err(_) => return,
        };
        self.context.close_term(&addr, tick);
        let Some(rs) = &self.round else { return };
        if rs.round != round || rs.sealed {
            return;
        }
        if tick + 3 * self.latency() > rs.start + self.t_c() {
            if let Some(a) = self.current_audit_mut() {
                a.outcome = RoundOutcome::Missed;
            }
            return;
        }
        match promoted.and_then(|w| self.by_address.get(&w).copied()) {
            Some(next) => self.produce(next, round, tick),
            None => {
                if let Some(a) = self.current_audit_mut() {
                    a.outcome = RoundOutcome::Missed;
                }
            }
        }
    }

    fn finalize(&mut self, i: usize, tick: u64) {
        let a = &self.attempts[i];
        let p = a.producer;
        if !self.nodes[p].is_live() || a.proposals.is_empty() {
            return;
        }
        let proposal = a.proposals[0].clone();
        let hash = proposal.hash();
        let ends: Vec<Endorsement> = a.endorsements.iter().filter(|(h, _)| *h == hash).map(|(_, e)| e.clone()).collect();
        let (round, forged) = (a.round, a.forged);
        let Some(stakes) = self.nodes[p].store().stakes_at(&proposal.header.prev_hash, self.context.grants()) else {
            return;
        };
        let view = self.context.stake_view(proposal.header.timestamp, &stakes);
        let eligible: u64 = view.delegates.iter().filter(|(a, _)| **a != proposal.witness_address).map(|(_, w)| w).sum();
        let outcome = finalize_block(&proposal, &ends, &view);
        let achieved = match &outcome {
            Finalization::Sealed(b) => b.endorsements.iter().filter_map(|e| view.delegates.get(&e.endorser)).sum(),
            Finalization::Pending { achieved, .. } => *achieved,
        };
        if let Some(f) = forged {
            self.forged[f].endorsement_weight = achieved;
            self.forged[f].eligible_weight = eligible;
            self.forged[f].sealed = outcome.is_sealed();
        }
        let Finalization::Sealed(block) = outcome else {
            return;
        };
        self.store_block(p, block.clone(), tick);
        let payload = block.canonical_bytes();
        let header = block.header.canonical_bytes();
        for peer in self.reachable() {
            if peer == p {
                continue;
            }
            if self.nodes[peer].is_full() {
                self.send(MessageKind::BlockBroadcast, p, peer, payload.clone(), tick + self.latency());
            } else {
                self.send(MessageKind::HeaderBroadcast, p, peer, header.clone(), tick + self.latency());
            }
        }
        let current = self.round.as_ref().is_some_and(|r| r.round == round);
        if current {
            if let Some(rs) = self.round.as_mut() {
                rs.sealed = true;
            }
            if let Some(audit) = self.current_audit_mut() {
                if audit.outcome != RoundOutcome::Sealed {
                    audit.outcome = RoundOutcome::Sealed;
                    audit.producer = Some(block.witness_address);
                    audit.block = Some(block.hash());
                    audit.endorsement_weight = achieved;
                    audit.eligible_weight = eligible;
                }
            }
        }
    }

    /// Two delegates seal competing blocks on the same parent (or on each
    /// tip of an existing tie); half the network sees each first.
    fn induce_fork(&mut self, round: u64, tick: u64) -> Result<(), SimError> {
        let impossible = |reason: &str| SimError::ForkImpossible { round, reason: reason.to_string() };
        let panel = self.gov.panel().cloned().ok_or_else(|| impossible("no panel"))?;
        let w = self.by_address[&panel.active_witness];
        if !self.nodes[w].is_live() {
            return Err(impossible("active witness is down"));
        }
        let others = panel
            .backup_order
            .iter()
            .chain(self.gov.delegates().iter())
            .filter_map(|a| self.by_address.get(a).copied())
            .find(|i| *i != w && self.nodes[*i].is_live());
        let b = others.ok_or_else(|| impossible("needs two live delegates"))?;

        let reference = self.reference();
        let store = self.nodes[reference].store();
        let tips: Vec<Block> = store.branches().iter().map(|br| br.last().expect("non-empty").clone()).collect();
        let tip_a = store.tip().clone();
        let tip_b = tips.iter().find(|t| t.hash() != tip_a.hash()).cloned().unwrap_or_else(|| tip_a.clone());

        let mempool = self.nodes[w].mempool();
        let even: Vec<Transaction> = mempool.iter().step_by(2).cloned().collect();
        let odd: Vec<Transaction> = mempool.iter().skip(1).step_by(2).cloned().collect();
        let key_a = self.nodes[w].key.clone().expect("keyed");
        let key_b = self.nodes[b].key.clone().expect("keyed");
        let block_a = self.seal_with_honest_endorsements(assemble_block(&key_a, &even, &tip_a, tick)).ok_or_else(|| impossible("block a lacks endorsement"))?;
        let block_b = self.seal_with_honest_endorsements(assemble_block(&key_b, &odd, &tip_b, tick)).ok_or_else(|| impossible("block b lacks endorsement"))?;

        for (owner, blk) in [(w, &block_a), (b, &block_b)] {
            if self.nodes[owner].store().get(&blk.header.prev_hash).is_some() {
                self.store_block(owner, blk.clone(), tick);
            }
        }
        let l = self.latency();
        let (pa, pb) = (block_a.canonical_bytes(), block_b.canonical_bytes());
        for peer in self.reachable() {
            if self.nodes[peer].is_full() {
                let (first, second) = if peer % 2 == 0 { (&pa, &pb) } else { (&pb, &pa) };
                if peer != w && peer != b {
                    self.send(MessageKind::BlockBroadcast, w, peer, first.clone(), tick + l);
                    self.send(MessageKind::BlockBroadcast, b, peer, second.clone(), tick + l + 1);
                } else {
                    let other = if peer == w { &pb } else { &pa };
                    self.send(MessageKind::BlockBroadcast, if peer == w { b } else { w }, peer, other.clone(), tick + l);
                }
            } else {
                self.send(MessageKind::HeaderBroadcast, w, peer, block_a.header.canonical_bytes(), tick + l);
                self.send(MessageKind::HeaderBroadcast, b, peer, block_b.header.canonical_bytes(), tick + l + 1);
            }
        }
        if let Some(rs) = self.round.as_mut() {
            rs.sealed = true;
        }
        let weight: u64 = {
            let stakes = self.stakes_at_tip(reference);
            let view = self.context.stake_view(tick, &stakes);
            block_a.endorsements.iter().filter_map(|e| view.delegates.get(&e.endorser)).sum()
        };
        if let Some(audit) = self.current_audit_mut() {
            audit.outcome = RoundOutcome::Fork;
            audit.producer = Some(block_a.witness_address);
            audit.block = Some(block_a.hash());
            audit.endorsement_weight = weight;
        }
        self.forks.push(ForkRecord {
            round,
            diverged_tick: tick,
            blocks: vec![block_a.hash(), block_b.hash()],
            resolved_tick: None,
            rounds_to_resolve: None,
            orphaned: vec![],
            error: None,
        });
        Ok(())
    }

    /// Collects endorsements from every live honest delegate at once.
    fn seal_with_honest_endorsements(&self, proposal: Block) -> Option<Block> {
        let mut ends = Vec::new();
        for e in self.endorser_nodes(self.by_address[&proposal.witness_address]) {
            let n = &self.nodes[e];
            if !n.is_live() || n.adversarial {
                continue;
            }
            if let Ok(en) = self.honest_review(e, n.key.as_ref().expect("keyed"), &proposal) {
                ends.push(en);
            }
        }
        let reference = self.reference();
        let stakes = self.nodes[reference].store().stakes_at(&proposal.header.prev_hash, self.context.grants())?;
        let view = self.context.stake_view(proposal.header.timestamp, &stakes);
        match finalize_block(&proposal, &ends, &view) {
            Finalization::Sealed(b) => Some(b),
            Finalization::Pending { .. } => None,
        }
    }

    fn track_forks(&mut self, tick: u64) {
        if self.forks.iter().all(|f| f.resolved_tick.is_some() || f.error.is_some()) {
            return;
        }
        let honest: Vec<&SimNode> = self.nodes.iter().filter(|n| n.is_honest_full()).collect();
        let single = honest.iter().all(|n| n.store().branches().len() == 1);
        let heads: BTreeSet<Digest> = honest.iter().map(|n| n.store().tip().hash()).collect();
        if !single || heads.len() != 1 {
            return;
        }
        let canonical: BTreeSet<Digest> = honest[0].store().canonical().iter().map(Block::hash).collect();
        let t_c = self.t_c();
        for f in self.forks.iter_mut().filter(|f| f.resolved_tick.is_none() && f.error.is_none()) {
            if f.blocks.iter().any(|b| canonical.contains(b)) {
                f.resolved_tick = Some(tick);
                f.rounds_to_resolve = Some((tick - f.diverged_tick) / t_c);
                f.orphaned = f.blocks.iter().filter(|b| !canonical.contains(b)).copied().collect();
            }
        }
    }

    // ---- report ----

    fn finish(self) -> SimulationOutcome {
        let reference = self.reference();
        let chain = self.nodes[reference].store().canonical().to_vec();
        let genesis_header = chain[0].header.clone();

        let mut forged = self.forged.clone();
        for f in &mut forged {
            if let Some(h) = f.block {
                f.honest_adopters = self
                    .nodes
                    .iter()
                    .filter(|n| n.is_honest_full() && n.store().canonical().iter().any(|b| b.hash() == h))
                    .map(|n| n.name.clone())
                    .collect();
            }
        }

        let mut recoveries = self.recoveries.clone();
        for r in &mut recoveries {
            if let Some(new) = r.new_address {
                r.old_query = Some(query_records(&chain, &r.old_address));
                r.new_query = Some(query_records(&chain, &new));
            }
        }

        let lightweight = self
            .nodes
            .iter()
            .filter(|n| !n.is_full() && n.is_live())
            .map(|n| {
                let trusted = n.trusted.filter(|t| self.nodes[*t].is_honest_full()).unwrap_or(reference);
                let addr = n.address.expect("joined");
                let proofs = serve_proofs(self.nodes[trusted].store().canonical(), |tx| {
                    tx.submitter_address == addr || tx.credited_address() == Some(addr)
                });
                let stream = best_header_chain(&genesis_header, &n.headers);
                LightReport {
                    node: n.name.clone(),
                    trusted: Some(self.nodes[trusted].name.clone()),
                    headers_received: n.headers.len(),
                    blocks_received: n.blocks_received,
                    expected_transactions: proofs.len(),
                    outcome: lightweight_sync(&genesis_header, &[stream], &proofs),
                }
            })
            .collect();

        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let (head, height, branches, stake, mempool) = match &n.store {
                    Some(s) if n.is_full() => {
                        let stakes = StakeTable::replay(self.context.grants(), &s.canonical()[1..]);
                        (
                            Some(s.tip().hash()),
                            s.canonical().len() - 1,
                            s.branches().len(),
                            n.address.map_or(0, |a| stakes.get(&a)),
                            n.mempool().len(),
                        )
                    }
                    _ => {
                        let best = best_header_chain(&genesis_header, &n.headers);
                        let stake = n.address.map_or(0, |a| StakeTable::replay(self.context.grants(), &chain[1..]).get(&a));
                        (best.last().map(crate::ledger::block_hash), best.len() - 1, 1, stake, 0)
                    }
                };
                NodeReport {
                    name: n.name.clone(),
                    origin: n.origin,
                    kind: n.kind,
                    address: n.address,
                    joined_at: n.joined_at,
                    crashed_at: n.crashed_at,
                    adversarial: n.adversarial,
                    delegate: self.scenario.node_roster[n.id].delegate,
                    head: if n.joined_at.is_some() { head } else { None },
                    height,
                    branches,
                    stake,
                    mempool,
                    directory_size: n.directory.len(),
                    blocks_received: n.blocks_received,
                    headers_received: n.headers.len(),
                    rejections: n.rejections.clone(),
                }
            })
            .collect();

        let flood = match &self.flood {
            None => FloodReport::default(),
            Some(f) => FloodReport {
                sent: f.counter,
                rejected: self
                    .nodes
                    .iter()
                    .map(|n| n.rejections.get(&AdmissionError::Unregistered.to_string()).copied().unwrap_or(0))
                    .sum(),
                admitted: self.nodes.iter().map(|n| n.known.keys().filter(|h| f.hashes.contains(h)).count() as u64).sum(),
            },
        };

        let header = ReportHeader {
            name: self.scenario.name.clone(),
            scenario_hash: self.scenario.digest(),
            seed: self.seed,
            seed_override: self.seed_override,
            run_ticks: self.scenario.run_ticks,
            final_tick: self.clock,
            latency: self.scenario.latency,
            round_config: self.scenario.round_config.clone(),
            defaults: Defaults {
                t_c: DEFAULT_T_C,
                finality_fraction: default_finality_fraction(),
                latency: 1,
                initial_tokens_full: GrantPolicy::default().initial_tokens_full,
                initial_tokens_light: GrantPolicy::default().initial_tokens_light,
                vote_reassignment: ReassignmentPolicy::NewNodeFirst,
                user_id_width: USER_ID_WIDTH,
            },
        };

        let mut report = SimulationReport {
            header,
            invariants: vec![],
            nodes,
            sealed_blocks: chain.len() - 1,
            final_head: chain.last().expect("non-empty").hash(),
            elections: self.elections.clone(),
            evictions: self.gov.evictions().to_vec(),
            reassignments: self.gov.reassignments().to_vec(),
            orphans: self.orphans.clone(),
            forks: self.forks.clone(),
            forged,
            tampers: self.tampers.clone(),
            recoveries,
            lightweight,
            flood,
            containment: ContainmentReport::default(),
            registrations: self.registrations.clone(),
            boundary_divergences: self.boundary_divergences.clone(),
            messages: self.queue.sent_counts().clone(),
        };
        let dump = ChainDump { context: self.context.clone(), blocks: chain };
        let mut scanner = self.scanner.clone();
        scanner.scan_text("chain dump", &dump.to_text());
        scanner.scan_text("report", &serde_json::to_string(&report).expect("report serializes"));
        report.containment = scanner.report();
        report.invariants = evaluate(&self, &report, &dump);
        let report_hash = report.digest();
        SimulationOutcome { report, report_hash, chain: dump }
    }

    pub(crate) fn nodes(&self) -> &[SimNode] {
        &self.nodes
    }

    pub(crate) fn registry(&self) -> &Registry {
        &self.registry
    }

    pub(crate) fn flood_hashes(&self) -> BTreeSet<Digest> {
        self.flood.as_ref().map(|f| f.hashes.clone()).unwrap_or_default()
    }
}

/// Runs a scenario with its own seed.
pub fn run(scenario: &Scenario) -> Result<SimulationOutcome, SimError> {
    run_with_seed(scenario, None)
}

pub fn run_with_seed(scenario: &Scenario, seed_override: Option<u64>) -> Result<SimulationOutcome, SimError> {
    Ok(Simulation::new(scenario.clone(), seed_override)?.run())
}
