//! Node onboarding, user registration, record admission, key-loss recovery
//! and address queries.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{verify, Address, KeyPair, PublicKey};
use crate::ledger::{Block, KeyDirectory, Member, MemberRole, RecordKind, Transaction, RETIRE_TAG, TRANSFER_TAG};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("network not bootstrapped")]
    NotBootstrapped,
    #[error("{origin:?} nodes cannot run as {kind:?} nodes")]
    InvalidNodeKind { origin: NodeOrigin, kind: NodeKind },
    #[error("node id {0:?} already in use")]
    DuplicateNode(String),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("unauthorized recovery agent")]
    UnauthorizedAgent,
    #[error("identity not proven for {0:?}")]
    IdentityNotProven(String),
    #[error("address {0} does not belong to {1:?}")]
    AddressMismatch(Address, String),
}

/// Why a transaction was refused entry to a mempool.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum AdmissionError {
    #[error("unregistered submitter")]
    Unregistered,
    #[error("authentication failed")]
    AuthenticationFailed,
    #[error("user id does not match the submitter")]
    UserIdMismatch,
    #[error("submitter address is retired")]
    Retired,
    #[error("reserved record tag")]
    ReservedTag,
    #[error("unauthorized recovery agent")]
    UnauthorizedAgent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOrigin {
    Government,
    Citizen,
    Business,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Full,
    Lightweight,
}

impl NodeOrigin {
    pub fn role(self) -> MemberRole {
        match self {
            NodeOrigin::Government => MemberRole::Department,
            NodeOrigin::Citizen => MemberRole::Citizen,
            NodeOrigin::Business => MemberRole::Business,
        }
    }

    /// Departments run full nodes, citizens lightweight ones, and
    /// businesses may pick either.
    pub fn allows(self, kind: NodeKind) -> bool {
        matches!(
            (self, kind),
            (NodeOrigin::Government, NodeKind::Full) | (NodeOrigin::Citizen, NodeKind::Lightweight) | (NodeOrigin::Business, _)
        )
    }
}

/// Grants credited at onboarding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantPolicy {
    pub initial_tokens_full: u64,
    pub initial_tokens_light: u64,
}

impl Default for GrantPolicy {
    fn default() -> Self {
        GrantPolicy { initial_tokens_full: 10, initial_tokens_light: 1 }
    }
}

impl GrantPolicy {
    pub fn grant_for(&self, kind: NodeKind) -> u64 {
        match kind {
            NodeKind::Full => self.initial_tokens_full,
            NodeKind::Lightweight => self.initial_tokens_light,
        }
    }
}

/// Public half of a wallet as broadcast to every peer. Carries no private
/// key material by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalletAnnouncement {
    pub address: Address,
    pub public_key: PublicKey,
    pub role: MemberRole,
    pub full_node: bool,
    pub grant: u64,
    pub joined_at: u64,
    /// Identifier records from this address must carry: the uID for users,
    /// the node id for nodes.
    pub owner_id: String,
}

impl WalletAnnouncement {
    pub fn member(&self) -> Member {
        Member {
            public_key: self.public_key,
            role: self.role,
            full_node: self.full_node,
            grant: self.grant,
            joined_at: self.joined_at,
        }
    }
}

/// One peer's view of registered wallets and retired addresses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Directory {
    wallets: BTreeMap<Address, WalletAnnouncement>,
    retired: BTreeMap<Address, Address>,
}

impl KeyDirectory for Directory {
    fn public_key(&self, address: &Address) -> Option<PublicKey> {
        self.wallets.get(address).map(|w| w.public_key)
    }
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` if the address was already known.
    pub fn announce(&mut self, wallet: WalletAnnouncement) -> bool {
        if self.wallets.contains_key(&wallet.address) {
            return false;
        }
        self.wallets.insert(wallet.address, wallet);
        true
    }

    pub fn retire(&mut self, old: Address, new: Address) {
        self.retired.insert(old, new);
    }

    pub fn get(&self, address: &Address) -> Option<&WalletAnnouncement> {
        self.wallets.get(address)
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.wallets.contains_key(address)
    }

    pub fn retired_to(&self, address: &Address) -> Option<Address> {
        self.retired.get(address).copied()
    }

    pub fn len(&self) -> usize {
        self.wallets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wallets.is_empty()
    }

    pub fn wallets(&self) -> impl Iterator<Item = &WalletAnnouncement> {
        self.wallets.values()
    }

    pub fn members(&self) -> BTreeMap<Address, Member> {
        self.wallets.iter().map(|(a, w)| (*a, w.member())).collect()
    }

    /// Mempool admission: the submitter must be registered and not
    /// retired, the signature must verify, `user_id` must be the one bound
    /// to the submitter, and recovery records may only come from department
    /// nodes on behalf of the affected user.
    pub fn admit(&self, tx: &Transaction) -> Result<(), AdmissionError> {
        let wallet = self.wallets.get(&tx.submitter_address).ok_or(AdmissionError::Unregistered)?;
        if !verify(&wallet.public_key, &tx.message(), &tx.submitter_signature) {
            return Err(AdmissionError::AuthenticationFailed);
        }
        if self.retired.contains_key(&tx.submitter_address) {
            return Err(AdmissionError::Retired);
        }
        match tx.kind() {
            RecordKind::Genesis | RecordKind::Malformed => Err(AdmissionError::ReservedTag),
            RecordKind::Ordinary if tx.user_id != wallet.owner_id => Err(AdmissionError::UserIdMismatch),
            RecordKind::Ordinary => Ok(()),
            RecordKind::Transfer { old, .. } | RecordKind::Retirement { old, .. } => {
                if wallet.role != MemberRole::Department || !wallet.full_node {
                    return Err(AdmissionError::UnauthorizedAgent);
                }
                match self.wallets.get(&old) {
                    Some(w) if w.owner_id == tx.user_id => Ok(()),
                    _ => Err(AdmissionError::UserIdMismatch),
                }
            }
        }
    }
}

/// Local-only key store; deliberately not serializable.
#[derive(Debug, Default)]
pub struct KeyVault {
    keys: BTreeMap<Address, KeyPair>,
}

impl KeyVault {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn store(&mut self, keypair: KeyPair) -> Address {
        let a = keypair.address();
        self.keys.insert(a, keypair);
        a
    }

    pub fn get(&self, address: &Address) -> Option<&KeyPair> {
        self.keys.get(address)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDescriptor {
    pub node_id: String,
    pub origin: NodeOrigin,
    pub kind: NodeKind,
    pub is_department: bool,
    pub wallet: WalletAnnouncement,
    /// Delegate that verified and broadcast the registration; lightweight
    /// nodes use it as their trusted full node. `None` for bootstrap nodes.
    pub verified_by: Option<Address>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub address: Address,
    pub registered_at: u64,
}

/// A freshly created identity: the public record plus the key the owner
/// keeps to itself.
#[derive(Debug)]
pub struct Credentials<T> {
    pub record: T,
    pub keypair: KeyPair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRequest {
    pub node_id: String,
    pub origin: NodeOrigin,
    pub kind: NodeKind,
    /// Overrides the policy grant.
    pub tokens: Option<u64>,
}

/// Authoritative registration state: who is onboarded, which uIDs exist.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    pub grants: GrantPolicy,
    pub directory: Directory,
    nodes: BTreeMap<String, NodeDescriptor>,
    users: BTreeMap<String, UserRecord>,
    next_uid: u64,
}

/// Width of the decimal uID string.
pub const USER_ID_WIDTH: usize = 8;

impl Registry {
    pub fn new(grants: GrantPolicy) -> Self {
        Registry { grants, ..Default::default() }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeDescriptor> {
        self.nodes.values()
    }

    pub fn node(&self, node_id: &str) -> Option<&NodeDescriptor> {
        self.nodes.get(node_id)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    pub fn user(&self, user_id: &str) -> Option<&UserRecord> {
        self.users.get(user_id)
    }

    fn make_node<R: RngCore>(
        &mut self,
        request: &NodeRequest,
        verified_by: Option<Address>,
        rng: &mut R,
        tick: u64,
    ) -> Result<Credentials<NodeDescriptor>, RegistryError> {
        if !request.origin.allows(request.kind) {
            return Err(RegistryError::InvalidNodeKind { origin: request.origin, kind: request.kind });
        }
        if self.nodes.contains_key(&request.node_id) {
            return Err(RegistryError::DuplicateNode(request.node_id.clone()));
        }
        let keypair = KeyPair::from_rng(rng);
        let wallet = WalletAnnouncement {
            address: keypair.address(),
            public_key: keypair.public_key(),
            role: request.origin.role(),
            full_node: request.kind == NodeKind::Full,
            grant: request.tokens.unwrap_or_else(|| self.grants.grant_for(request.kind)),
            joined_at: tick,
            owner_id: request.node_id.clone(),
        };
        let descriptor = NodeDescriptor {
            node_id: request.node_id.clone(),
            origin: request.origin,
            kind: request.kind,
            is_department: request.origin == NodeOrigin::Government,
            wallet: wallet.clone(),
            verified_by,
        };
        self.directory.announce(wallet);
        self.nodes.insert(descriptor.node_id.clone(), descriptor.clone());
        Ok(Credentials { record: descriptor, keypair })
    }

    /// Founding department nodes present in the network before the first
    /// tick; nobody verifies them.
    pub fn bootstrap_node<R: RngCore>(
        &mut self,
        request: &NodeRequest,
        rng: &mut R,
    ) -> Result<Credentials<NodeDescriptor>, RegistryError> {
        if request.origin != NodeOrigin::Government {
            return Err(RegistryError::NotBootstrapped);
        }
        self.make_node(request, None, rng, 0)
    }

    /// Onboards a node: generates its keys and wallet, credits its grant and
    /// has a seeded-uniformly chosen delegate verify the registration.
    pub fn add_node<R: RngCore>(
        &mut self,
        request: &NodeRequest,
        delegates: &BTreeSet<Address>,
        rng: &mut R,
        tick: u64,
    ) -> Result<Credentials<NodeDescriptor>, RegistryError> {
        if delegates.is_empty() {
            return Err(RegistryError::NotBootstrapped);
        }
        let verifier = *delegates.iter().nth(rng.gen_range(0..delegates.len())).expect("index in range");
        self.make_node(request, Some(verifier), rng, tick)
    }

    fn issue_user_id(&mut self) -> String {
        loop {
            self.next_uid += 1;
            let id = format!("{:0width$}", self.next_uid, width = USER_ID_WIDTH);
            if !self.users.contains_key(&id) {
                return id;
            }
        }
    }

    /// Creates a user identity and wallet. The caller distributes the
    /// returned announcement to every node.
    pub fn register_user<R: RngCore>(&mut self, rng: &mut R, tick: u64) -> Credentials<UserRecord> {
        let keypair = KeyPair::from_rng(rng);
        let user_id = self.issue_user_id();
        self.directory.announce(user_wallet(&keypair, &user_id, tick));
        let record = UserRecord { user_id: user_id.clone(), address: keypair.address(), registered_at: tick };
        self.users.insert(user_id, record.clone());
        Credentials { record, keypair }
    }

    pub fn wallet(&self, address: &Address) -> Option<&WalletAnnouncement> {
        self.directory.get(address)
    }

    /// Replaces a user's lost key. The department `agent` signs one transfer
    /// record per sealed record of the old address, then a retirement
    /// marker; nothing already on the chain changes.
    #[allow(clippy::too_many_arguments)]
    pub fn recover_address<R: RngCore>(
        &mut self,
        user_id: &str,
        old_address: Address,
        agent: &NodeDescriptor,
        agent_key: &KeyPair,
        identity_proven: bool,
        chain: &[Block],
        rng: &mut R,
        tick: u64,
    ) -> Result<Recovery, RegistryError> {
        if !agent.is_department || agent.kind != NodeKind::Full {
            return Err(RegistryError::UnauthorizedAgent);
        }
        let user = self.users.get(user_id).ok_or_else(|| RegistryError::UnknownUser(user_id.to_string()))?;
        if user.address != old_address {
            return Err(RegistryError::AddressMismatch(old_address, user_id.to_string()));
        }
        if !identity_proven {
            return Err(RegistryError::IdentityNotProven(user_id.to_string()));
        }
        let keypair = KeyPair::from_rng(rng);
        let new_address = keypair.address();
        let mut transactions: Vec<Transaction> = query_records(chain, &old_address)
            .records
            .iter()
            .map(|r| {
                let payload = Transaction::transfer_payload(&old_address, &new_address, &r.tx_hash);
                Transaction::new_signed(agent_key, user_id, payload, TRANSFER_TAG, tick)
            })
            .collect();
        transactions.push(Transaction::new_signed(
            agent_key,
            user_id,
            Transaction::retirement_payload(&old_address, &new_address),
            RETIRE_TAG,
            tick,
        ));
        let wallet = user_wallet(&keypair, user_id, tick);
        self.directory.announce(wallet.clone());
        self.directory.retire(old_address, new_address);
        let record = UserRecord { user_id: user_id.to_string(), address: new_address, registered_at: tick };
        self.users.insert(user_id.to_string(), record.clone());
        Ok(Recovery { user: Credentials { record, keypair }, wallet, old_address, transactions })
    }
}

fn user_wallet(keypair: &KeyPair, user_id: &str, tick: u64) -> WalletAnnouncement {
    WalletAnnouncement {
        address: keypair.address(),
        public_key: keypair.public_key(),
        role: MemberRole::User,
        full_node: false,
        grant: 0,
        joined_at: tick,
        owner_id: user_id.to_string(),
    }
}

#[derive(Debug)]
pub struct Recovery {
    pub user: Credentials<UserRecord>,
    pub wallet: WalletAnnouncement,
    pub old_address: Address,
    /// Transfer records followed by the retirement marker.
    pub transactions: Vec<Transaction>,
}

/// Signs a record for `user`.
pub fn submit_record(
    user: &UserRecord,
    keypair: &KeyPair,
    record_value: Vec<u8>,
    record_identification: &str,
    tick: u64,
) -> Transaction {
    Transaction::new_signed(keypair, user.user_id.clone(), record_value, record_identification, tick)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub user_id: String,
    pub record_identification: String,
    #[serde(with = "hex_string")]
    pub record_value: Vec<u8>,
    pub block_height: usize,
    pub tx_index: usize,
    pub tx_hash: crate::crypto::Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetirementMarker {
    pub replaced_by: Address,
    pub block_height: usize,
    pub tx_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResult {
    pub address: Address,
    pub records: Vec<RecordEntry>,
    pub retired: Option<RetirementMarker>,
}

mod hex_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Sealed records credited to `address`, in chain order. Heights count
/// genesis as 0. An unknown address yields an empty listing.
pub fn query_records(chain: &[Block], address: &Address) -> QueryResult {
    let mut records = Vec::new();
    let mut retired = None;
    for (height, block) in chain.iter().enumerate().skip(1) {
        for (tx_index, tx) in block.transactions.iter().enumerate() {
            if let RecordKind::Retirement { old, new } = tx.kind() {
                if &old == address && retired.is_none() {
                    retired = Some(RetirementMarker { replaced_by: new, block_height: height, tx_index });
                }
            }
            if tx.credited_address().as_ref() == Some(address) {
                records.push(RecordEntry {
                    user_id: tx.user_id.clone(),
                    record_identification: tx.record_identification.clone(),
                    record_value: tx.record_value.clone(),
                    block_height: height,
                    tx_index,
                    tx_hash: tx.hash(),
                });
            }
        }
    }
    QueryResult { address: *address, records, retired }
}
