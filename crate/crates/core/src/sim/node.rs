use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::message::NodeId;
use crate::consensus::StakeTable;
use crate::crypto::{Address, Digest, KeyPair};
use crate::ledger::{Block, BlockHeader, Transaction};
use crate::registry::{Directory, NodeKind, NodeOrigin};

/// What happened to a block offered to a [`ChainStore`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Insert {
    /// Already held.
    Duplicate,
    /// Parent unknown to this node.
    NoParent,
    /// Stored; lists branches that fell behind and were dropped.
    Stored { orphaned: Vec<Vec<Block>> },
}

/// Candidate chains from genesis. Only branches of maximal length are
/// kept; among those, the first one seen is canonical.
#[derive(Debug, Clone)]
pub struct ChainStore {
    branches: Vec<Vec<Block>>,
    canonical: usize,
}

impl ChainStore {
    pub fn new(genesis: Block) -> Self {
        ChainStore { branches: vec![vec![genesis]], canonical: 0 }
    }

    pub fn from_chain(blocks: Vec<Block>) -> Self {
        ChainStore { branches: vec![blocks], canonical: 0 }
    }

    pub fn canonical(&self) -> &[Block] {
        &self.branches[self.canonical]
    }

    pub fn tip(&self) -> &Block {
        self.canonical().last().expect("branches hold genesis")
    }

    pub fn branches(&self) -> &[Vec<Block>] {
        &self.branches
    }

    /// Locates a block by hash as (branch, height).
    pub fn locate(&self, hash: &Digest) -> Option<(usize, usize)> {
        for (b, branch) in self.branches.iter().enumerate() {
            if let Some(i) = branch.iter().rposition(|blk| &blk.hash() == hash) {
                return Some((b, i));
            }
        }
        None
    }

    pub fn get(&self, hash: &Digest) -> Option<&Block> {
        self.locate(hash).map(|(b, i)| &self.branches[b][i])
    }

    /// Blocks from genesis up to and including `hash`.
    pub fn prefix(&self, hash: &Digest) -> Option<&[Block]> {
        self.locate(hash).map(|(b, i)| &self.branches[b][..=i])
    }

    /// Stake balances as of the block `hash`.
    pub fn stakes_at(&self, hash: &Digest, grants: impl IntoIterator<Item = (Address, u64)>) -> Option<StakeTable> {
        self.prefix(hash).map(|p| StakeTable::replay(grants, &p[1..]))
    }

    /// Hashes of every transaction on the canonical branch.
    pub fn canonical_tx_hashes(&self) -> BTreeSet<Digest> {
        self.canonical().iter().skip(1).flat_map(|b| b.transactions.iter().map(Transaction::hash)).collect()
    }

    /// Adds an already validated block and applies longest-chain fork
    /// choice. A tie keeps the current canonical branch.
    pub fn insert(&mut self, block: Block) -> Insert {
        let hash = block.hash();
        if self.locate(&hash).is_some() {
            return Insert::Duplicate;
        }
        let Some((b, i)) = self.locate(&block.header.prev_hash) else {
            return Insert::NoParent;
        };
        let extended = if i + 1 == self.branches[b].len() {
            self.branches[b].push(block);
            b
        } else {
            let mut fork = self.branches[b][..=i].to_vec();
            fork.push(block);
            self.branches.push(fork);
            self.branches.len() - 1
        };
        let best = self.branches.iter().map(Vec::len).max().expect("non-empty");
        let canonical_hash = if self.branches[self.canonical].len() == best {
            self.tip().hash()
        } else {
            self.branches[extended].last().expect("non-empty").hash()
        };
        let (keep, dropped): (Vec<_>, Vec<_>) = std::mem::take(&mut self.branches).into_iter().partition(|br| br.len() == best);
        self.branches = keep;
        self.canonical = self
            .branches
            .iter()
            .position(|br| br.last().expect("non-empty").hash() == canonical_hash)
            .expect("canonical branch kept");
        let on_kept: BTreeSet<Digest> = self.branches.iter().flatten().map(Block::hash).collect();
        let orphaned = dropped
            .into_iter()
            .map(|br| br.into_iter().filter(|blk| !on_kept.contains(&blk.hash())).collect::<Vec<_>>())
            .filter(|seg| !seg.is_empty())
            .collect();
        Insert::Stored { orphaned }
    }

    /// Replaces the stored copy of the block at `height` on the canonical
    /// branch; used by tampering adversaries on their own copy.
    pub fn overwrite(&mut self, height: usize, block: Block) {
        let c = self.canonical;
        self.branches[c][height] = block;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrphanEvent {
    pub node: String,
    pub tick: u64,
    pub block_hash: Digest,
    pub height: usize,
    pub returned_transactions: usize,
}

/// One simulated participant.
#[derive(Debug)]
pub struct SimNode {
    pub id: NodeId,
    pub name: String,
    pub origin: NodeOrigin,
    pub kind: NodeKind,
    pub key: Option<KeyPair>,
    pub address: Option<Address>,
    pub joined_at: Option<u64>,
    pub crashed_at: Option<u64>,
    /// Deviates from the protocol in this run.
    pub adversarial: bool,
    pub directory: Directory,
    pub store: Option<ChainStore>,
    pub headers: Vec<BlockHeader>,
    header_hashes: BTreeSet<Digest>,
    /// Transactions this node admitted or saw sealed.
    pub known: BTreeMap<Digest, Transaction>,
    pub seen: BTreeSet<Digest>,
    pub rejections: BTreeMap<String, u64>,
    pub trusted: Option<NodeId>,
    pub blocks_received: u64,
    pub invalid_blocks: Vec<(Digest, String)>,
}

impl SimNode {
    pub fn new(id: NodeId, name: String, origin: NodeOrigin, kind: NodeKind) -> Self {
        SimNode {
            id,
            name,
            origin,
            kind,
            key: None,
            address: None,
            joined_at: None,
            crashed_at: None,
            adversarial: false,
            directory: Directory::new(),
            store: None,
            headers: Vec::new(),
            header_hashes: BTreeSet::new(),
            known: BTreeMap::new(),
            seen: BTreeSet::new(),
            rejections: BTreeMap::new(),
            trusted: None,
            blocks_received: 0,
            invalid_blocks: Vec::new(),
        }
    }

    pub fn is_full(&self) -> bool {
        self.kind == NodeKind::Full
    }

    pub fn is_live(&self) -> bool {
        self.joined_at.is_some() && self.crashed_at.is_none()
    }

    pub fn is_honest_full(&self) -> bool {
        self.is_full() && self.is_live() && !self.adversarial
    }

    pub fn store(&self) -> &ChainStore {
        self.store.as_ref().expect("full node has a chain store")
    }

    pub fn store_mut(&mut self) -> &mut ChainStore {
        self.store.as_mut().expect("full node has a chain store")
    }

    pub fn reject(&mut self, reason: impl Into<String>) {
        *self.rejections.entry(reason.into()).or_default() += 1;
    }

    /// Known transactions not on the canonical branch, sorted by hash.
    pub fn mempool(&self) -> Vec<Transaction> {
        let sealed = self.store().canonical_tx_hashes();
        self.known.iter().filter(|(h, _)| !sealed.contains(*h)).map(|(_, t)| t.clone()).collect()
    }

    pub fn add_header(&mut self, header: BlockHeader) -> bool {
        let h = crate::ledger::block_hash(&header);
        if self.header_hashes.insert(h) {
            self.headers.push(header);
            true
        } else {
            false
        }
    }
}
