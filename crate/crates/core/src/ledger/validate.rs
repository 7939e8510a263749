use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::block::{Block, RecordKind, BLOCK_VERSION};
use super::context::{KeyDirectory, LedgerContext, StakeView};
use super::{Chain, LedgerError};
use crate::consensus::StakeTable;
use crate::crypto::{verify, Address, Digest};

/// First rule a block breaks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum InvalidReason {
    BrokenLink,
    TimestampNotAfterParent,
    UnsupportedVersion,
    NonZeroWorkFields,
    MerkleMismatch,
    WitnessNotDelegate,
    WitnessSignatureMismatch,
    SelfEndorsement,
    EndorserNotDelegate,
    EndorsementSignatureMismatch,
    InsufficientEndorsement { achieved: u64, eligible: u64 },
    WitnessSelfTransaction,
    ReservedRecord { tx_index: usize },
    UnknownSubmitter { tx_index: usize },
    TransactionSignatureMismatch { tx_index: usize },
    GenesisMismatch,
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BrokenLink => f.write_str("prev_hash does not link to parent"),
            Self::TimestampNotAfterParent => f.write_str("timestamp not after parent"),
            Self::UnsupportedVersion => f.write_str("unsupported header version"),
            Self::NonZeroWorkFields => f.write_str("nonce and difficulty must be zero"),
            Self::MerkleMismatch => f.write_str("merkle mismatch"),
            Self::WitnessNotDelegate => f.write_str("witness is not an eligible delegate"),
            Self::WitnessSignatureMismatch => f.write_str("witness signature mismatch"),
            Self::SelfEndorsement => f.write_str("self-endorsement"),
            Self::EndorserNotDelegate => f.write_str("endorser is not an eligible delegate"),
            Self::EndorsementSignatureMismatch => f.write_str("endorsement signature mismatch"),
            Self::InsufficientEndorsement { achieved, eligible } => {
                write!(f, "insufficient endorsement weight ({achieved} of {eligible})")
            }
            Self::WitnessSelfTransaction => f.write_str("witness self-transaction"),
            Self::ReservedRecord { tx_index } => write!(f, "reserved record tag in transaction {tx_index}"),
            Self::UnknownSubmitter { tx_index } => write!(f, "unknown submitter in transaction {tx_index}"),
            Self::TransactionSignatureMismatch { tx_index } => {
                write!(f, "transaction signature mismatch in transaction {tx_index}")
            }
            Self::GenesisMismatch => f.write_str("genesis mismatch"),
        }
    }
}

/// Rules that need no endorsement context: linkage, merkle root, witness
/// signature, witness exclusion and per-transaction signatures. This is what
/// an endorser checks before signing a proposal.
pub fn check_proposal(
    block: &Block,
    parent: &Block,
    keys: &dyn KeyDirectory,
    delegates: &BTreeMap<Address, u64>,
) -> Result<(), InvalidReason> {
    check_structure(block, parent)?;
    check_witness(block, keys, delegates)?;
    check_transactions(block, keys)
}

fn check_structure(block: &Block, parent: &Block) -> Result<(), InvalidReason> {
    let h = &block.header;
    if h.prev_hash != parent.hash() {
        return Err(InvalidReason::BrokenLink);
    }
    if h.timestamp <= parent.header.timestamp {
        return Err(InvalidReason::TimestampNotAfterParent);
    }
    if h.version != BLOCK_VERSION {
        return Err(InvalidReason::UnsupportedVersion);
    }
    if h.nonce != 0 || h.difficulty != Digest::ZERO {
        return Err(InvalidReason::NonZeroWorkFields);
    }
    if block.compute_merkle_root() != h.merkle_root {
        return Err(InvalidReason::MerkleMismatch);
    }
    Ok(())
}

fn check_witness(
    block: &Block,
    keys: &dyn KeyDirectory,
    delegates: &BTreeMap<Address, u64>,
) -> Result<(), InvalidReason> {
    if !delegates.contains_key(&block.witness_address) {
        return Err(InvalidReason::WitnessNotDelegate);
    }
    let key = keys.public_key(&block.witness_address).ok_or(InvalidReason::WitnessNotDelegate)?;
    if !verify(&key, block.hash().as_bytes(), &block.witness_signature) {
        return Err(InvalidReason::WitnessSignatureMismatch);
    }
    Ok(())
}

fn check_endorsements(block: &Block, view: &StakeView<'_>) -> Result<(), InvalidReason> {
    let hash = block.hash();
    let mut counted = BTreeMap::new();
    for e in &block.endorsements {
        if e.endorser == block.witness_address {
            return Err(InvalidReason::SelfEndorsement);
        }
        let weight = *view.delegates.get(&e.endorser).ok_or(InvalidReason::EndorserNotDelegate)?;
        let key = view.keys.public_key(&e.endorser).ok_or(InvalidReason::EndorserNotDelegate)?;
        if !verify(&key, hash.as_bytes(), &e.signature) {
            return Err(InvalidReason::EndorsementSignatureMismatch);
        }
        counted.insert(e.endorser, weight);
    }
    let achieved: u64 = counted.values().sum();
    let eligible: u64 = view
        .delegates
        .iter()
        .filter(|(a, _)| **a != block.witness_address)
        .map(|(_, w)| *w)
        .sum();
    if !view.finality_fraction.is_met(achieved, eligible) {
        return Err(InvalidReason::InsufficientEndorsement { achieved, eligible });
    }
    Ok(())
}

fn check_transactions(block: &Block, keys: &dyn KeyDirectory) -> Result<(), InvalidReason> {
    if block.transactions.iter().any(|tx| tx.submitter_address == block.witness_address) {
        return Err(InvalidReason::WitnessSelfTransaction);
    }
    for (i, tx) in block.transactions.iter().enumerate() {
        if matches!(tx.kind(), RecordKind::Genesis | RecordKind::Malformed) {
            return Err(InvalidReason::ReservedRecord { tx_index: i });
        }
        let key = keys
            .public_key(&tx.submitter_address)
            .ok_or(InvalidReason::UnknownSubmitter { tx_index: i })?;
        if !verify(&key, &tx.message(), &tx.submitter_signature) {
            return Err(InvalidReason::TransactionSignatureMismatch { tx_index: i });
        }
    }
    Ok(())
}

/// Full validity of a sealed block against its parent.
pub fn validate_block(block: &Block, parent: &Block, view: &StakeView<'_>) -> Result<(), InvalidReason> {
    check_structure(block, parent)?;
    check_witness(block, view.keys, &view.delegates)?;
    check_endorsements(block, view)?;
    check_transactions(block, view.keys)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ChainVerdict {
    Valid { height: usize },
    Invalid { index: usize, reason: InvalidReason },
}

impl ChainVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, ChainVerdict::Valid { .. })
    }
}

/// Validates every block from genesis and reports the first invalid index.
pub fn validate_chain(chain: &Chain, context: &LedgerContext) -> Result<ChainVerdict, LedgerError> {
    validate_blocks(chain.blocks(), context)
}

pub fn validate_blocks(blocks: &[Block], context: &LedgerContext) -> Result<ChainVerdict, LedgerError> {
    let genesis = blocks.first().ok_or(LedgerError::EmptyChain)?;
    if genesis.canonical_bytes() != context.genesis().canonical_bytes() {
        return Ok(ChainVerdict::Invalid { index: 0, reason: InvalidReason::GenesisMismatch });
    }
    let mut stakes = StakeTable::from_grants(context.grants());
    for (i, pair) in blocks.windows(2).enumerate() {
        let (parent, block) = (&pair[0], &pair[1]);
        let view = context.stake_view(block.header.timestamp, &stakes);
        if let Err(reason) = validate_block(block, parent, &view) {
            return Ok(ChainVerdict::Invalid { index: i + 1, reason });
        }
        stakes.credit_block(block);
    }
    Ok(ChainVerdict::Valid { height: blocks.len() - 1 })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForkChoice {
    /// Index of the strictly longest candidate; every other candidate is orphaned.
    Selected { index: usize },
    /// Several candidates share the maximal length; keep all and wait.
    Tie { indices: Vec<usize> },
}

/// Longest-chain rule. Equal maximal lengths produce a tie rather than an
/// arbitrary winner.
pub fn select_valid_chain(candidates: &[Chain]) -> Result<ForkChoice, LedgerError> {
    let first = candidates.first().ok_or(LedgerError::NoCandidates)?;
    let genesis = first.blocks().first().map(Block::hash);
    if candidates.iter().any(|c| c.blocks().first().map(Block::hash) != genesis) {
        return Err(LedgerError::DifferentGenesis);
    }
    let best = candidates.iter().map(Chain::height).max().unwrap_or(0);
    let indices: Vec<usize> = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.height() == best)
        .map(|(i, _)| i)
        .collect();
    Ok(match indices.as_slice() {
        [only] => ForkChoice::Selected { index: *only },
        _ => ForkChoice::Tie { indices },
    })
}
