use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ConsensusError, WitnessPanel};
use crate::crypto::{sign, verify, Address, Digest, KeyPair, Signature};
use crate::ledger::{
    check_proposal, Block, BlockHeader, Endorsement, InvalidReason, KeyDirectory, StakeView, Transaction,
    BLOCK_VERSION,
};
use crate::merkle::merkle_root;

/// Builds and signs the round's block from `mempool`.
///
/// Transactions submitted by the witness are dropped, duplicates collapse,
/// and the rest are ordered by `(submitted_at, canonical bytes)`.
pub fn produce_block(
    panel: &WitnessPanel,
    witness: &KeyPair,
    mempool: &[Transaction],
    parent: &Block,
    tick: u64,
) -> Result<Block, ConsensusError> {
    let me = witness.address();
    if panel.active_witness != me {
        return Err(ConsensusError::NotActiveWitness);
    }
    Ok(assemble_block(witness, mempool, parent, tick))
}

/// Block assembly without the panel check; also used by adversaries that
/// propose out of turn.
pub(crate) fn assemble_block(witness: &KeyPair, mempool: &[Transaction], parent: &Block, tick: u64) -> Block {
    let me = witness.address();
    let mut keyed: Vec<(u64, Vec<u8>, &Transaction)> = mempool
        .iter()
        .filter(|tx| tx.submitter_address != me)
        .map(|tx| (tx.submitted_at, tx.canonical_bytes(), tx))
        .collect();
    keyed.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    keyed.dedup_by(|a, b| a.1 == b.1);
    let transactions: Vec<Transaction> = keyed.into_iter().map(|(_, _, tx)| tx.clone()).collect();
    seal_header(witness, transactions, parent.hash(), tick)
}

/// Signs a header over exactly `transactions`, in the given order.
pub(crate) fn seal_header(witness: &KeyPair, transactions: Vec<Transaction>, prev_hash: Digest, tick: u64) -> Block {
    let root = merkle_root(&transactions.iter().map(Transaction::canonical_bytes).collect::<Vec<_>>());
    let header = BlockHeader {
        version: BLOCK_VERSION,
        prev_hash,
        merkle_root: root,
        timestamp: tick,
        nonce: 0,
        difficulty: Digest::ZERO,
    };
    let mut block = Block {
        header,
        transactions,
        witness_address: witness.address(),
        witness_signature: Signature::default(),
        endorsements: Vec::new(),
    };
    block.witness_signature = sign(witness, block.hash().as_bytes());
    block
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rejection", rename_all = "snake_case")]
pub enum EndorseRejection {
    SelfEndorsement,
    Invalid { reason: InvalidReason },
}

impl fmt::Display for EndorseRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SelfEndorsement => f.write_str("self-endorsement"),
            Self::Invalid { reason } => reason.fmt(f),
        }
    }
}

/// Checks `proposal` against its parent and, if it passes, signs its hash.
pub fn endorse_block(
    endorser: &KeyPair,
    proposal: &Block,
    parent: &Block,
    keys: &dyn KeyDirectory,
    delegates: &BTreeMap<Address, u64>,
) -> Result<Endorsement, EndorseRejection> {
    if endorser.address() == proposal.witness_address {
        return Err(EndorseRejection::SelfEndorsement);
    }
    check_proposal(proposal, parent, keys, delegates).map_err(|reason| EndorseRejection::Invalid { reason })?;
    Ok(Endorsement { endorser: endorser.address(), signature: sign(endorser, proposal.hash().as_bytes()) })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finalization {
    Sealed(Block),
    Pending { achieved: u64, eligible: u64 },
}

impl Finalization {
    pub fn is_sealed(&self) -> bool {
        matches!(self, Finalization::Sealed(_))
    }
}

/// Attaches endorsements and seals once their stake reaches the finality
/// fraction of all non-witness delegate stake. Endorsements from the
/// witness, from non-delegates, with bad signatures, or repeated, are dropped.
pub fn finalize_block(proposal: &Block, endorsements: &[Endorsement], view: &StakeView<'_>) -> Finalization {
    let hash = proposal.hash();
    let mut seen = BTreeSet::new();
    let mut kept: Vec<Endorsement> = Vec::new();
    let mut achieved = 0u64;
    for e in endorsements {
        if e.endorser == proposal.witness_address || seen.contains(&e.endorser) {
            continue;
        }
        let (Some(weight), Some(key)) = (view.delegates.get(&e.endorser), view.keys.public_key(&e.endorser)) else {
            continue;
        };
        if !verify(&key, hash.as_bytes(), &e.signature) {
            continue;
        }
        seen.insert(e.endorser);
        achieved += weight;
        kept.push(e.clone());
    }
    let eligible: u64 =
        view.delegates.iter().filter(|(a, _)| **a != proposal.witness_address).map(|(_, w)| *w).sum();
    if !view.finality_fraction.is_met(achieved, eligible) {
        return Finalization::Pending { achieved, eligible };
    }
    kept.sort_by_key(|a| a.endorser);
    let mut sealed = proposal.clone();
    sealed.endorsements = kept;
    Finalization::Sealed(sealed)
}
