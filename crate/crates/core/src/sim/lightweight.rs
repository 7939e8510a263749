//! Header-only verification for lightweight nodes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::Digest;
use crate::ledger::{block_hash, Block, BlockHeader, Transaction};
use crate::merkle::{verify_proof, InclusionProof};

/// A transaction served by a full node together with its inclusion proof.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofBundle {
    pub height: usize,
    pub transaction: Transaction,
    pub proof: InclusionProof,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxVerdict {
    pub height: usize,
    pub tx_index: usize,
    pub tx_hash: Digest,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncOutcome {
    /// Height of the last header that linked, genesis being 0.
    pub last_good_height: usize,
    /// The chosen stream contained a header that failed to link.
    pub halted: bool,
    pub verdicts: Vec<TxVerdict>,
}

impl SyncOutcome {
    pub fn all_verified(&self) -> bool {
        self.verdicts.iter().all(|v| v.verified)
    }
}

/// Longest prefix of `stream` that starts at `genesis` and links header by
/// header with increasing timestamps.
fn linked_prefix<'a>(genesis: &BlockHeader, stream: &'a [BlockHeader]) -> &'a [BlockHeader] {
    if stream.first() != Some(genesis) {
        return &stream[..0];
    }
    let mut n = 1;
    while n < stream.len() {
        let (prev, h) = (&stream[n - 1], &stream[n]);
        if h.prev_hash != block_hash(prev) || h.timestamp <= prev.timestamp {
            break;
        }
        n += 1;
    }
    &stream[..n]
}

/// Picks the longest linked header chain among `streams` (first wins a
/// tie) and checks each proof against the header at its height.
pub fn lightweight_sync(genesis: &BlockHeader, streams: &[Vec<BlockHeader>], proofs: &[ProofBundle]) -> SyncOutcome {
    let mut best: (&[BlockHeader], bool) = (&[], false);
    for s in streams {
        let linked = linked_prefix(genesis, s);
        if linked.len() > best.0.len() {
            best = (linked, linked.len() < s.len());
        }
    }
    let (headers, halted) = best;
    let verdicts = proofs
        .iter()
        .map(|b| {
            let leaf = b.transaction.hash();
            let verified = headers.get(b.height).is_some_and(|h| verify_proof(&h.merkle_root, &leaf, &b.proof));
            TxVerdict { height: b.height, tx_index: b.proof.leaf_index, tx_hash: leaf, verified }
        })
        .collect();
    SyncOutcome { last_good_height: headers.len().saturating_sub(1), halted, verdicts }
}

/// Longest chain through a pool of received headers, first-received
/// winning ties.
pub fn best_header_chain(genesis: &BlockHeader, pool: &[BlockHeader]) -> Vec<BlockHeader> {
    let mut children: BTreeMap<Digest, Vec<usize>> = BTreeMap::new();
    for (i, h) in pool.iter().enumerate() {
        children.entry(h.prev_hash).or_default().push(i);
    }
    // Depth of the longest path below each header, computed bottom-up.
    fn depth(i: usize, pool: &[BlockHeader], children: &BTreeMap<Digest, Vec<usize>>, memo: &mut BTreeMap<usize, usize>) -> usize {
        if let Some(d) = memo.get(&i) {
            return *d;
        }
        let kids = children.get(&block_hash(&pool[i])).cloned().unwrap_or_default();
        let d = 1 + kids.iter().map(|k| depth(*k, pool, children, memo)).max().unwrap_or(0);
        memo.insert(i, d);
        d
    }
    let mut memo = BTreeMap::new();
    let mut chain = vec![genesis.clone()];
    let mut at = block_hash(genesis);
    loop {
        let kids = children.get(&at).cloned().unwrap_or_default();
        let mut pick: Option<(usize, usize)> = None;
        for k in kids {
            if pool[k].timestamp <= chain.last().expect("non-empty").timestamp {
                continue;
            }
            let d = depth(k, pool, &children, &mut memo);
            if pick.is_none_or(|(_, best)| d > best) {
                pick = Some((k, d));
            }
        }
        let Some((k, _)) = pick else { break };
        chain.push(pool[k].clone());
        at = block_hash(&pool[k]);
    }
    chain
}

/// Proofs for every transaction in `chain` for which `affects` holds, as a
/// trusted full node would serve them.
pub fn serve_proofs(chain: &[Block], affects: impl Fn(&Transaction) -> bool) -> Vec<ProofBundle> {
    let mut out = Vec::new();
    for (height, block) in chain.iter().enumerate().skip(1) {
        let tree = block.merkle_tree();
        for (i, tx) in block.transactions.iter().enumerate() {
            if affects(tx) {
                let proof = tree.proof(i).expect("index within block");
                out.push(ProofBundle { height, transaction: tx.clone(), proof });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{Digest, KeyPair};
    use crate::ledger::{create_genesis, NetworkConfig};
    use crate::consensus::produce_block;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn chain(len: usize, seed: u64) -> (Vec<Block>, KeyPair) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let w = KeyPair::from_rng(&mut rng);
        let user = KeyPair::from_rng(&mut rng);
        let mut blocks = vec![create_genesis(&NetworkConfig { name: "n".into(), version: 1, genesis_payload: vec![7] })];
        let panel = crate::consensus::WitnessPanel {
            round: 0,
            ranking: vec![],
            members: vec![w.address()],
            active_witness: w.address(),
            backup_order: vec![],
        };
        for i in 1..len {
            let txs: Vec<Transaction> =
                (0..3).map(|j| Transaction::new_signed(&user, "u", vec![i as u8, j], "TIN", i as u64)).collect();
            let b = produce_block(&panel, &w, &txs, blocks.last().unwrap(), 5 * i as u64).unwrap();
            blocks.push(b);
        }
        (blocks, user)
    }

    fn headers(blocks: &[Block]) -> Vec<BlockHeader> {
        blocks.iter().map(|b| b.header.clone()).collect()
    }

    #[test]
    fn honest_stream_verifies_everything() {
        let (blocks, user) = chain(5, 1);
        let proofs = serve_proofs(&blocks, |t| t.submitter_address == user.address());
        assert_eq!(proofs.len(), 12);
        let out = lightweight_sync(&blocks[0].header, &[headers(&blocks)], &proofs);
        assert!(out.all_verified());
        assert_eq!(out.last_good_height, 4);
        assert!(!out.halted);
    }

    #[test]
    fn tampered_transaction_fails_its_proof() {
        let (blocks, user) = chain(4, 2);
        let mut proofs = serve_proofs(&blocks, |t| t.submitter_address == user.address());
        proofs[4].transaction.record_value.push(0);
        let out = lightweight_sync(&blocks[0].header, &[headers(&blocks)], &proofs);
        assert!(!out.verdicts[4].verified);
        assert_eq!(out.verdicts.iter().filter(|v| v.verified).count(), proofs.len() - 1);
    }

    #[test]
    fn prefers_longer_header_chain() {
        let (blocks, _) = chain(6, 3);
        let short: Vec<BlockHeader> = headers(&blocks[..3]);
        let out = lightweight_sync(&blocks[0].header, &[short, headers(&blocks)], &[]);
        assert_eq!(out.last_good_height, 5);
    }

    #[test]
    fn unlinked_stream_halts() {
        let (blocks, _) = chain(6, 4);
        let mut hs = headers(&blocks);
        hs[3].prev_hash = Digest([1; 32]);
        let out = lightweight_sync(&blocks[0].header, &[hs], &[]);
        assert!(out.halted);
        assert_eq!(out.last_good_height, 2);
    }

    #[test]
    fn pool_resolves_to_longest_branch() {
        let (blocks, _) = chain(5, 5);
        let (other, _) = chain(3, 6);
        // Different genesis payload is irrelevant here: graft the other
        // chain's block 1 onto our genesis by rewriting prev_hash.
        let mut stray = other[1].header.clone();
        stray.prev_hash = blocks[0].hash();
        let mut pool = headers(&blocks[1..]);
        pool.insert(0, stray);
        let best = best_header_chain(&blocks[0].header, &pool);
        assert_eq!(best, headers(&blocks));
    }
}
