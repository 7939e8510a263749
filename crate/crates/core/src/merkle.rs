//! Binary merkle tree over transaction bytes, with inclusion proofs for
//! header-only clients.
//!
//! Leaves are `hash256(tx_bytes)`; parents are `hash256(left ‖ right)`. Any
//! level with an odd number of entries pairs its last digest with itself.
//! An empty transaction list has the root `hash256(b"")`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash256, hash256_concat, Digest};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MerkleError {
    #[error("leaf index {index} out of range for {len} leaves")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("cannot build a proof over an empty tree")]
    EmptyTree,
}

/// Which side of the running hash a sibling sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofStep {
    pub sibling: Digest,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionProof {
    pub leaf_index: usize,
    pub siblings: Vec<ProofStep>,
}

/// All levels of the tree; `levels[0]` are leaf hashes and the last level
/// holds only the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleTree {
    levels: Vec<Vec<Digest>>,
    leaves: usize,
}

fn parent(left: &Digest, right: &Digest) -> Digest {
    hash256_concat(&[left.as_bytes(), right.as_bytes()])
}

impl MerkleTree {
    pub fn from_leaves(leaves: Vec<Digest>) -> Self {
        if leaves.is_empty() {
            return MerkleTree { levels: vec![vec![hash256(b"")]], leaves: 0 };
        }
        let count = leaves.len();
        let mut levels = vec![leaves];
        while levels.last().is_some_and(|l| l.len() > 1) {
            let prev = levels.last().unwrap();
            let next = prev
                .chunks(2)
                .map(|pair| parent(&pair[0], pair.get(1).unwrap_or(&pair[0])))
                .collect();
            levels.push(next);
        }
        MerkleTree { levels, leaves: count }
    }

    pub fn from_transactions<T: AsRef<[u8]>>(txs: &[T]) -> Self {
        Self::from_leaves(txs.iter().map(|t| hash256(t.as_ref())).collect())
    }

    pub fn root(&self) -> Digest {
        self.levels.last().expect("tree has at least one level")[0]
    }

    pub fn levels(&self) -> &[Vec<Digest>] {
        &self.levels
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves
    }

    pub fn proof(&self, leaf_index: usize) -> Result<InclusionProof, MerkleError> {
        let len = self.leaves;
        if len == 0 {
            return Err(MerkleError::EmptyTree);
        }
        if leaf_index >= len {
            return Err(MerkleError::IndexOutOfRange { index: leaf_index, len });
        }
        let mut siblings = Vec::with_capacity(self.levels.len() - 1);
        let mut idx = leaf_index;
        for level in &self.levels[..self.levels.len() - 1] {
            let step = if idx.is_multiple_of(2) {
                ProofStep { sibling: *level.get(idx + 1).unwrap_or(&level[idx]), side: Side::Right }
            } else {
                ProofStep { sibling: level[idx - 1], side: Side::Left }
            };
            siblings.push(step);
            idx /= 2;
        }
        Ok(InclusionProof { leaf_index, siblings })
    }
}

/// Merkle root of canonical transaction byte strings.
pub fn merkle_root<T: AsRef<[u8]>>(transactions: &[T]) -> Digest {
    MerkleTree::from_transactions(transactions).root()
}

pub fn build_proof<T: AsRef<[u8]>>(
    transactions: &[T],
    leaf_index: usize,
) -> Result<InclusionProof, MerkleError> {
    MerkleTree::from_transactions(transactions).proof(leaf_index)
}

pub fn verify_proof(root: &Digest, leaf_hash: &Digest, proof: &InclusionProof) -> bool {
    let folded = proof.siblings.iter().fold(*leaf_hash, |acc, step| match step.side {
        Side::Left => parent(&step.sibling, &acc),
        Side::Right => parent(&acc, &step.sibling),
    });
    folded == *root
}
