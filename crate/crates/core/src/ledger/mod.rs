//! Blocks, transactions and chains: canonical encoding, genesis, hashing,
//! validation and longest-chain fork choice.

mod block;
pub mod codec;
mod context;
pub mod dump;
pub mod tamper;
mod validate;

use thiserror::Error;

pub use block::{
    block_hash, create_genesis, Block, BlockHeader, Endorsement, NetworkConfig, RecordKind, Transaction,
    BLOCK_VERSION, GENESIS_TAG, HEADER_LEN, RETIRE_TAG, TRANSFER_TAG,
};
pub use context::{DelegateTerm, KeyDirectory, LedgerContext, Member, MemberRole, StakeView};
pub use validate::{
    check_proposal, select_valid_chain, validate_block, validate_blocks, validate_chain, ChainVerdict,
    ForkChoice, InvalidReason,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("chain is empty; a genesis block is required")]
    EmptyChain,
    #[error("no candidate chains to choose from")]
    NoCandidates,
    #[error("candidate chains do not share a genesis block")]
    DifferentGenesis,
}

/// Blocks ordered from genesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    blocks: Vec<Block>,
}

impl Chain {
    pub fn new(genesis: Block) -> Self {
        Chain { blocks: vec![genesis] }
    }

    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self, LedgerError> {
        if blocks.is_empty() {
            return Err(LedgerError::EmptyChain);
        }
        Ok(Chain { blocks })
    }

    pub fn push(&mut self, block: Block) {
        self.blocks.push(block);
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }

    /// Number of blocks including genesis.
    pub fn height(&self) -> usize {
        self.blocks.len()
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    pub fn genesis(&self) -> &Block {
        &self.blocks[0]
    }
}
