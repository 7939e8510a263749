//! Membership knowledge a validator needs beyond the blocks themselves:
//! public keys, onboarding grants, delegate terms and the finality threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::block::{create_genesis, Block, NetworkConfig};
use crate::consensus::StakeTable;
use crate::crypto::{Address, PublicKey};
use crate::fraction::Fraction;

pub trait KeyDirectory {
    fn public_key(&self, address: &Address) -> Option<PublicKey>;
}

impl KeyDirectory for BTreeMap<Address, PublicKey> {
    fn public_key(&self, address: &Address) -> Option<PublicKey> {
        self.get(address).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberRole {
    Department,
    Business,
    Citizen,
    /// A registered user wallet rather than a network node.
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub public_key: PublicKey,
    pub role: MemberRole,
    pub full_node: bool,
    pub grant: u64,
    pub joined_at: u64,
}

/// One continuous period during which an address served as a delegate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelegateTerm {
    pub address: Address,
    pub registered_at: u64,
    pub evicted_at: Option<u64>,
}

impl DelegateTerm {
    /// A delegate may witness or endorse a block iff it registered before
    /// the block's tick and had not been evicted by then.
    pub fn covers(&self, block_timestamp: u64) -> bool {
        self.registered_at < block_timestamp && self.evicted_at.is_none_or(|e| e > block_timestamp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerContext {
    pub network: NetworkConfig,
    pub finality_fraction: Fraction,
    pub members: BTreeMap<Address, Member>,
    pub delegate_terms: Vec<DelegateTerm>,
}

impl KeyDirectory for LedgerContext {
    fn public_key(&self, address: &Address) -> Option<PublicKey> {
        self.members.get(address).map(|m| m.public_key)
    }
}

/// Everything `validate_block` needs to judge one block.
pub struct StakeView<'a> {
    pub keys: &'a dyn KeyDirectory,
    /// Eligible delegates and their snapshot stake, witness included.
    pub delegates: BTreeMap<Address, u64>,
    pub finality_fraction: Fraction,
}

impl LedgerContext {
    pub fn new(network: NetworkConfig, finality_fraction: Fraction) -> Self {
        LedgerContext { network, finality_fraction, members: BTreeMap::new(), delegate_terms: Vec::new() }
    }

    pub fn genesis(&self) -> Block {
        create_genesis(&self.network)
    }

    pub fn grants(&self) -> impl Iterator<Item = (Address, u64)> + '_ {
        self.members.iter().map(|(a, m)| (*a, m.grant))
    }

    pub fn is_delegate_at(&self, address: &Address, block_timestamp: u64) -> bool {
        self.delegate_terms.iter().any(|t| &t.address == address && t.covers(block_timestamp))
    }

    /// Delegates eligible for a block produced at `block_timestamp`,
    /// weighted by `stakes`.
    pub fn eligible_delegates(&self, block_timestamp: u64, stakes: &StakeTable) -> BTreeMap<Address, u64> {
        self.delegate_terms
            .iter()
            .filter(|t| t.covers(block_timestamp))
            .map(|t| (t.address, stakes.get(&t.address)))
            .collect()
    }

    /// `stakes` must be the balances at the block's parent.
    pub fn stake_view(&self, block_timestamp: u64, stakes: &StakeTable) -> StakeView<'_> {
        StakeView {
            keys: self,
            delegates: self.eligible_delegates(block_timestamp, stakes),
            finality_fraction: self.finality_fraction,
        }
    }

    pub fn open_term(&mut self, address: Address, tick: u64) {
        if !self.delegate_terms.iter().any(|t| t.address == address && t.evicted_at.is_none()) {
            self.delegate_terms.push(DelegateTerm { address, registered_at: tick, evicted_at: None });
        }
    }

    pub fn close_term(&mut self, address: &Address, tick: u64) {
        for t in self.delegate_terms.iter_mut().filter(|t| &t.address == address && t.evicted_at.is_none()) {
            t.evicted_at = Some(tick);
        }
    }
}
