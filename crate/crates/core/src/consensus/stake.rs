use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::Address;
use crate::ledger::Block;

/// Token balances. A balance is its onboarding grant plus one token per
/// sealed record credited to the address; nothing else moves it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StakeTable {
    balances: BTreeMap<Address, u64>,
}

impl StakeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_grants<I: IntoIterator<Item = (Address, u64)>>(grants: I) -> Self {
        let mut t = Self::new();
        for (a, g) in grants {
            t.grant(a, g);
        }
        t
    }

    /// Grants `grants` then credits every record sealed in `blocks`.
    pub fn replay<'a, I, B>(grants: I, blocks: B) -> Self
    where
        I: IntoIterator<Item = (Address, u64)>,
        B: IntoIterator<Item = &'a Block>,
    {
        let mut t = Self::from_grants(grants);
        for b in blocks {
            t.credit_block(b);
        }
        t
    }

    pub fn grant(&mut self, address: Address, tokens: u64) {
        *self.balances.entry(address).or_default() += tokens;
    }

    pub fn credit_record(&mut self, address: Address) {
        *self.balances.entry(address).or_default() += 1;
    }

    pub fn credit_block(&mut self, block: &Block) {
        for tx in &block.transactions {
            if let Some(a) = tx.credited_address() {
                self.credit_record(a);
            }
        }
    }

    pub fn get(&self, address: &Address) -> u64 {
        self.balances.get(address).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Address, &u64)> {
        self.balances.iter()
    }

    pub fn total(&self) -> u64 {
        self.balances.values().sum()
    }

    /// Multiplies every balance by `factor`; used to check that rankings
    /// depend only on stake ratios.
    pub fn scaled(&self, factor: u64) -> StakeTable {
        StakeTable { balances: self.balances.iter().map(|(a, v)| (*a, v * factor)).collect() }
    }
}
