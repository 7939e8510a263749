//! Inputs shared by the benchmarks.

use govledger_core::consensus::{StakeTable, Vote};
use govledger_core::crypto::{Address, KeyPair};
use govledger_core::ledger::Transaction;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// `n` signed records from a handful of keys, as canonical bytes.
pub fn record_bytes(n: usize) -> Vec<Vec<u8>> {
    let keys: Vec<KeyPair> = (0..4).map(|i| KeyPair::from_rng(&mut ChaCha20Rng::seed_from_u64(i))).collect();
    (0..n)
        .map(|i| Transaction::new_signed(&keys[i % 4], format!("{:08}", i % 97), vec![i as u8; 32], "TIN", i as u64).canonical_bytes())
        .collect()
}

/// `voters` voters with stake 1..=10 spread over `delegates` delegates.
pub fn electorate(delegates: usize, voters: usize) -> (Vec<Address>, Vec<Vote>, StakeTable) {
    let addr = |i: usize| {
        let mut a = [0u8; 20];
        a[..8].copy_from_slice(&(i as u64).to_be_bytes());
        Address(a)
    };
    let ds: Vec<Address> = (0..delegates).map(|i| addr(1_000_000 + i)).collect();
    let votes: Vec<Vote> = (0..voters)
        .map(|v| Vote { voter: addr(v), target_delegate: ds[(v * 7) % delegates], weight: 1 + (v as u64 % 10) })
        .collect();
    let stakes = StakeTable::from_grants(votes.iter().map(|v| (v.voter, v.weight)));
    (ds, votes, stakes)
}
