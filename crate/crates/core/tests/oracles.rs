//! Reference implementations written from the definitions alone, checked
//! against the library.

use std::collections::{BTreeMap, BTreeSet};

use govledger_core::consensus::{elect_witness_panel, produce_block, StakeTable, Vote, WitnessPanel};
use govledger_core::crypto::{hash256, Address, KeyPair};
use govledger_core::ledger::{create_genesis, Block, NetworkConfig};
use govledger_core::merkle::{build_proof, merkle_root, verify_proof, Side};
use govledger_core::sim::node::{ChainStore, Insert};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest as _, Sha256};

fn sha(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Recursive root: a level is reduced by hashing neighbours, the odd one
/// out hashed with a copy of itself.
fn oracle_root(leaves: &[[u8; 32]]) -> [u8; 32] {
    match leaves.len() {
        0 => sha(&[b""]),
        1 => leaves[0],
        _ => {
            let mut up = Vec::new();
            let mut i = 0;
            while i < leaves.len() {
                let r = if i + 1 < leaves.len() { leaves[i + 1] } else { leaves[i] };
                up.push(sha(&[&leaves[i], &r]));
                i += 2;
            }
            oracle_root(&up)
        }
    }
}

fn leaves(n: usize) -> Vec<Vec<u8>> {
    (0..n).map(|i| format!("record {i}").into_bytes()).collect()
}

#[test]
fn merkle_roots_match_oracle_up_to_sixteen() {
    for n in 0..=16 {
        let txs = leaves(n);
        let hashed: Vec<[u8; 32]> = txs.iter().map(|t| sha(&[t])).collect();
        assert_eq!(merkle_root(&txs).0, oracle_root(&hashed), "n={n}");
    }
}

#[test]
fn merkle_proofs_exhaustive_up_to_sixteen() {
    for n in 1..=16 {
        let txs = leaves(n);
        let root = merkle_root(&txs);
        for i in 0..n {
            let proof = build_proof(&txs, i).unwrap();
            assert!(verify_proof(&root, &hash256(&txs[i]), &proof), "n={n} i={i}");
            // Oracle fold of the sibling path agrees with the root.
            let folded = proof.siblings.iter().fold(sha(&[&txs[i]]), |acc, s| match s.side {
                Side::Left => sha(&[&s.sibling.0, &acc]),
                Side::Right => sha(&[&acc, &s.sibling.0]),
            });
            assert_eq!(folded, root.0);
            // Every altered leaf fails, including other leaves of the tree.
            let mut altered = txs[i].clone();
            altered.push(b'!');
            assert!(!verify_proof(&root, &hash256(&altered), &proof));
            for (j, other) in txs.iter().enumerate() {
                if other != &txs[i] {
                    assert!(!verify_proof(&root, &hash256(other), &proof), "n={n} i={i} j={j}");
                }
            }
            for k in 0..proof.siblings.len() {
                let mut bad = proof.clone();
                bad.siblings[k].sibling.0[0] ^= 1;
                assert!(!verify_proof(&root, &hash256(&txs[i]), &bad));
            }
        }
        assert!(build_proof(&txs, n).is_err());
    }
}

proptest! {
    #[test]
    fn merkle_random_trees_agree(txs in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..40), 0..70)) {
        let hashed: Vec<[u8; 32]> = txs.iter().map(|t| sha(&[t])).collect();
        prop_assert_eq!(merkle_root(&txs).0, oracle_root(&hashed));
        for i in 0..txs.len() {
            prop_assert!(verify_proof(&merkle_root(&txs), &hash256(&txs[i]), &build_proof(&txs, i).unwrap()));
        }
    }
}

fn addr(n: u8) -> Address {
    Address([n; 20])
}

/// Ranking by brute force: each delegate's weight is summed directly, then
/// every ordering is tried and the one that never puts a lighter (or
/// equal-weight, higher-address) delegate first is kept.
fn oracle_ranking(delegates: &[Address], ballots: &[(Address, u64, usize)]) -> Vec<(Address, u64)> {
    let weights: Vec<u64> =
        (0..delegates.len()).map(|d| ballots.iter().filter(|b| b.2 == d).map(|b| b.1).sum()).collect();
    let mut best: Option<Vec<usize>> = None;
    let mut perm: Vec<usize> = (0..delegates.len()).collect();
    permutations(&mut perm, 0, &mut |p| {
        let ok = p.windows(2).all(|w| {
            weights[w[0]] > weights[w[1]] || (weights[w[0]] == weights[w[1]] && delegates[w[0]] < delegates[w[1]])
        });
        if ok {
            assert!(best.is_none(), "ordering must be unique");
            best = Some(p.to_vec());
        }
    });
    best.unwrap().into_iter().map(|d| (delegates[d], weights[d])).collect()
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

#[test]
fn election_matches_brute_force_on_small_electorates() {
    let mut checked = 0;
    for nd in 1..=3usize {
        // Delegate addresses are deliberately out of rank order.
        let delegates: Vec<Address> = (0..nd).map(|i| addr(200 - 30 * i as u8)).collect();
        for nv in 1..=4usize {
            let voters: Vec<Address> = (0..nv).map(|i| addr(1 + i as u8)).collect();
            let combos = (6u64 * nd as u64).pow(nv as u32);
            for code in 0..combos {
                let mut c = code;
                let ballots: Vec<(Address, u64, usize)> = voters
                    .iter()
                    .map(|v| {
                        let stake = c % 6;
                        c /= 6;
                        let target = (c % nd as u64) as usize;
                        c /= nd as u64;
                        (*v, stake, target)
                    })
                    .collect();
                if ballots.iter().all(|b| b.1 == 0) {
                    continue;
                }
                let stakes = StakeTable::from_grants(ballots.iter().map(|b| (b.0, b.1)));
                let votes: Vec<Vote> =
                    ballots.iter().map(|b| Vote { voter: b.0, target_delegate: delegates[b.2], weight: b.1 }).collect();
                let set: BTreeSet<Address> = delegates.iter().copied().collect();
                let panel = elect_witness_panel(&set, &votes, &[], &stakes, 2, 0, code).unwrap();
                let got: Vec<(Address, u64)> = panel.ranking.iter().map(|r| (r.address, r.weight)).collect();
                let want = oracle_ranking(&delegates, &ballots);
                assert_eq!(got, want, "{ballots:?}");
                let top: Vec<Address> = want.iter().take(2).map(|w| w.0).collect();
                assert_eq!(panel.members, top);
                assert!(top.contains(&panel.active_witness));
                checked += 1;
            }
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn low_stake_delegate_outranks_high_stake_one() {
    // The small delegate holds 1 token, the large one 5; a 4-token and a
    // 3-token voter back the small one.
    let (small, large, v1, v2) = (addr(10), addr(11), addr(1), addr(2));
    let stakes = StakeTable::from_grants([(small, 1), (large, 5), (v1, 4), (v2, 3)]);
    let votes = vec![
        Vote { voter: small, target_delegate: small, weight: 1 },
        Vote { voter: large, target_delegate: large, weight: 5 },
        Vote { voter: v1, target_delegate: small, weight: 4 },
        Vote { voter: v2, target_delegate: small, weight: 3 },
    ];
    let panel = elect_witness_panel(&[small, large].into(), &votes, &[], &stakes, 1, 0, 0).unwrap();
    assert_eq!(panel.members, vec![small]);
    assert_eq!(
        oracle_ranking(&[small, large], &[(small, 1, 0), (large, 5, 1), (v1, 4, 0), (v2, 3, 0)]),
        vec![(small, 8), (large, 5)]
    );
}

/// Blocks as (parent index, own index); index 0 is genesis. A block is
/// accepted only if its parent lies on some chain of maximal length at that
/// moment; the canonical tip is the earliest accepted block of maximal
/// height.
struct ForkOracle {
    parent: Vec<usize>,
    height: Vec<usize>,
    accepted: Vec<bool>,
}

impl ForkOracle {
    fn max_height(&self) -> usize {
        (0..self.parent.len()).filter(|i| self.accepted[*i]).map(|i| self.height[i]).max().unwrap()
    }

    fn on_longest(&self, b: usize) -> bool {
        let max = self.max_height();
        (0..self.parent.len()).filter(|t| self.accepted[*t] && self.height[*t] == max).any(|mut t| loop {
            if t == b {
                return true;
            }
            if t == 0 {
                return false;
            }
            t = self.parent[t];
        })
    }

    fn offer(&mut self, p: usize) -> bool {
        let ok = self.accepted[p] && self.on_longest(p);
        self.parent.push(p);
        self.height.push(self.height[p] + 1);
        self.accepted.push(ok);
        ok
    }

    fn tip(&self) -> usize {
        let max = self.max_height();
        (0..self.parent.len()).find(|i| self.accepted[*i] && self.height[*i] == max).unwrap()
    }
}

fn fork_fixture() -> (Block, KeyPair, WitnessPanel) {
    let k = KeyPair::from_rng(&mut ChaCha20Rng::seed_from_u64(5));
    let panel = WitnessPanel {
        round: 0,
        ranking: vec![],
        members: vec![k.address()],
        active_witness: k.address(),
        backup_order: vec![],
    };
    (create_genesis(&NetworkConfig { name: "oracle".into(), version: 1, genesis_payload: vec![] }), k, panel)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn fork_choice_matches_oracle(choices in proptest::collection::vec(0usize..100, 1..7)) {
        let (genesis, key, panel) = fork_fixture();
        let mut store = ChainStore::new(genesis.clone());
        let mut blocks = vec![genesis];
        let mut oracle = ForkOracle { parent: vec![0], height: vec![0], accepted: vec![true] };
        for (n, c) in choices.iter().enumerate() {
            let p = c % blocks.len();
            let block = produce_block(&panel, &key, &[], &blocks[p], n as u64 + 1).unwrap();
            let expect = oracle.offer(p);
            let got = store.insert(block.clone());
            prop_assert_eq!(matches!(got, Insert::Stored { .. }), expect, "block {} on {}", n + 1, p);
            blocks.push(block);
            prop_assert_eq!(store.tip().hash(), blocks[oracle.tip()].hash());
            let longest: BTreeSet<usize> = store.branches().iter().map(Vec::len).collect();
            prop_assert_eq!(longest.len(), 1);
        }
    }
}

#[test]
fn stake_replay_counts_sealed_records() {
    let (genesis, key, panel) = fork_fixture();
    let users: Vec<KeyPair> = (0..3).map(|i| KeyPair::from_rng(&mut ChaCha20Rng::seed_from_u64(100 + i))).collect();
    let mut expected: BTreeMap<Address, u64> = users.iter().map(|u| (u.address(), 7)).collect();
    let mut parent = genesis;
    let mut chain = Vec::new();
    for round in 1..=4u64 {
        let txs: Vec<_> = users
            .iter()
            .take(round as usize % 3 + 1)
            .map(|u| {
                *expected.get_mut(&u.address()).unwrap() += 1;
                govledger_core::ledger::Transaction::new_signed(u, "00000001", round.to_be_bytes().to_vec(), "TIN", round)
            })
            .collect();
        let b = produce_block(&panel, &key, &txs, &parent, round * 5).unwrap();
        chain.push(b.clone());
        parent = b;
    }
    let table = StakeTable::replay(users.iter().map(|u| (u.address(), 7)), &chain);
    for (a, s) in expected {
        assert_eq!(table.get(&a), s);
    }
}

fn interleavings(a: usize, b: usize, prefix: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
    if a == 0 && b == 0 {
        out.push(prefix.clone());
        return;
    }
    for (take_a, left) in [(true, a), (false, b)] {
        if left > 0 {
            prefix.push(take_a);
            if take_a {
                interleavings(a - 1, b, prefix, out);
            } else {
                interleavings(a, b - 1, prefix, out);
            }
            prefix.pop();
        }
    }
}

#[test]
fn two_branch_fork_choice_exhaustive() {
    let (genesis, key, panel) = fork_fixture();
    for a in 1..=6usize {
        for b in 1..=6usize {
            // Branch blocks: A at timestamps 1.., B at 100..
            let mut branch_a = vec![genesis.clone()];
            let mut branch_b = vec![genesis.clone()];
            for i in 0..a {
                branch_a.push(produce_block(&panel, &key, &[], branch_a.last().unwrap(), 1 + i as u64).unwrap());
            }
            for i in 0..b {
                branch_b.push(produce_block(&panel, &key, &[], branch_b.last().unwrap(), 100 + i as u64).unwrap());
            }
            let mut orders = Vec::new();
            interleavings(a, b, &mut Vec::new(), &mut orders);
            for order in orders {
                let mut store = ChainStore::new(genesis.clone());
                let mut oracle = ForkOracle { parent: vec![0], height: vec![0], accepted: vec![true] };
                let mut blocks = vec![genesis.clone()];
                let (mut ia, mut ib) = (0, 0);
                let (mut last_a, mut last_b) = (0usize, 0usize);
                for take_a in order {
                    let (block, parent) = if take_a {
                        ia += 1;
                        (branch_a[ia].clone(), last_a)
                    } else {
                        ib += 1;
                        (branch_b[ib].clone(), last_b)
                    };
                    let expect = oracle.offer(parent);
                    let got = matches!(store.insert(block.clone()), Insert::Stored { .. });
                    assert_eq!(got, expect, "a={a} b={b}");
                    blocks.push(block);
                    if take_a {
                        last_a = blocks.len() - 1;
                    } else {
                        last_b = blocks.len() - 1;
                    }
                    assert_eq!(store.tip().hash(), blocks[oracle.tip()].hash(), "a={a} b={b}");
                }
            }
        }
    }
}
