use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ConsensusError, StakeTable};
use crate::crypto::Address;

/// A stake-weighted vote; `weight` is the voter's snapshot stake.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub voter: Address,
    pub target_delegate: Address,
    pub weight: u64,
}

/// `grantor` lends its stake to `proxy`, which votes on its behalf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delegation {
    pub grantor: Address,
    pub proxy: Address,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteIntent {
    Vote(Address),
    Delegate(Address),
}

/// Standing voting intentions, one per voter. Delegation is one level deep:
/// a proxy may not itself delegate and a grantor may not act as a proxy.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteBook {
    intents: BTreeMap<Address, VoteIntent>,
}

impl VoteBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces any earlier vote or delegation by `voter`.
    pub fn cast_vote(&mut self, voter: Address, target: Address) {
        self.intents.insert(voter, VoteIntent::Vote(target));
    }

    pub fn delegate(&mut self, grantor: Address, proxy: Address) -> Result<(), ConsensusError> {
        if grantor == proxy {
            return Err(ConsensusError::SelfDelegation);
        }
        if matches!(self.intents.get(&proxy), Some(VoteIntent::Delegate(_))) {
            return Err(ConsensusError::DelegationTooDeep);
        }
        if self.intents.values().any(|i| *i == VoteIntent::Delegate(grantor)) {
            return Err(ConsensusError::DelegationTooDeep);
        }
        self.intents.insert(grantor, VoteIntent::Delegate(proxy));
        Ok(())
    }

    pub fn withdraw(&mut self, voter: &Address) {
        self.intents.remove(voter);
    }

    pub fn intent(&self, voter: &Address) -> Option<VoteIntent> {
        self.intents.get(voter).copied()
    }

    /// Voters currently voting for `target` directly.
    pub fn voters_for(&self, target: &Address) -> Vec<Address> {
        self.intents
            .iter()
            .filter(|(_, i)| **i == VoteIntent::Vote(*target))
            .map(|(v, _)| *v)
            .collect()
    }

    /// Votes weighted at `stakes`, plus active delegations, skipping the
    /// voters in `excluded`.
    pub fn snapshot(&self, stakes: &StakeTable, excluded: &BTreeSet<Address>) -> (Vec<Vote>, Vec<Delegation>) {
        let mut votes = Vec::new();
        let mut delegations = Vec::new();
        for (voter, intent) in &self.intents {
            if excluded.contains(voter) {
                continue;
            }
            match intent {
                VoteIntent::Vote(target) => {
                    votes.push(Vote { voter: *voter, target_delegate: *target, weight: stakes.get(voter) })
                }
                VoteIntent::Delegate(proxy) => delegations.push(Delegation { grantor: *voter, proxy: *proxy }),
            }
        }
        (votes, delegations)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedDelegate {
    pub address: Address,
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessPanel {
    pub round: u64,
    /// Every registered delegate, heaviest first, ties by address.
    pub ranking: Vec<RankedDelegate>,
    /// Top-k of the ranking.
    pub members: Vec<Address>,
    pub active_witness: Address,
    /// Remaining panel members in rank order; the head replaces a witness
    /// that misses its slot.
    pub backup_order: Vec<Address>,
}

impl WitnessPanel {
    pub fn total_weight(&self) -> u64 {
        self.ranking.iter().map(|r| r.weight).sum()
    }

    pub fn weight_of(&self, address: &Address) -> Option<u64> {
        self.ranking.iter().find(|r| &r.address == address).map(|r| r.weight)
    }

    pub fn ranked_addresses(&self) -> Vec<Address> {
        self.ranking.iter().map(|r| r.address).collect()
    }
}

/// Ranks `delegates` by received stake weight and draws the round's active
/// witness uniformly from the top `k` using `round_seed`.
///
/// A vote's weight is its `weight` field; a proxy's vote additionally
/// carries the snapshot stake of every grantor that delegated to it. Votes
/// for non-delegates are ignored.
pub fn elect_witness_panel(
    delegates: &BTreeSet<Address>,
    votes: &[Vote],
    delegations: &[Delegation],
    stakes: &StakeTable,
    k: usize,
    round: u64,
    round_seed: u64,
) -> Result<WitnessPanel, ConsensusError> {
    if k == 0 {
        return Err(ConsensusError::EmptyPanel);
    }
    let mut seen = BTreeSet::new();
    for v in votes {
        if !seen.insert(v.voter) {
            return Err(ConsensusError::DuplicateVote(v.voter));
        }
    }
    let grantors: BTreeSet<Address> = delegations.iter().map(|d| d.grantor).collect();
    let mut lent: BTreeMap<Address, u64> = BTreeMap::new();
    for d in delegations {
        if d.grantor == d.proxy || grantors.contains(&d.proxy) || seen.contains(&d.grantor) {
            return Err(ConsensusError::DelegationTooDeep);
        }
        *lent.entry(d.proxy).or_default() += stakes.get(&d.grantor);
    }

    let mut received: BTreeMap<Address, u64> = delegates.iter().map(|d| (*d, 0)).collect();
    for v in votes {
        if let Some(w) = received.get_mut(&v.target_delegate) {
            *w += v.weight + lent.get(&v.voter).copied().unwrap_or(0);
        }
    }
    if received.values().all(|w| *w == 0) {
        return Err(ConsensusError::NoQuorum);
    }

    let mut ranking: Vec<RankedDelegate> =
        received.into_iter().map(|(address, weight)| RankedDelegate { address, weight }).collect();
    ranking.sort_by(|a, b| b.weight.cmp(&a.weight).then(a.address.cmp(&b.address)));

    let members: Vec<Address> = ranking.iter().take(k).map(|r| r.address).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(round_seed);
    let pick = rng.gen_range(0..members.len());
    let active_witness = members[pick];
    let backup_order = members.iter().copied().filter(|m| *m != active_witness).collect();
    Ok(WitnessPanel { round, ranking, members, active_witness, backup_order })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(n: u8) -> Address {
        Address([n; 20])
    }

    fn stakes(entries: &[(u8, u64)]) -> StakeTable {
        StakeTable::from_grants(entries.iter().map(|(a, s)| (addr(*a), *s)))
    }

    fn votes_from(book: &VoteBook, st: &StakeTable) -> (Vec<Vote>, Vec<Delegation>) {
        book.snapshot(st, &BTreeSet::new())
    }

    #[test]
    fn hand_summed_weights() {
        // Delegates X=10, Y=11; voters A(10)->X, B(3)->Y, C(3)->Y.
        let (x, y) = (addr(10), addr(11));
        let st = stakes(&[(1, 10), (2, 3), (3, 3)]);
        let mut book = VoteBook::new();
        book.cast_vote(addr(1), x);
        book.cast_vote(addr(2), y);
        book.cast_vote(addr(3), y);
        let (v, d) = votes_from(&book, &st);
        let panel = elect_witness_panel(&[x, y].into(), &v, &d, &st, 2, 1, 0).unwrap();
        assert_eq!(panel.ranking[0], RankedDelegate { address: x, weight: 10 });
        assert_eq!(panel.ranking[1], RankedDelegate { address: y, weight: 6 });
    }

    #[test]
    fn single_delegate_is_witness() {
        let d = addr(9);
        let st = stakes(&[(1, 1)]);
        let v = vec![Vote { voter: addr(1), target_delegate: d, weight: 1 }];
        let panel = elect_witness_panel(&[d].into(), &v, &[], &st, 3, 1, 77).unwrap();
        assert_eq!(panel.members, vec![d]);
        assert_eq!(panel.active_witness, d);
        assert!(panel.backup_order.is_empty());
    }

    #[test]
    fn whale_vote_lifts_small_delegate() {
        // D holds 1 token but a 50-token whale votes for it; E holds 40 and
        // votes for itself, receiving only an extra 5-token vote.
        let (dd, ee, whale, small) = (addr(1), addr(2), addr(3), addr(4));
        let st = stakes(&[(1, 1), (2, 40), (3, 50), (4, 5)]);
        let mut book = VoteBook::new();
        book.cast_vote(whale, dd);
        book.cast_vote(small, ee);
        let (v, d) = votes_from(&book, &st);
        let panel = elect_witness_panel(&[dd, ee].into(), &v, &d, &st, 2, 1, 0).unwrap();
        assert_eq!(panel.ranked_addresses(), vec![dd, ee]);
        assert!(st.get(&dd) < st.get(&ee));
    }

    #[test]
    fn no_votes_no_quorum() {
        let err = elect_witness_panel(&[addr(1)].into(), &[], &[], &StakeTable::new(), 1, 1, 0).unwrap_err();
        assert_eq!(err, ConsensusError::NoQuorum);
        assert_eq!(err.to_string(), "no quorum");
    }

    #[test]
    fn ties_break_by_address() {
        let st = stakes(&[(1, 4), (2, 4)]);
        let v = vec![
            Vote { voter: addr(1), target_delegate: addr(20), weight: 4 },
            Vote { voter: addr(2), target_delegate: addr(10), weight: 4 },
        ];
        let panel = elect_witness_panel(&[addr(10), addr(20)].into(), &v, &[], &st, 1, 1, 0).unwrap();
        assert_eq!(panel.ranked_addresses(), vec![addr(10), addr(20)]);
    }

    #[test]
    fn delegation_adds_grantor_weight_once() {
        let st = stakes(&[(1, 5), (2, 3), (3, 2)]);
        let mut book = VoteBook::new();
        book.cast_vote(addr(1), addr(9));
        book.delegate(addr(2), addr(1)).unwrap();
        book.delegate(addr(3), addr(1)).unwrap();
        let (v, d) = votes_from(&book, &st);
        let panel = elect_witness_panel(&[addr(9)].into(), &v, &d, &st, 1, 1, 0).unwrap();
        assert_eq!(panel.total_weight(), 10);
    }

    #[test]
    fn delegation_depth_is_one() {
        let mut book = VoteBook::new();
        assert_eq!(book.delegate(addr(1), addr(1)), Err(ConsensusError::SelfDelegation));
        book.delegate(addr(1), addr(2)).unwrap();
        // 2 is a proxy, so it cannot delegate onward.
        assert_eq!(book.delegate(addr(2), addr(3)), Err(ConsensusError::DelegationTooDeep));
        // 1 has delegated, so nobody may delegate to it.
        assert_eq!(book.delegate(addr(4), addr(1)), Err(ConsensusError::DelegationTooDeep));
    }

    #[test]
    fn proxy_without_vote_contributes_nothing() {
        let st = stakes(&[(1, 5), (2, 3), (3, 1)]);
        let mut book = VoteBook::new();
        book.delegate(addr(2), addr(1)).unwrap();
        book.cast_vote(addr(3), addr(9));
        let (v, d) = votes_from(&book, &st);
        let panel = elect_witness_panel(&[addr(9)].into(), &v, &d, &st, 1, 1, 0).unwrap();
        assert_eq!(panel.total_weight(), 1);
    }

    #[test]
    fn witness_draw_is_seeded() {
        let ds: BTreeSet<Address> = (1..=5).map(addr).collect();
        let st = stakes(&[(50, 1)]);
        let v = vec![Vote { voter: addr(50), target_delegate: addr(1), weight: 1 }];
        let a = elect_witness_panel(&ds, &v, &[], &st, 5, 3, 1234).unwrap();
        let b = elect_witness_panel(&ds, &v, &[], &st, 5, 3, 1234).unwrap();
        assert_eq!(a, b);
        let witnesses: BTreeSet<Address> =
            (0..64).map(|s| elect_witness_panel(&ds, &v, &[], &st, 5, 3, s).unwrap().active_witness).collect();
        assert_eq!(witnesses.len(), 5, "uniform draw should reach every panel member");
    }
}
