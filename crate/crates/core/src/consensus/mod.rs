//! Stake accounting, witness election, block production and sealing, and
//! eviction of misbehaving delegates.

mod election;
mod governance;
pub(crate) mod production;
mod stake;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::Address;
use crate::fraction::Fraction;

pub use election::{elect_witness_panel, Delegation, RankedDelegate, Vote, VoteBook, VoteIntent, WitnessPanel};
pub use governance::{
    EvictionRecord, Governance, Misbehavior, PendingReassignment, ReassignmentPolicy, Reassignment,
};
pub use production::{endorse_block, finalize_block, produce_block, EndorseRejection, Finalization};
pub use stake::StakeTable;

/// Ticks per block interval when a scenario asks for the default.
pub const DEFAULT_T_C: u64 = 5;

pub fn default_finality_fraction() -> Fraction {
    Fraction::new(2, 3).expect("non-zero denominator")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("no quorum")]
    NoQuorum,
    #[error("panel size must be positive")]
    EmptyPanel,
    #[error("voter {0} cast more than one vote")]
    DuplicateVote(Address),
    #[error("cannot delegate to self")]
    SelfDelegation,
    #[error("delegation deeper than one level")]
    DelegationTooDeep,
    #[error("not the active witness")]
    NotActiveWitness,
    #[error("unknown address {0}")]
    UnknownAddress(Address),
    #[error("unknown delegate {0}")]
    UnknownDelegate(Address),
    #[error("{0} was evicted and has not been readmitted")]
    Barred(Address),
    #[error("{0} is not a full node")]
    NotFullNode(Address),
    #[error("invalid round config: {0}")]
    InvalidRoundConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub t_c: u64,
    pub finality_fraction: Fraction,
    pub panel_size: usize,
}

impl RoundConfig {
    /// Default interval and threshold with the given panel size.
    pub fn with_panel(panel_size: usize) -> Self {
        RoundConfig { t_c: DEFAULT_T_C, finality_fraction: default_finality_fraction(), panel_size }
    }

    pub fn validate(&self) -> Result<(), ConsensusError> {
        if self.t_c == 0 {
            return Err(ConsensusError::InvalidRoundConfig("t_c must be at least 1".into()));
        }
        let f = self.finality_fraction;
        if !f.is_majority() || f.numerator() > f.denominator() {
            return Err(ConsensusError::InvalidRoundConfig(format!(
                "finality_fraction {f} must lie in (1/2, 1]"
            )));
        }
        if self.panel_size == 0 {
            return Err(ConsensusError::InvalidRoundConfig("panel_size must be positive".into()));
        }
        Ok(())
    }

    /// Round whose production tick is `tick`, if any.
    pub fn round_at(&self, tick: u64) -> Option<u64> {
        (tick > 0 && tick.is_multiple_of(self.t_c)).then(|| tick / self.t_c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_config_bounds() {
        assert!(RoundConfig::with_panel(3).validate().is_ok());
        let mut c = RoundConfig::with_panel(3);
        c.t_c = 0;
        assert!(c.validate().unwrap_err().to_string().contains("t_c"));
        c.t_c = 5;
        c.finality_fraction = "1/2".parse().unwrap();
        assert!(c.validate().is_err());
        c.finality_fraction = "1".parse().unwrap();
        assert!(c.validate().is_ok());
        c.finality_fraction = "0.51".parse().unwrap();
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rounds_fall_on_multiples() {
        let c = RoundConfig::with_panel(1);
        assert_eq!(c.round_at(0), None);
        assert_eq!(c.round_at(4), None);
        assert_eq!(c.round_at(5), Some(1));
        assert_eq!(c.round_at(30), Some(6));
    }
}
