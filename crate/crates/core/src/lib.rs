//! Permissioned delegated-proof-of-stake ledger for e-government records,
//! with a deterministic multi-node simulator.

pub mod consensus;
pub mod crypto;
pub mod fraction;
pub mod ledger;
pub mod merkle;
pub mod registry;
pub mod sim;
pub mod suite;

pub use crypto::{Address, Digest, KeyPair, PublicKey, Signature};
pub use fraction::Fraction;
