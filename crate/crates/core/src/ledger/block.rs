use serde::{Deserialize, Serialize};

use super::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{hash256, sign, Address, Digest, KeyPair, Signature, ADDRESS_LEN};
use crate::merkle::{merkle_root, MerkleTree};

/// Header format version written by this crate.
pub const BLOCK_VERSION: u32 = 1;
/// Size of the canonical header encoding.
pub const HEADER_LEN: usize = 4 + 32 + 32 + 8 + 8 + 32;

/// Reserved `record_identification` tags for records the protocol itself writes.
pub const GENESIS_TAG: &str = "genesis";
pub const TRANSFER_TAG: &str = "recovery-transfer";
pub const RETIRE_TAG: &str = "recovery-retire";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub version: u32,
    pub prev_hash: Digest,
    pub merkle_root: Digest,
    /// Simulation tick, not wall-clock time.
    pub timestamp: u64,
    /// Always zero under DPoS; kept for header layout compatibility.
    pub nonce: u64,
    /// Always the zero digest under DPoS.
    pub difficulty: Digest,
}

impl BlockHeader {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.u32(self.version)
            .raw(self.prev_hash.as_bytes())
            .raw(self.merkle_root.as_bytes())
            .u64(self.timestamp)
            .u64(self.nonce)
            .raw(self.difficulty.as_bytes());
        e.finish()
    }

    fn decode_from(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(BlockHeader {
            version: d.u32("version")?,
            prev_hash: Digest(d.array("prev_hash")?),
            merkle_root: Digest(d.array("merkle_root")?),
            timestamp: d.u64("timestamp")?,
            nonce: d.u64("nonce")?,
            difficulty: Digest(d.array("difficulty")?),
        })
    }

    pub fn from_canonical(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        let h = Self::decode_from(&mut d)?;
        d.finish()?;
        Ok(h)
    }
}

/// Hash identifying a block: SHA-256 of its canonical header.
pub fn block_hash(header: &BlockHeader) -> Digest {
    hash256(&header.canonical_bytes())
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// A signed e-government record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub user_id: String,
    #[serde(with = "hex_bytes")]
    pub record_value: Vec<u8>,
    pub record_identification: String,
    pub submitter_address: Address,
    pub submitter_signature: Signature,
    pub submitted_at: u64,
}

/// How a sealed transaction affects record ownership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordKind {
    Genesis,
    /// Ordinary record credited to its submitter.
    Ordinary,
    /// Copy of a sealed record from a retired address to its replacement.
    Transfer { old: Address, new: Address, original: Digest },
    /// Marks `old` as retired in favour of `new`.
    Retirement { old: Address, new: Address },
    /// Uses a reserved tag with a payload that does not parse.
    Malformed,
}

impl Transaction {
    /// Bytes covered by `submitter_signature`.
    pub fn signing_bytes(user_id: &str, record_value: &[u8], record_identification: &str, submitted_at: u64) -> Vec<u8> {
        let mut e = Encoder::new();
        e.prefixed(user_id.as_bytes())
            .prefixed(record_value)
            .prefixed(record_identification.as_bytes())
            .u64(submitted_at);
        e.finish()
    }

    pub fn new_signed(
        keypair: &KeyPair,
        user_id: impl Into<String>,
        record_value: Vec<u8>,
        record_identification: impl Into<String>,
        submitted_at: u64,
    ) -> Self {
        let user_id = user_id.into();
        let record_identification = record_identification.into();
        let msg = Self::signing_bytes(&user_id, &record_value, &record_identification, submitted_at);
        Transaction {
            submitter_signature: sign(keypair, &msg),
            submitter_address: keypair.address(),
            user_id,
            record_value,
            record_identification,
            submitted_at,
        }
    }

    pub fn message(&self) -> Vec<u8> {
        Self::signing_bytes(&self.user_id, &self.record_value, &self.record_identification, self.submitted_at)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode_into(&mut e);
        e.finish()
    }

    fn encode_into(&self, e: &mut Encoder) {
        e.prefixed(self.user_id.as_bytes())
            .prefixed(&self.record_value)
            .prefixed(self.record_identification.as_bytes())
            .prefixed(&self.submitter_address.0)
            .prefixed(self.submitter_signature.as_bytes())
            .u64(self.submitted_at);
    }

    fn decode_from(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let user_id = d.string("user_id")?;
        let record_value = d.prefixed("record_value")?.to_vec();
        let record_identification = d.string("record_identification")?;
        let addr = d.prefixed("submitter_address")?;
        let submitter_address = Address(
            addr.try_into().map_err(|_| DecodeError::Invalid { field: "submitter_address" })?,
        );
        let submitter_signature = Signature(d.prefixed("submitter_signature")?.to_vec());
        let submitted_at = d.u64("submitted_at")?;
        Ok(Transaction {
            user_id,
            record_value,
            record_identification,
            submitter_address,
            submitter_signature,
            submitted_at,
        })
    }

    pub fn from_canonical(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        let tx = Self::decode_from(&mut d)?;
        d.finish()?;
        Ok(tx)
    }

    /// Merkle leaf hash.
    pub fn hash(&self) -> Digest {
        hash256(&self.canonical_bytes())
    }

    pub fn kind(&self) -> RecordKind {
        let addr = |b: &[u8]| Address(b.try_into().expect("slice length checked"));
        let v = &self.record_value;
        match self.record_identification.as_str() {
            GENESIS_TAG => RecordKind::Genesis,
            TRANSFER_TAG if v.len() == 2 * ADDRESS_LEN + 32 => RecordKind::Transfer {
                old: addr(&v[..ADDRESS_LEN]),
                new: addr(&v[ADDRESS_LEN..2 * ADDRESS_LEN]),
                original: Digest(v[2 * ADDRESS_LEN..].try_into().expect("length checked")),
            },
            RETIRE_TAG if v.len() == 2 * ADDRESS_LEN => RecordKind::Retirement {
                old: addr(&v[..ADDRESS_LEN]),
                new: addr(&v[ADDRESS_LEN..]),
            },
            TRANSFER_TAG | RETIRE_TAG => RecordKind::Malformed,
            _ => RecordKind::Ordinary,
        }
    }

    /// The address whose record count (and therefore stake) this
    /// transaction increments once sealed.
    pub fn credited_address(&self) -> Option<Address> {
        match self.kind() {
            RecordKind::Ordinary => Some(self.submitter_address),
            RecordKind::Transfer { new, .. } => Some(new),
            RecordKind::Genesis | RecordKind::Retirement { .. } | RecordKind::Malformed => None,
        }
    }

    pub fn transfer_payload(old: &Address, new: &Address, original: &Digest) -> Vec<u8> {
        [&old.0[..], &new.0[..], &original.0[..]].concat()
    }

    pub fn retirement_payload(old: &Address, new: &Address) -> Vec<u8> {
        [&old.0[..], &new.0[..]].concat()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endorsement {
    pub endorser: Address,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
    pub witness_address: Address,
    pub witness_signature: Signature,
    pub endorsements: Vec<Endorsement>,
}

impl Block {
    pub fn hash(&self) -> Digest {
        block_hash(&self.header)
    }

    pub fn transaction_bytes(&self) -> Vec<Vec<u8>> {
        self.transactions.iter().map(Transaction::canonical_bytes).collect()
    }

    pub fn compute_merkle_root(&self) -> Digest {
        merkle_root(&self.transaction_bytes())
    }

    pub fn merkle_tree(&self) -> MerkleTree {
        MerkleTree::from_transactions(&self.transaction_bytes())
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.raw(&self.header.canonical_bytes());
        e.u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            tx.encode_into(&mut e);
        }
        e.raw(&self.witness_address.0);
        e.prefixed(self.witness_signature.as_bytes());
        e.u32(self.endorsements.len() as u32);
        for en in &self.endorsements {
            e.raw(&en.endorser.0);
            e.prefixed(en.signature.as_bytes());
        }
        e.finish()
    }

    pub fn from_canonical(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        let header = BlockHeader::decode_from(&mut d)?;
        let tx_count = d.u32("tx_count")? as usize;
        // Each transaction needs at least 28 bytes; reject absurd counts early.
        if tx_count > d.remaining() / 28 + 1 {
            return Err(DecodeError::Invalid { field: "tx_count" });
        }
        let mut transactions = Vec::with_capacity(tx_count);
        for _ in 0..tx_count {
            transactions.push(Transaction::decode_from(&mut d)?);
        }
        let witness_address = Address(d.array("witness_address")?);
        let witness_signature = Signature(d.prefixed("witness_signature")?.to_vec());
        let en_count = d.u32("endorsement_count")? as usize;
        if en_count > d.remaining() / 24 + 1 {
            return Err(DecodeError::Invalid { field: "endorsement_count" });
        }
        let mut endorsements = Vec::with_capacity(en_count);
        for _ in 0..en_count {
            let endorser = Address(d.array("endorser")?);
            let signature = Signature(d.prefixed("endorsement_signature")?.to_vec());
            endorsements.push(Endorsement { endorser, signature });
        }
        d.finish()?;
        Ok(Block { header, transactions, witness_address, witness_signature, endorsements })
    }
}

/// Fixed parameters every node of one network agrees on before tick 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub name: String,
    pub version: u32,
    /// Fixed bytes embedded in the genesis block.
    #[serde(with = "hex_bytes")]
    pub genesis_payload: Vec<u8>,
}

/// Builds the hard-coded first block: zero parent, one synthetic record
/// carrying the configured payload, no witness.
pub fn create_genesis(config: &NetworkConfig) -> Block {
    let tx = Transaction {
        user_id: GENESIS_TAG.to_string(),
        record_value: config.genesis_payload.clone(),
        record_identification: GENESIS_TAG.to_string(),
        submitter_address: Address::ZERO,
        submitter_signature: Signature::default(),
        submitted_at: 0,
    };
    let merkle_root = merkle_root(&[tx.canonical_bytes()]);
    Block {
        header: BlockHeader {
            version: config.version,
            prev_hash: Digest::ZERO,
            merkle_root,
            timestamp: 0,
            nonce: 0,
            difficulty: Digest::ZERO,
        },
        transactions: vec![tx],
        witness_address: Address::ZERO,
        witness_signature: Signature::default(),
        endorsements: Vec::new(),
    }
}
