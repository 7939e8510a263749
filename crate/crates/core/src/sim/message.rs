use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::{hash256, Address, Digest, Signature};
use crate::ledger::codec::{DecodeError, Decoder, Encoder};
use crate::ledger::Endorsement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    RegistrationRequest,
    RegistrationBroadcast,
    WalletBroadcast,
    TransactionSubmit,
    BlockProposal,
    BlockEndorsement,
    BlockBroadcast,
    HeaderBroadcast,
}

/// Node ids are roster positions; the flooder and other off-roster senders
/// use ids past the roster.
pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub sender: NodeId,
    pub recipient: NodeId,
    pub payload: Vec<u8>,
    pub deliver_at: u64,
}

impl Message {
    /// Delivery order within a tick: sender, then payload hash, then
    /// recipient, so the order never depends on enqueue order.
    pub fn order_key(&self) -> (u64, NodeId, Digest, NodeId, MessageKind) {
        (self.deliver_at, self.sender, hash256(&self.payload), self.recipient, self.kind)
    }
}

/// Pending messages keyed by delivery tick.
#[derive(Debug, Clone, Default)]
pub struct MessageQueue {
    due: BTreeMap<u64, Vec<Message>>,
    sent: BTreeMap<MessageKind, u64>,
}

impl MessageQueue {
    pub fn push(&mut self, message: Message) {
        *self.sent.entry(message.kind).or_default() += 1;
        self.due.entry(message.deliver_at).or_default().push(message);
    }

    /// Removes and returns every message due at `tick`, sorted.
    pub fn take_due(&mut self, tick: u64) -> Vec<Message> {
        let mut msgs = self.due.remove(&tick).unwrap_or_default();
        msgs.sort_by_cached_key(Message::order_key);
        msgs
    }

    pub fn is_empty(&self) -> bool {
        self.due.values().all(Vec::is_empty)
    }

    pub fn last_due(&self) -> Option<u64> {
        self.due.keys().next_back().copied()
    }

    pub fn sent_counts(&self) -> &BTreeMap<MessageKind, u64> {
        &self.sent
    }
}

/// Canonical endorsement payload: block hash, endorser, signature.
pub fn encode_endorsement(block_hash: &Digest, e: &Endorsement) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.raw(block_hash.as_bytes()).raw(&e.endorser.0).prefixed(e.signature.as_bytes());
    enc.finish()
}

pub fn decode_endorsement(bytes: &[u8]) -> Result<(Digest, Endorsement), DecodeError> {
    let mut d = Decoder::new(bytes);
    let hash = Digest(d.array("block_hash")?);
    let endorser = Address(d.array("endorser")?);
    let signature = Signature(d.prefixed("signature")?.to_vec());
    d.finish()?;
    Ok((hash, Endorsement { endorser, signature }))
}
