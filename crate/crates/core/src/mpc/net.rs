//! Simulated point-to-point channels between parties and the arithmetic
//! black box, with a transcript of every message.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, VecDeque};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::field::Fp;
use super::MpcError;
use crate::ir::PartyId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Party(PartyId),
    Abb,
}

/// What a transmitted value is, from the receiver's point of view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgClass {
    /// A uniformly random share.
    FreshShare,
    /// A party's share handed to the black box.
    AbbInput,
    /// Shares sent so the receiver can reconstruct a ledgered value.
    Reveal,
    /// Public data: cardinalities, permutations, index lists, public keys.
    Public,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Field(Vec<Fp>),
    Ints(Vec<i64>),
}

impl Payload {
    pub fn bytes(&self) -> usize {
        match self {
            Payload::Field(v) => v.len() * 8,
            Payload::Ints(v) => v.len() * 8,
        }
    }

    fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        match self {
            Payload::Field(v) => v.iter().for_each(|x| x.raw().hash(&mut h)),
            Payload::Ints(v) => v.hash(&mut h),
        }
        h.finish()
    }

    pub fn into_field(self) -> Vec<Fp> {
        match self {
            Payload::Field(v) => v,
            Payload::Ints(v) => v.into_iter().map(Fp::encode).collect(),
        }
    }

    pub fn into_ints(self) -> Vec<i64> {
        match self {
            Payload::Ints(v) => v,
            Payload::Field(v) => v.into_iter().map(Fp::decode).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub seq: usize,
    pub step: String,
    pub sender: Endpoint,
    pub receiver: Endpoint,
    pub class: MsgClass,
    pub bytes: usize,
    pub digest: u64,
}

/// Ordered channels keyed by `(sender, receiver)`.
#[derive(Debug, Default)]
pub struct Network {
    queues: BTreeMap<(Endpoint, Endpoint), VecDeque<(MsgClass, Payload)>>,
    pub transcript: Vec<TranscriptRecord>,
}

impl Network {
    pub fn send(&mut self, step: &str, from: Endpoint, to: Endpoint, class: MsgClass, payload: Payload) {
        self.transcript.push(TranscriptRecord {
            seq: self.transcript.len(),
            step: step.to_string(),
            sender: from,
            receiver: to,
            class,
            bytes: payload.bytes(),
            digest: payload.digest(),
        });
        self.queues.entry((from, to)).or_default().push_back((class, payload));
    }

    pub fn recv(&mut self, step: &str, to: Endpoint, from: Endpoint, class: MsgClass) -> Result<Payload, MpcError> {
        let (got, payload) = self
            .queues
            .get_mut(&(from, to))
            .and_then(|q| q.pop_front())
            .ok_or_else(|| MpcError::Deadlock { step: step.to_string() })?;
        if got != class {
            return Err(MpcError::Protocol(format!("{step}: expected {class:?} message, got {got:?}")));
        }
        Ok(payload)
    }

    /// True when every sent message has been received.
    pub fn drained(&self) -> bool {
        self.queues.values().all(|q| q.is_empty())
    }

    /// Messages a party sent or received.
    pub fn view(&self, party: PartyId) -> Vec<&TranscriptRecord> {
        let me = Endpoint::Party(party);
        self.transcript.iter().filter(|r| r.sender == me || r.receiver == me).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recv_on_empty_channel_deadlocks() {
        let mut net = Network::default();
        let a = Endpoint::Party(PartyId(0));
        let err = net.recv("s1", a, Endpoint::Abb, MsgClass::FreshShare).unwrap_err();
        assert_eq!(err, MpcError::Deadlock { step: "s1".into() });
    }

    #[test]
    fn channels_are_fifo_and_logged() {
        let mut net = Network::default();
        let (a, b) = (Endpoint::Party(PartyId(0)), Endpoint::Party(PartyId(1)));
        net.send("s", a, b, MsgClass::Public, Payload::Ints(vec![1]));
        net.send("s", a, b, MsgClass::Public, Payload::Ints(vec![2, 3]));
        assert_eq!(net.recv("s", b, a, MsgClass::Public).unwrap(), Payload::Ints(vec![1]));
        assert_eq!(net.recv("s", b, a, MsgClass::Public).unwrap(), Payload::Ints(vec![2, 3]));
        assert!(net.drained());
        assert_eq!(net.transcript[1].bytes, 16);
        assert_eq!(net.view(PartyId(1)).len(), 2);
        assert!(net.view(PartyId(2)).is_empty());
    }
}
