//! Client-side sharing, dummy generation and the anonymising shuffler.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::accountant::ProtocolParams;
use crate::distributions::GeometricParams;
use crate::error::{Error, Result};
use crate::field::Fe;
use crate::fixed::FixedPointCodec;
use crate::sharing::share_among;

/// One client's key-value pair; keys are dense indices into the key domain.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct KeyValuePair {
    pub key: u64,
    pub value: f64,
}

/// Serialized size of a [`ShareMessage`].
pub const SHARE_MESSAGE_BYTES: usize = 8 + 8 + 2 * 16;

/// What a node receives for one pair: the key in the clear, plus shares of
/// the flag and the value.
///
/// `pair_tag` is a random per-pair nonce shared by the `t` messages of the same
/// pair so its recipients can run the input-validation check together.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ShareMessage {
    pub pair_tag: u64,
    pub key: u64,
    pub flag_share: Fe,
    pub value_share: Fe,
}

impl ShareMessage {
    /// `tag | key | flag | value`, little-endian.
    pub fn encode(&self) -> [u8; SHARE_MESSAGE_BYTES] {
        let mut out = [0u8; SHARE_MESSAGE_BYTES];
        out[0..8].copy_from_slice(&self.pair_tag.to_le_bytes());
        out[8..16].copy_from_slice(&self.key.to_le_bytes());
        out[16..32].copy_from_slice(&self.flag_share.value().to_le_bytes());
        out[32..48].copy_from_slice(&self.value_share.value().to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != SHARE_MESSAGE_BYTES {
            return Err(Error::Decode(format!(
                "share message must be {SHARE_MESSAGE_BYTES} bytes, got {}",
                bytes.len()
            )));
        }
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        Ok(Self {
            pair_tag: u64_at(0),
            key: u64_at(8),
            flag_share: Fe::from_le_bytes(&bytes[16..32])?,
            value_share: Fe::from_le_bytes(&bytes[32..48])?,
        })
    }
}

/// An addressed, opaque payload. Carries nothing about its origin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    recipient: usize,
    payload: [u8; SHARE_MESSAGE_BYTES],
}

impl Envelope {
    pub fn recipient(&self) -> usize {
        self.recipient
    }

    /// Only the addressed node is meant to open this.
    pub fn payload(&self) -> &[u8; SHARE_MESSAGE_BYTES] {
        &self.payload
    }
}

/// Who handed a batch of envelopes to the shuffler.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sender {
    Client(u64),
    DummyGenerator(u32),
}

/// One sender's batch as seen by the shuffler.
#[derive(Clone, Debug)]
pub struct Submission {
    pub sender: Sender,
    pub envelopes: Vec<Envelope>,
}

/// Everything the shuffler learns: how many envelopes each sender handed over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShufflerView {
    pub counts: Vec<(Sender, usize)>,
}

/// Uniform `t`-subset of `0..nodes` by partial Fisher-Yates.
pub fn choose_subset<R: Rng + ?Sized>(nodes: usize, t: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..nodes).collect();
    for i in 0..t {
        let j = rng.gen_range(i..nodes);
        pool.swap(i, j);
    }
    pool.truncate(t);
    pool
}

pub(crate) fn share_pair<R: Rng + ?Sized>(
    key: u64,
    flag: Fe,
    value: Fe,
    params: &ProtocolParams,
    rng: &mut R,
    out: &mut Vec<Envelope>,
) -> Result<()> {
    let holders = choose_subset(params.nodes, params.subset, rng);
    let pair_tag: u64 = rng.gen();
    let flags = share_among(flag, &holders, rng)?;
    let values = share_among(value, &holders, rng)?;
    for (f, v) in flags.iter().zip(&values) {
        let msg = ShareMessage {
            pair_tag,
            key,
            flag_share: f.element,
            value_share: v.element,
        };
        out.push(Envelope {
            recipient: f.holder,
            payload: msg.encode(),
        });
    }
    Ok(())
}

/// Shares each of a client's pairs to a fresh uniform `t`-subset of nodes.
pub fn client_prepare<R: Rng + ?Sized>(
    client: u64,
    pairs: &[KeyValuePair],
    params: &ProtocolParams,
    codec: &FixedPointCodec,
    rng: &mut R,
) -> Result<Vec<Envelope>> {
    let reject = |reason: String| Error::InvalidClient {
        client: client.to_string(),
        reason,
    };
    if pairs.len() > params.max_keys as usize {
        return Err(reject(format!(
            "{} pairs exceed the limit of {}",
            pairs.len(),
            params.max_keys
        )));
    }
    let mut seen = HashSet::with_capacity(pairs.len());
    for pair in pairs {
        if pair.key >= params.key_domain as u64 {
            return Err(reject(format!("key {} outside domain of size {}", pair.key, params.key_domain)));
        }
        if !seen.insert(pair.key) {
            return Err(reject(format!("key {} appears more than once", pair.key)));
        }
        let (low, high) = (params.center - params.half_range, params.center + params.half_range);
        if !(pair.value >= low && pair.value <= high) {
            return Err(reject(format!(
                "value {} for key {} outside [{low}, {high}]",
                pair.value, pair.key
            )));
        }
    }
    let mut out = Vec::with_capacity(pairs.len() * params.subset);
    for pair in pairs {
        let value = codec.encode(pair.value)?;
        share_pair(pair.key, Fe::ONE, value, params, rng, &mut out)?;
    }
    Ok(out)
}

/// Geometric number of flag-0, value-0 pairs for every key.
pub fn dummy_generate<R: Rng + ?Sized>(params: &ProtocolParams, rng: &mut R) -> Result<Vec<Envelope>> {
    let geometric = GeometricParams::new(params.rate)?;
    let mut out = Vec::new();
    for key in 0..params.key_domain as u64 {
        let count = geometric.sample(rng);
        for _ in 0..count {
            share_pair(key, Fe::ZERO, Fe::ZERO, params, rng, &mut out)?;
        }
    }
    Ok(out)
}

/// Union of `d` independent dummy batches.
pub fn multi_party_dummy_generate<R: Rng + ?Sized>(
    d: usize,
    params: &ProtocolParams,
    rng: &mut R,
) -> Result<Vec<Envelope>> {
    if d < 1 {
        return Err(crate::error::invalid("need at least one dummy generator"));
    }
    let mut out = Vec::new();
    for _ in 0..d {
        out.extend(dummy_generate(params, rng)?);
    }
    Ok(out)
}

/// Per-node inboxes of raw payloads.
pub type Inbox = Vec<[u8; SHARE_MESSAGE_BYTES]>;

/// Strips sender identity, routes payloads to their recipients and shuffles
/// each inbox uniformly.
pub fn shuffle_channel<R: Rng + ?Sized>(
    submissions: Vec<Submission>,
    nodes: usize,
    rng: &mut R,
) -> Result<(Vec<Inbox>, ShufflerView)> {
    let mut inboxes: Vec<Inbox> = vec![Vec::new(); nodes];
    let mut counts = Vec::with_capacity(submissions.len());
    for submission in submissions {
        counts.push((submission.sender, submission.envelopes.len()));
        for envelope in submission.envelopes {
            let Some(inbox) = inboxes.get_mut(envelope.recipient) else {
                return Err(Error::Protocol(format!(
                    "envelope addressed to node {} of {nodes}",
                    envelope.recipient
                )));
            };
            inbox.push(envelope.payload);
        }
    }
    for inbox in &mut inboxes {
        inbox.shuffle(rng);
    }
    Ok((inboxes, ShufflerView { counts }))
}
