//! Per-node state: the inbox and the local accumulators derived from it.

use std::collections::BTreeMap;

use crate::collection::ShareMessage;
use crate::error::Result;
use crate::field::Fe;

/// What one computation node holds after collection.
///
/// Everything here comes from the node's own inbox; nothing else about the
/// other nodes is reachable from it.
#[derive(Clone, Debug)]
pub struct NodeState {
    id: usize,
    inbox: Vec<ShareMessage>,
    sums: BTreeMap<u64, (Fe, Fe)>,
}

/// A node's leakage-relevant view: how many envelopes arrived per key.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeView {
    pub counts: BTreeMap<u64, u64>,
}

impl NodeView {
    pub fn count(&self, key: u64) -> u64 {
        self.counts.get(&key).copied().unwrap_or(0)
    }
}

impl NodeState {
    /// Decodes a delivered inbox and sums shares per key.
    pub fn receive(id: usize, payloads: &[impl AsRef<[u8]>]) -> Result<Self> {
        let inbox = payloads
            .iter()
            .map(|p| ShareMessage::decode(p.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let mut sums: BTreeMap<u64, (Fe, Fe)> = BTreeMap::new();
        for m in &inbox {
            let e = sums.entry(m.key).or_insert((Fe::ZERO, Fe::ZERO));
            e.0 += m.flag_share;
            e.1 += m.value_share;
        }
        Ok(Self { id, inbox, sums })
    }

    /// Discards every message whose pair tag is in `tags` and recomputes the sums.
    pub fn drop_pairs(&mut self, tags: &std::collections::BTreeSet<u64>) {
        if tags.is_empty() {
            return;
        }
        self.inbox.retain(|m| !tags.contains(&m.pair_tag));
        self.sums.clear();
        for m in &self.inbox {
            let e = self.sums.entry(m.key).or_insert((Fe::ZERO, Fe::ZERO));
            e.0 += m.flag_share;
            e.1 += m.value_share;
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn inbox(&self) -> &[ShareMessage] {
        &self.inbox
    }

    /// (flag-sum share, value-sum share) for `key`; zero when nothing arrived.
    pub fn accumulate(&self, key: u64) -> (Fe, Fe) {
        self.sums.get(&key).copied().unwrap_or((Fe::ZERO, Fe::ZERO))
    }

    /// Keys with at least one envelope in this inbox.
    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.sums.keys().copied()
    }

    pub fn view(&self) -> NodeView {
        let mut counts = BTreeMap::new();
        for m in &self.inbox {
            *counts.entry(m.key).or_insert(0) += 1;
        }
        NodeView { counts }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accountant::ProtocolParams;
    use crate::collection::{client_prepare, dummy_generate, shuffle_channel, KeyValuePair, Submission, Sender};
    use crate::fixed::FixedPointCodec;
    use crate::rng::{substream, Domain};
    use rand::Rng;

    #[test]
    fn empty_inbox_accumulates_to_zero() {
        let node = NodeState::receive(0, &Vec::<[u8; 48]>::new()).unwrap();
        assert_eq!(node.accumulate(3), (Fe::ZERO, Fe::ZERO));
        assert_eq!(node.view().count(3), 0);
    }

    #[test]
    fn accumulators_sum_to_plaintext_totals() {
        let params = ProtocolParams {
            nodes: 4,
            subset: 2,
            max_keys: 3,
            key_domain: 6,
            ..ProtocolParams::default()
        };
        let codec = FixedPointCodec::new(20, 1e6).unwrap();
        for seed in 0..20 {
            let mut rng = substream(seed, Domain::Bench, 0);
            let mut freq = [0u64; 6];
            let mut sums = [0i128; 6];
            let mut subs = Vec::new();
            for client in 0..8u64 {
                let mut keys: Vec<u64> = (0..6).collect();
                let k = rng.gen_range(0..=3);
                let pairs: Vec<KeyValuePair> = (0..k)
                    .map(|_| {
                        let key = keys.swap_remove(rng.gen_range(0..keys.len()));
                        let value = rng.gen_range(-1.0..=1.0);
                        freq[key as usize] += 1;
                        sums[key as usize] += codec.to_scaled(value).unwrap();
                        KeyValuePair { key, value }
                    })
                    .collect();
                let envelopes = client_prepare(client, &pairs, &params, &codec, &mut rng).unwrap();
                subs.push(Submission { sender: Sender::Client(client), envelopes });
            }
            subs.push(Submission {
                sender: Sender::DummyGenerator(0),
                envelopes: dummy_generate(&params, &mut rng).unwrap(),
            });
            let (inboxes, _) = shuffle_channel(subs, 4, &mut rng).unwrap();
            let nodes: Vec<NodeState> = inboxes
                .iter()
                .enumerate()
                .map(|(i, b)| NodeState::receive(i, b).unwrap())
                .collect();
            for key in 0..6u64 {
                let (f, v) = nodes.iter().fold((Fe::ZERO, Fe::ZERO), |acc, n| {
                    let (a, b) = n.accumulate(key);
                    (acc.0 + a, acc.1 + b)
                });
                assert_eq!(f, Fe::from_u64(freq[key as usize]));
                assert_eq!(v, Fe::from_i128(sums[key as usize]));
            }
            for n in &nodes {
                let direct: Fe = n.inbox().iter().filter(|m| m.key == 2).map(|m| m.flag_share).sum();
                assert_eq!(n.accumulate(2).0, direct);
                assert_eq!(n.view().counts.values().sum::<u64>() as usize, n.inbox().len());
            }
        }
    }
}
