//! Round-based message bus with byte accounting.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::collection::{Inbox, SHARE_MESSAGE_BYTES};
use crate::error::{Error, Result};
use crate::field::{Fp, Modulus};
use crate::runtime::shared::Shared;

/// Link bandwidth used for the serialization term, in bits per second.
pub const LINK_BANDWIDTH_BPS: f64 = 1e9;

/// Nominal one-way delays for the three deployment scenarios.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum LatencyPreset {
    Local,
    Remote,
    Distant,
}

impl LatencyPreset {
    pub const ALL: [LatencyPreset; 3] = [Self::Local, Self::Remote, Self::Distant];

    pub fn one_way_ms(self) -> f64 {
        match self {
            Self::Local => 0.5,
            Self::Remote => 25.0,
            Self::Distant => 45.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Local => "local",
            Self::Remote => "remote",
            Self::Distant => "distant",
        }
    }
}

impl fmt::Display for LatencyPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LatencyPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "local" => Ok(Self::Local),
            "remote" => Ok(Self::Remote),
            "distant" => Ok(Self::Distant),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected local, remote or distant)"
            ))),
        }
    }
}

/// Delay function for a preset: every link has the same one-way delay.
pub fn latency_model(preset: LatencyPreset) -> impl Fn(usize, usize) -> f64 {
    move |_from, _to| preset.one_way_ms()
}

/// Who receives the shares broadcast by an opening.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Audience {
    /// Only the value's own holders.
    Holders,
    /// Every computation node.
    All,
}

/// Communication counters for one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptMetrics {
    pub nodes: usize,
    /// `link_bytes[from * nodes + to]` between computation nodes.
    pub link_bytes: Vec<u64>,
    /// One message per share sent between nodes.
    pub messages: u64,
    pub rounds: u64,
    pub client_bytes: u64,
    pub client_elements: u64,
    pub client_messages: u64,
}

impl TranscriptMetrics {
    pub fn new(nodes: usize) -> Self {
        Self {
            nodes,
            link_bytes: vec![0; nodes * nodes],
            messages: 0,
            rounds: 0,
            client_bytes: 0,
            client_elements: 0,
            client_messages: 0,
        }
    }

    pub fn link(&self, from: usize, to: usize) -> u64 {
        self.link_bytes[from * self.nodes + to]
    }

    pub fn node_bytes(&self) -> u64 {
        self.link_bytes.iter().sum()
    }

    /// Node-to-node plus client-to-node bytes.
    pub fn bytes_total(&self) -> u64 {
        self.node_bytes() + self.client_bytes
    }

    pub fn max_link_bytes(&self) -> u64 {
        self.link_bytes.iter().copied().max().unwrap_or(0)
    }

    pub fn latency_term_ms(&self, preset: LatencyPreset) -> f64 {
        let delay = latency_model(preset);
        let max_delay = (0..self.nodes)
            .flat_map(|a| (0..self.nodes).map(move |b| (a, b)))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| delay(a, b))
            .fold(preset.one_way_ms(), f64::max);
        self.rounds as f64 * max_delay
    }

    pub fn serialization_term_ms(&self) -> f64 {
        self.max_link_bytes() as f64 * 8.0 / LINK_BANDWIDTH_BPS * 1e3
    }

    /// Model time: rounds times the largest link delay, plus the busiest link's
    /// transfer time at [`LINK_BANDWIDTH_BPS`].
    pub fn model_time_ms(&self, preset: LatencyPreset) -> f64 {
        self.latency_term_ms(preset) + self.serialization_term_ms()
    }

    /// Folds in an independent per-key transcript that ran concurrently: bytes
    /// and messages add up, rounds overlap.
    pub fn merge_parallel(&mut self, other: &TranscriptMetrics) {
        assert_eq!(self.nodes, other.nodes);
        for (a, b) in self.link_bytes.iter_mut().zip(&other.link_bytes) {
            *a += b;
        }
        self.messages += other.messages;
        self.rounds = self.rounds.max(other.rounds);
        self.client_bytes += other.client_bytes;
        self.client_elements += other.client_elements;
        self.client_messages += other.client_messages;
    }

    /// Appends a transcript that ran after this one.
    pub fn merge_sequential(&mut self, other: &TranscriptMetrics) {
        let rounds = self.rounds + other.rounds;
        self.merge_parallel(other);
        self.rounds = rounds;
    }
}

/// The simulated network between computation nodes.
///
/// Every call to [`Bus::open_many`] is one synchronous round: all holders
/// send their shares, then the barrier delivers them in (sender, value) order.
#[derive(Debug)]
pub struct Bus {
    metrics: TranscriptMetrics,
    audit: bool,
    consumed: HashSet<u64>,
    silent: Option<usize>,
    views: Option<Vec<Vec<u128>>>,
}

impl Bus {
    pub fn new(nodes: usize) -> Self {
        Self {
            metrics: TranscriptMetrics::new(nodes),
            audit: false,
            consumed: HashSet::new(),
            silent: None,
            views: None,
        }
    }

    /// Check every consumed triple against its product invariant.
    pub fn with_audit(mut self, audit: bool) -> Self {
        self.audit = audit;
        self
    }

    /// Keep a per-node log of every value it learns from an opening.
    pub fn with_views(mut self) -> Self {
        self.views = Some(vec![Vec::new(); self.metrics.nodes]);
        self
    }

    /// Makes `holder` drop out: its next contribution never arrives.
    pub fn silence(&mut self, holder: usize) {
        self.silent = Some(holder);
    }

    pub fn nodes(&self) -> usize {
        self.metrics.nodes
    }

    pub fn audit(&self) -> bool {
        self.audit
    }

    pub fn metrics(&self) -> &TranscriptMetrics {
        &self.metrics
    }

    pub fn into_metrics(self) -> TranscriptMetrics {
        self.metrics
    }

    /// Opened values node `id` has seen, in delivery order.
    pub fn view(&self, id: usize) -> Option<&[u128]> {
        self.views.as_ref().map(|v| v[id].as_slice())
    }

    /// Records the shuffler delivering client envelopes to the nodes.
    pub fn deliver_from_clients(&mut self, inboxes: &[Inbox]) {
        let total: usize = inboxes.iter().map(Vec::len).sum();
        self.metrics.client_messages += total as u64;
        self.metrics.client_bytes += (total * SHARE_MESSAGE_BYTES) as u64;
        self.metrics.client_elements += 2 * total as u64;
        self.metrics.rounds += 1;
    }

    /// Marks a triple as used; a second use is a protocol error.
    pub fn consume_triple(&mut self, id: u64) -> Result<()> {
        if !self.consumed.insert(id) {
            return Err(Error::Protocol(format!("beaver triple {id} reused")));
        }
        Ok(())
    }

    /// Opens a batch of values in one round.
    pub fn open_many<M: Modulus>(
        &mut self,
        values: &[&Shared<M>],
        audience: Audience,
    ) -> Result<Vec<Fp<M>>> {
        if values.is_empty() {
            return Ok(Vec::new());
        }
        let nodes = self.metrics.nodes;
        for v in values {
            if let Some(&bad) = v.holders().iter().find(|&&h| h >= nodes) {
                return Err(Error::Protocol(format!("holder {bad} outside {nodes} nodes")));
            }
            if let Some(s) = self.silent {
                if v.holders().contains(&s) {
                    return Err(Error::Stall { holder: s });
                }
            }
        }
        let all: Vec<usize> = (0..nodes).collect();
        let mut out = Vec::with_capacity(values.len());
        for v in values {
            let receivers = match audience {
                Audience::Holders => v.holders(),
                Audience::All => &all,
            };
            for &from in v.holders() {
                for &to in receivers {
                    if from != to {
                        self.metrics.link_bytes[from * nodes + to] += M::BYTES as u64;
                        self.metrics.messages += 1;
                    }
                }
            }
            let value = v.reconstruct_oracle();
            if let Some(views) = self.views.as_mut() {
                for &to in receivers {
                    views[to].push(value.value());
                }
            }
            out.push(value);
        }
        self.metrics.rounds += 1;
        Ok(out)
    }

    pub fn open<M: Modulus>(&mut self, value: &Shared<M>, audience: Audience) -> Result<Fp<M>> {
        Ok(self.open_many(&[value], audience)?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Fe, M127};
    use crate::rng::{substream, Domain};
    use crate::sharing::share;

    fn shared(x: Fe, n: usize, seed: u64) -> Shared<M127> {
        let mut rng = substream(seed, Domain::Bench, 0);
        Shared::from_shares(&share(x, n, &mut rng).unwrap()).unwrap()
    }

    #[test]
    fn open_round_trips() {
        let mut rng = substream(9, Domain::Bench, 1);
        for x in [Fe::ZERO, Fe::ONE, Fe::random(&mut rng)] {
            let mut bus = Bus::new(3);
            assert_eq!(bus.open(&shared(x, 3, 4), Audience::All).unwrap(), x);
        }
    }

    #[test]
    fn open_accounts_bytes_and_rounds() {
        let mut bus = Bus::new(4);
        let a = shared(Fe::new(5), 4, 1);
        let b = shared(Fe::new(6), 4, 2);
        bus.open_many(&[&a, &b], Audience::All).unwrap();
        let m = bus.metrics();
        assert_eq!(m.rounds, 1);
        assert_eq!(m.messages, 2 * 4 * 3);
        assert_eq!(m.node_bytes(), 2 * 4 * 3 * 16);
        assert_eq!(m.link(0, 1), 32);
        assert_eq!(m.link(2, 2), 0);
    }

    #[test]
    fn holder_only_opening_stays_inside_the_subset() {
        let mut rng = substream(3, Domain::Bench, 0);
        let s = crate::sharing::share_among(Fe::new(9), &[1, 3], &mut rng).unwrap();
        let mut bus = Bus::new(4).with_views();
        bus.open(&Shared::from_shares(&s).unwrap(), Audience::Holders).unwrap();
        assert_eq!(bus.metrics().link(1, 3), 16);
        assert_eq!(bus.metrics().link(3, 1), 16);
        assert_eq!(bus.metrics().node_bytes(), 32);
        assert!(bus.view(0).unwrap().is_empty());
        assert_eq!(bus.view(3).unwrap(), &[9]);
    }

    #[test]
    fn missing_contribution_stalls() {
        let mut bus = Bus::new(3);
        bus.silence(2);
        match bus.open(&shared(Fe::ONE, 3, 1), Audience::All) {
            Err(Error::Stall { holder }) => assert_eq!(holder, 2),
            other => panic!("expected stall, got {other:?}"),
        }
    }

    #[test]
    fn triple_reuse_is_detected() {
        let mut bus = Bus::new(2);
        bus.consume_triple(7).unwrap();
        assert!(bus.consume_triple(7).is_err());
    }

    #[test]
    fn latency_presets_order_and_scale() {
        let mut m = TranscriptMetrics::new(3);
        m.rounds = 10;
        m.link_bytes[1] = 1_000_000;
        let t: Vec<f64> = LatencyPreset::ALL.iter().map(|&p| m.model_time_ms(p)).collect();
        assert!(t[0] < t[1] && t[1] < t[2]);
        let mut doubled = m.clone();
        doubled.rounds = 20;
        for p in LatencyPreset::ALL {
            assert!((doubled.latency_term_ms(p) - 2.0 * m.latency_term_ms(p)).abs() < 1e-12);
            assert_eq!(doubled.bytes_total(), m.bytes_total());
        }
        assert!((m.serialization_term_ms() - 8.0).abs() < 1e-12);
        assert_eq!("Remote".parse::<LatencyPreset>().unwrap(), LatencyPreset::Remote);
        assert!("lunar".parse::<LatencyPreset>().is_err());
    }

    #[test]
    fn merging_parallel_transcripts() {
        let mut a = TranscriptMetrics::new(2);
        a.rounds = 3;
        a.link_bytes[1] = 10;
        let mut b = a.clone();
        b.rounds = 5;
        a.merge_parallel(&b);
        assert_eq!((a.rounds, a.link_bytes[1]), (5, 20));
        a.merge_sequential(&b);
        assert_eq!((a.rounds, a.link_bytes[1]), (10, 30));
    }
}
