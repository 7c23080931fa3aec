//! Frequency and mean estimation over the simulated nodes, end to end.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::accountant::{default_divisor_bound, fmt_f, PrivacyReport, ProtocolParams, Statistic};
use crate::collection::{client_prepare, dummy_generate, shuffle_channel, Sender, Submission};
use crate::dataset::{ClientRecord, Dataset};
use crate::error::{invalid, Result};
use crate::field::Fe;
use crate::fixed::{FixedPointCodec, DEFAULT_FRAC_BITS};
use crate::rng::{substream, substream2, Domain, SimRng};
use crate::runtime::{
    distributed_laplace, fixed_div_many, validate_flags, Audience, Bus, Dealer, DivisionPlan,
    NodeState, Shared, TranscriptMetrics,
};

/// Magnitude bound of the run codec; leaves room for noise tails.
pub const CODEC_RANGE: f64 = (1u64 << 60) as f64;

/// Codec used for values, noise and outputs in a run.
pub fn run_codec() -> Result<FixedPointCodec> {
    FixedPointCodec::new(DEFAULT_FRAC_BITS, CODEC_RANGE)
}

/// Which keys to release.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeySelection {
    All,
    Subset(Vec<u64>),
}

impl KeySelection {
    pub fn resolve(&self, key_domain: usize) -> Result<Vec<u64>> {
        match self {
            Self::All => Ok((0..key_domain as u64).collect()),
            Self::Subset(keys) => {
                let set: BTreeSet<u64> = keys.iter().copied().collect();
                if let Some(&k) = set.iter().find(|&&k| k >= key_domain as u64) {
                    return Err(invalid(format!("requested key {k} outside domain of size {key_domain}")));
                }
                Ok(set.into_iter().collect())
            }
        }
    }
}

/// How per-key instances are scheduled. Both give identical outputs.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Execution {
    /// All keys share one bus; each round carries every key.
    Batched,
    /// Each key runs on its own bus on the worker pool.
    Parallel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatisticsRequest {
    pub statistic: Statistic,
    pub keys: KeySelection,
    /// Without output noise only the leakage budget is spent.
    pub noise: bool,
    pub beta_conf: f64,
    /// Run the flag check on every delivered pair before aggregating.
    pub validate_inputs: bool,
    pub dummies: bool,
    /// Draw the output noise before any data arrives.
    pub offline_noise: bool,
    pub execution: Execution,
    /// Overrides the default public divisor bound.
    pub divisor_bound: Option<u64>,
    /// Dealer-side triple audit.
    pub audit: bool,
}

impl Default for StatisticsRequest {
    fn default() -> Self {
        Self {
            statistic: Statistic::Both,
            keys: KeySelection::All,
            noise: true,
            beta_conf: 0.05,
            validate_inputs: false,
            dummies: true,
            offline_noise: false,
            execution: Execution::Batched,
            divisor_bound: None,
            audit: false,
        }
    }
}

/// Output noise of one statistic.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum NoiseKind {
    Frequency = 0,
    Mean = 1,
}

/// Shares of the Laplace noise for `key`, every node drawing from its own
/// `(node, key, kind)` stream.
pub fn noise_shares(
    seed: u64,
    key: u64,
    kind: NoiseKind,
    params: &ProtocolParams,
    codec: &FixedPointCodec,
) -> Result<Shared> {
    let (sensitivity, eps) = match kind {
        NoiseKind::Frequency => (params.sensitivity_frequency(), params.eps_freq),
        NoiseKind::Mean => (params.sensitivity_mean(), params.eps_mean),
    };
    let mut rngs: Vec<SimRng> = (0..params.nodes as u64)
        .map(|i| substream2(seed, Domain::Noise, i, 2 * key + kind as u64))
        .collect();
    distributed_laplace(sensitivity, eps, codec, &mut rngs)
}

/// Noise shares prepared ahead of collection, per key and kind.
#[derive(Clone, Debug, Default)]
pub struct NoiseBank {
    shares: BTreeMap<(NoiseKind, u64), Shared>,
}

impl NoiseBank {
    pub fn prepare(
        seed: u64,
        keys: &[u64],
        params: &ProtocolParams,
        statistic: Statistic,
        codec: &FixedPointCodec,
    ) -> Result<Self> {
        let mut shares = BTreeMap::new();
        for &key in keys {
            if statistic.frequency() {
                shares.insert((NoiseKind::Frequency, key), noise_shares(seed, key, NoiseKind::Frequency, params, codec)?);
            }
            if statistic.mean() {
                shares.insert((NoiseKind::Mean, key), noise_shares(seed, key, NoiseKind::Mean, params, codec)?);
            }
        }
        Ok(Self { shares })
    }

    pub fn get(&self, kind: NoiseKind, key: u64) -> Option<&Shared> {
        self.shares.get(&(kind, key))
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }
}

/// Where output noise comes from during a run.
#[derive(Copy, Clone, Debug)]
pub struct NoiseSource<'a> {
    pub seed: u64,
    pub enabled: bool,
    pub bank: Option<&'a NoiseBank>,
    pub params: &'a ProtocolParams,
    pub codec: &'a FixedPointCodec,
}

impl NoiseSource<'_> {
    fn shares(&self, kind: NoiseKind, key: u64) -> Result<Option<Shared>> {
        if !self.enabled {
            return Ok(None);
        }
        if let Some(s) = self.bank.and_then(|b| b.get(kind, key)) {
            return Ok(Some(s.clone()));
        }
        noise_shares(self.seed, key, kind, self.params, self.codec).map(Some)
    }
}

fn all_nodes(nodes: &[NodeState]) -> Vec<usize> {
    (0..nodes.len()).collect()
}

fn flag_sum(nodes: &[NodeState], key: u64) -> Result<Shared> {
    Shared::new(all_nodes(nodes), nodes.iter().map(|n| n.accumulate(key).0).collect())
}

fn value_sum(nodes: &[NodeState], key: u64) -> Result<Shared> {
    Shared::new(all_nodes(nodes), nodes.iter().map(|n| n.accumulate(key).1).collect())
}

/// Opens `q_k + xi` for every key in one round.
pub fn frequency_estimation(
    bus: &mut Bus,
    nodes: &[NodeState],
    keys: &[u64],
    codec: &FixedPointCodec,
    noise: &NoiseSource<'_>,
) -> Result<Vec<f64>> {
    let scale: Fe = codec.scale();
    let outputs: Vec<Shared> = keys
        .iter()
        .map(|&k| {
            let q = flag_sum(nodes, k)?.scale(scale);
            match noise.shares(NoiseKind::Frequency, k)? {
                Some(xi) => q.add(&xi),
                None => Ok(q),
            }
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&Shared> = outputs.iter().collect();
    Ok(bus
        .open_many(&refs, Audience::All)?
        .into_iter()
        .map(|e| codec.decode(e))
        .collect())
}

/// Opens `S_k / q_k + xi` for every key. The sum is centered on the public
/// midpoint before dividing so the numerator stays within `q * R`.
#[allow(clippy::too_many_arguments)]
pub fn mean_estimation(
    bus: &mut Bus,
    nodes: &[NodeState],
    keys: &[u64],
    params: &ProtocolParams,
    plan: &DivisionPlan,
    dealers: &mut [Dealer],
    codec: &FixedPointCodec,
    noise: &NoiseSource<'_>,
) -> Result<Vec<f64>> {
    let center: Fe = codec.encode(params.center)?;
    let mut nums = Vec::with_capacity(keys.len());
    let mut dens = Vec::with_capacity(keys.len());
    for &k in keys {
        let q = flag_sum(nodes, k)?;
        nums.push(value_sum(nodes, k)?.sub(&q.scale(center))?);
        dens.push(q);
    }
    let mut refs: Vec<&mut Dealer> = dealers.iter_mut().collect();
    let quotients = fixed_div_many(bus, &nums, &dens, plan, &mut refs)?;
    let outputs: Vec<Shared> = quotients
        .iter()
        .zip(keys)
        .map(|(quot, &k)| {
            let out = quot.add_const(center);
            match noise.shares(NoiseKind::Mean, k)? {
                Some(xi) => out.add(&xi),
                None => Ok(out),
            }
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&Shared> = outputs.iter().collect();
    Ok(bus
        .open_many(&refs, Audience::All)?
        .into_iter()
        .map(|e| codec.decode(e))
        .collect())
}

/// Dealer for the computation on `key`.
pub fn key_dealer(seed: u64, key: u64) -> Dealer {
    Dealer::new(substream(seed, Domain::Dealer, key), key + 1)
}

/// A pair whose flag failed the bit check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RejectedPair {
    pub key: u64,
    pub pair_tag: u64,
}

/// Runs the flag check for every delivered pair, grouped by pair tag among
/// its recipients, then drops the rejected pairs from every inbox.
pub fn validate_inputs(bus: &mut Bus, nodes: &mut [NodeState], seed: u64) -> Result<Vec<RejectedPair>> {
    let mut groups: BTreeMap<u64, (u64, Vec<usize>, Vec<Fe>)> = BTreeMap::new();
    for node in nodes.iter() {
        for m in node.inbox() {
            let g = groups.entry(m.pair_tag).or_insert((m.key, Vec::new(), Vec::new()));
            g.1.push(node.id());
            g.2.push(m.flag_share);
        }
    }
    let mut dealer = Dealer::new(substream(seed, Domain::Validation, 0), 0);
    let mut flags = Vec::with_capacity(groups.len());
    let mut triples = Vec::with_capacity(groups.len());
    let mut tags = Vec::with_capacity(groups.len());
    for (tag, (key, holders, shares)) in groups {
        triples.push(dealer.triple(&holders)?);
        flags.push(Shared::new(holders, shares)?);
        tags.push((tag, key));
    }
    let verdicts = validate_flags(bus, &flags, triples)?;
    let rejected: Vec<RejectedPair> = tags
        .into_iter()
        .zip(verdicts)
        .filter(|(_, ok)| !ok)
        .map(|((pair_tag, key), _)| RejectedPair { key, pair_tag })
        .collect();
    let dropped: BTreeSet<u64> = rejected.iter().map(|r| r.pair_tag).collect();
    for node in nodes.iter_mut() {
        node.drop_pairs(&dropped);
    }
    Ok(rejected)
}

/// Released mean of one key.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum MeanOutcome {
    NotRequested,
    /// No node received anything for the key.
    NoData,
    Value(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyEstimate {
    pub key: u64,
    pub frequency: Option<f64>,
    pub mean: MeanOutcome,
    /// The key is rarer than the configured minimum, so the mean's privacy
    /// guarantee does not hold for it.
    pub gamma_violation: bool,
}

impl KeyEstimate {
    pub fn flags(&self) -> String {
        let mut flags = Vec::new();
        if self.gamma_violation {
            flags.push("gamma_violation");
        }
        if self.mean == MeanOutcome::NoData {
            flags.push("no_data");
        }
        if flags.is_empty() {
            "ok".into()
        } else {
            flags.join(";")
        }
    }
}

/// A client dropped at ingestion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IngestionViolation {
    pub client: u64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrivateStatisticsReport {
    pub estimates: Vec<KeyEstimate>,
    pub privacy: PrivacyReport,
    pub metrics: TranscriptMetrics,
    pub ingestion_violations: Vec<IngestionViolation>,
    pub rejected_pairs: Vec<RejectedPair>,
    /// Accepted real pairs `|S|`.
    pub pairs: u64,
    pub dummies: u64,
    pub divisor_bound: u64,
    pub newton_iterations: u32,
}

impl PrivateStatisticsReport {
    pub fn estimate(&self, key: u64) -> Option<&KeyEstimate> {
        self.estimates.iter().find(|e| e.key == key)
    }

    pub fn gamma_violations(&self) -> Vec<u64> {
        self.estimates.iter().filter(|e| e.gamma_violation).map(|e| e.key).collect()
    }

    /// Any input assumption broken: rejected clients, rejected pairs or rare keys.
    pub fn has_violations(&self) -> bool {
        !self.ingestion_violations.is_empty()
            || !self.rejected_pairs.is_empty()
            || self.estimates.iter().any(|e| e.gamma_violation)
    }

    /// Per-key rows: `key,frequency,mean,flags,config_hash`.
    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut out = String::from("key,frequency,mean,flags,config_hash\n");
        for e in &self.estimates {
            let freq = e.frequency.map(fmt_f).unwrap_or_default();
            let mean = match e.mean {
                MeanOutcome::Value(v) => fmt_f(v),
                MeanOutcome::NoData => "no data".into(),
                MeanOutcome::NotRequested => String::new(),
            };
            let _ = writeln!(out, "{},{},{},{},{}", e.key, freq, mean, e.flags(), config_hash);
        }
        out
    }

    /// Human-readable block with the privacy accounting.
    pub fn summary(&self) -> String {
        let m = &self.metrics;
        let mut out = String::from("[privacy]\n");
        out.push_str(&self.privacy.to_key_value());
        if self.privacy.noise {
            out.push_str(
                "noise_caveat = output noise is the sum of per-node gamma differences; \
                 colluding nodes can remove their own parts and face less noise\n",
            );
        }
        let _ = writeln!(out, "\n[run]");
        let _ = writeln!(out, "keys = {}", self.estimates.len());
        let _ = writeln!(out, "pairs = {}", self.pairs);
        let _ = writeln!(out, "dummies = {}", self.dummies);
        let _ = writeln!(out, "divisor_bound = {}", self.divisor_bound);
        let _ = writeln!(out, "newton_iterations = {}", self.newton_iterations);
        let _ = writeln!(out, "ingestion_violations = {}", self.ingestion_violations.len());
        for v in &self.ingestion_violations {
            let _ = writeln!(out, "  client {}: {}", v.client, v.reason);
        }
        let _ = writeln!(out, "rejected_pairs = {}", self.rejected_pairs.len());
        for r in &self.rejected_pairs {
            let _ = writeln!(out, "  key {} (pair {:016x})", r.key, r.pair_tag);
        }
        let gamma = self.gamma_violations();
        let _ = writeln!(out, "gamma_violations = {gamma:?}");
        let _ = writeln!(out, "\n[transcript]");
        let _ = writeln!(out, "rounds = {}", m.rounds);
        let _ = writeln!(out, "client_elements = {}", m.client_elements);
        let _ = writeln!(out, "client_bytes = {}", m.client_bytes);
        let _ = writeln!(out, "node_bytes = {}", m.node_bytes());
        let _ = writeln!(out, "node_messages = {}", m.messages);
        out
    }
}

/// Full pipeline: share, add dummies, shuffle, optionally validate flags,
/// then release the requested statistics for every selected key.
pub fn run_end_to_end(
    dataset: &Dataset,
    request: &StatisticsRequest,
    params: &ProtocolParams,
    seed: u64,
) -> Result<PrivateStatisticsReport> {
    run_with_submissions(dataset, Vec::new(), request, params, seed)
}

/// As [`run_end_to_end`], with extra pre-built submissions mixed into the
/// shuffler; used to model clients that bypass [`client_prepare`].
pub fn run_with_submissions(
    dataset: &Dataset,
    extra: Vec<Submission>,
    request: &StatisticsRequest,
    params: &ProtocolParams,
    seed: u64,
) -> Result<PrivateStatisticsReport> {
    params.validate()?;
    if dataset.len() > params.clients {
        return Err(invalid(format!(
            "dataset has {} clients but the configured client count is {}",
            dataset.len(),
            params.clients
        )));
    }
    let keys = request.keys.resolve(params.key_domain)?;
    let codec = run_codec()?;
    let privacy = PrivacyReport::new(params, request.statistic, request.noise, request.beta_conf)?;
    let bank = if request.noise && request.offline_noise {
        Some(NoiseBank::prepare(seed, &keys, params, request.statistic, &codec)?)
    } else {
        None
    };

    let mut submissions = Vec::with_capacity(dataset.len() + params.dummy_generators + extra.len());
    let mut violations = Vec::new();
    let mut accepted: Vec<ClientRecord> = Vec::with_capacity(dataset.len());
    for (i, client) in dataset.clients.iter().enumerate() {
        let mut rng = substream(seed, Domain::Client, i as u64);
        match client_prepare(client.id, &client.pairs, params, &codec, &mut rng) {
            Ok(envelopes) => {
                accepted.push(client.clone());
                submissions.push(Submission {
                    sender: Sender::Client(client.id),
                    envelopes,
                });
            }
            Err(e) => violations.push(IngestionViolation {
                client: client.id,
                reason: e.to_string(),
            }),
        }
    }
    let accepted = Dataset::new(accepted);
    let pairs = accepted.pair_count() as u64;
    let mut dummies = 0u64;
    if request.dummies {
        for g in 0..params.dummy_generators {
            let mut rng = substream(seed, Domain::Dummy, g as u64);
            let envelopes = dummy_generate(params, &mut rng)?;
            dummies += (envelopes.len() / params.subset) as u64;
            submissions.push(Submission {
                sender: Sender::DummyGenerator(g as u32),
                envelopes,
            });
        }
    }
    submissions.extend(extra);

    let (inboxes, _) = shuffle_channel(submissions, params.nodes, &mut substream(seed, Domain::Shuffle, 0))?;
    let mut bus = Bus::new(params.nodes).with_audit(request.audit);
    bus.deliver_from_clients(&inboxes);
    let mut nodes = inboxes
        .iter()
        .enumerate()
        .map(|(i, inbox)| NodeState::receive(i, inbox))
        .collect::<Result<Vec<_>>>()?;
    let rejected_pairs = if request.validate_inputs {
        validate_inputs(&mut bus, &mut nodes, seed)?
    } else {
        Vec::new()
    };

    let present: BTreeSet<u64> = nodes.iter().flat_map(|n| n.keys()).collect();
    let truth = accepted.plaintext(params.key_domain);
    let statistic = request.statistic;
    let mean_keys: Vec<u64> = if statistic.mean() {
        keys.iter().copied().filter(|k| present.contains(k)).collect()
    } else {
        Vec::new()
    };
    let divisor_bound = match request.divisor_bound {
        Some(b) => b,
        None => default_divisor_bound(params)?,
    };
    let plan = DivisionPlan::new(
        params.min_frequency as u64,
        divisor_bound,
        codec.frac_bits(),
        divisor_bound as f64 * params.half_range,
    )?;
    let noise = NoiseSource {
        seed,
        enabled: request.noise,
        bank: bank.as_ref(),
        params,
        codec: &codec,
    };

    let mut freq: BTreeMap<u64, f64> = BTreeMap::new();
    let mut means: BTreeMap<u64, f64> = BTreeMap::new();
    let metrics = match request.execution {
        Execution::Batched => {
            if statistic.frequency() && !keys.is_empty() {
                let out = frequency_estimation(&mut bus, &nodes, &keys, &codec, &noise)?;
                freq.extend(keys.iter().copied().zip(out));
            }
            if !mean_keys.is_empty() {
                let mut dealers: Vec<Dealer> = mean_keys.iter().map(|&k| key_dealer(seed, k)).collect();
                let out = mean_estimation(&mut bus, &nodes, &mean_keys, params, &plan, &mut dealers, &codec, &noise)?;
                means.extend(mean_keys.iter().copied().zip(out));
            }
            bus.into_metrics()
        }
        Execution::Parallel => {
            let per_key = keys
                .par_iter()
                .map(|&k| {
                    let mut kbus = Bus::new(params.nodes).with_audit(request.audit);
                    let f = if statistic.frequency() {
                        Some(frequency_estimation(&mut kbus, &nodes, &[k], &codec, &noise)?[0])
                    } else {
                        None
                    };
                    let m = if statistic.mean() && present.contains(&k) {
                        let mut dealers = [key_dealer(seed, k)];
                        Some(mean_estimation(&mut kbus, &nodes, &[k], params, &plan, &mut dealers, &codec, &noise)?[0])
                    } else {
                        None
                    };
                    Ok((k, f, m, kbus.into_metrics()))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut merged = TranscriptMetrics::new(params.nodes);
            for (k, f, m, metrics) in per_key {
                if let Some(f) = f {
                    freq.insert(k, f);
                }
                if let Some(m) = m {
                    means.insert(k, m);
                }
                merged.merge_parallel(&metrics);
            }
            let mut total = bus.into_metrics();
            total.merge_sequential(&merged);
            total
        }
    };
    Ok(assemble(
        &keys,
        statistic,
        params,
        &present,
        &truth,
        freq,
        means,
        privacy,
        metrics,
        violations,
        rejected_pairs,
        pairs,
        dummies,
        &plan,
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    keys: &[u64],
    statistic: Statistic,
    params: &ProtocolParams,
    present: &BTreeSet<u64>,
    truth: &[crate::dataset::PlainStat],
    freq: BTreeMap<u64, f64>,
    means: BTreeMap<u64, f64>,
    privacy: PrivacyReport,
    metrics: TranscriptMetrics,
    ingestion_violations: Vec<IngestionViolation>,
    rejected_pairs: Vec<RejectedPair>,
    pairs: u64,
    dummies: u64,
    plan: &DivisionPlan,
) -> PrivateStatisticsReport {
    let estimates = keys
        .iter()
        .map(|&k| KeyEstimate {
            key: k,
            frequency: freq.get(&k).copied(),
            mean: if !statistic.mean() {
                MeanOutcome::NotRequested
            } else if !present.contains(&k) {
                MeanOutcome::NoData
            } else {
                MeanOutcome::Value(means[&k])
            },
            gamma_violation: statistic.mean()
                && truth[k as usize].frequency < params.min_frequency as u64,
        })
        .collect();
    PrivateStatisticsReport {
        estimates,
        privacy,
        metrics,
        ingestion_violations,
        rejected_pairs,
        pairs,
        dummies,
        divisor_bound: plan.high,
        newton_iterations: plan.iterations,
    }
}
