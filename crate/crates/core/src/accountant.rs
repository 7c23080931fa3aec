//! Closed-form privacy and accuracy accounting.

use std::fmt::Write as _;

use crate::error::{invalid, Result};

/// Public protocol parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolParams {
    /// Number of computation nodes.
    pub nodes: usize,
    /// Size of the node subset receiving each pair.
    pub subset: usize,
    /// Geometric dummy parameter.
    pub rate: f64,
    /// Maximum number of keys held by one client.
    pub max_keys: u32,
    /// Minimum frequency assumed for every key.
    pub min_frequency: u32,
    /// Values lie in `[center - half_range, center + half_range]`.
    pub half_range: f64,
    pub center: f64,
    /// Size of the key domain.
    pub key_domain: usize,
    /// Number of clients.
    pub clients: usize,
    /// Number of colluding nodes tolerated.
    pub collusion: usize,
    pub eps_freq: f64,
    pub eps_mean: f64,
    /// Number of independent dummy generators.
    pub dummy_generators: usize,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            nodes: 3,
            subset: 2,
            rate: optimal_r(3).expect("3 nodes is valid"),
            max_keys: 1,
            min_frequency: 1,
            half_range: 1.0,
            center: 0.0,
            key_domain: 10,
            clients: 100,
            collusion: 1,
            eps_freq: 1.0,
            eps_mean: 1.0,
            dummy_generators: 1,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 3 {
            return Err(invalid(format!("need at least 3 nodes, got {}", self.nodes)));
        }
        if self.subset < 2 || self.subset >= self.nodes {
            return Err(invalid(format!(
                "subset size must be in 2..={}, got {}",
                self.nodes - 1,
                self.subset
            )));
        }
        if self.collusion < 1 || self.subset < self.collusion + 1 {
            return Err(invalid(format!(
                "collusion threshold {} needs 1 <= c <= t - 1 = {}",
                self.collusion,
                self.subset - 1
            )));
        }
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(invalid(format!("rate must lie in (0, 1), got {}", self.rate)));
        }
        if self.max_keys < 1 {
            return Err(invalid("max keys per client must be at least 1"));
        }
        if self.min_frequency < 1 {
            return Err(invalid("minimum key frequency must be at least 1"));
        }
        if !(self.half_range.is_finite() && self.half_range > 0.0) {
            return Err(invalid(format!("value half-range must be positive, got {}", self.half_range)));
        }
        if !self.center.is_finite() {
            return Err(invalid("value center must be finite"));
        }
        if self.key_domain < 1 {
            return Err(invalid("key domain must contain at least one key"));
        }
        for (name, eps) in [("eps_freq", self.eps_freq), ("eps_mean", self.eps_mean)] {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {eps}")));
            }
        }
        if self.dummy_generators < 1 {
            return Err(invalid("need at least one dummy generator"));
        }
        Ok(())
    }

    /// Probability that a given node receives a given pair, `t / ell`.
    pub fn p(&self) -> f64 {
        self.subset as f64 / self.nodes as f64
    }

    /// Leakage budget of a single node's view.
    pub fn leakage_epsilon(&self) -> Result<f64> {
        leakage_epsilon(self.max_keys, self.rate, self.p())
    }

    pub fn sensitivity_frequency(&self) -> f64 {
        sensitivity_frequency(self.max_keys)
    }

    pub fn sensitivity_mean(&self) -> f64 {
        sensitivity_mean(self.max_keys, self.half_range, self.min_frequency)
    }
}

/// Which statistics a run releases.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Statistic {
    Frequency,
    Mean,
    Both,
}

impl Statistic {
    pub fn frequency(self) -> bool {
        matches!(self, Statistic::Frequency | Statistic::Both)
    }

    pub fn mean(self) -> bool {
        matches!(self, Statistic::Mean | Statistic::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::Frequency => "frequency",
            Statistic::Mean => "mean",
            Statistic::Both => "both",
        }
    }
}

impl std::str::FromStr for Statistic {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "frequency" | "freq" => Ok(Statistic::Frequency),
            "mean" => Ok(Statistic::Mean),
            "both" => Ok(Statistic::Both),
            other => Err(invalid(format!("unknown statistic '{other}'"))),
        }
    }
}

fn check_lambda(lambda: u32) -> Result<()> {
    if lambda < 1 {
        return Err(invalid("lambda must be at least 1"));
    }
    Ok(())
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// `lambda * ln max{1/(1-r), 1/(1-p) + 1 - r}`.
pub fn leakage_epsilon(lambda: u32, r: f64, p: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_unit("r", r)?;
    check_unit("p", p)?;
    Ok(lambda as f64 * leakage_log_bound(r, 1.0 / (1.0 - p)))
}

/// `ln max{1/(1-r), ratio + 1 - r}` where `ratio` is the inverse
/// non-selection probability.
fn leakage_log_bound(r: f64, ratio: f64) -> f64 {
    let removal = -(-r).ln_1p();
    let addition = (ratio + 1.0 - r).ln();
    removal.max(addition)
}

/// `C(ell, c+1) / C(ell-c, c+1)`, infinite when `c + 1 > ell - c`.
pub fn collusion_ratio(nodes: usize, c: usize) -> f64 {
    let k = c + 1;
    if k > nodes - c {
        return f64::INFINITY;
    }
    (0..k)
        .map(|i| (nodes - i) as f64 / (nodes - c - i) as f64)
        .product()
}

/// Probability that a coalition of `c` nodes sees a pair sent to `c + 1`
/// nodes: `1 - C(ell-c, c+1) / C(ell, c+1)`.
pub fn collusion_p(nodes: usize, c: usize) -> Result<f64> {
    check_collusion(nodes, c)?;
    let k = c + 1;
    if k > nodes - c {
        return Ok(1.0);
    }
    let unseen: f64 = (0..k)
        .map(|i| (nodes - c - i) as f64 / (nodes - i) as f64)
        .product();
    Ok(1.0 - unseen)
}

fn check_collusion(nodes: usize, c: usize) -> Result<()> {
    if nodes < 3 {
        return Err(invalid(format!("need at least 3 nodes, got {nodes}")));
    }
    if c < 1 || c > nodes - 2 {
        return Err(invalid(format!("collusion c must be in 1..={}, got {c}", nodes - 2)));
    }
    Ok(())
}

/// Leakage against `c` colluding nodes with `t = c + 1`. Infinite once
/// the coalition is guaranteed to see every pair.
pub fn collusion_epsilon(lambda: u32, r: f64, nodes: usize, c: usize) -> Result<f64> {
    check_lambda(lambda)?;
    check_unit("r", r)?;
    check_collusion(nodes, c)?;
    Ok(lambda as f64 * leakage_log_bound(r, collusion_ratio(nodes, c)))
}

/// The rate equalising both branches of the leakage bound at `p = 2 / ell`.
pub fn optimal_r(nodes: usize) -> Result<f64> {
    if nodes < 3 {
        return Err(invalid(format!("need at least 3 nodes, got {nodes}")));
    }
    let a = 1.0 - 2.0 / nodes as f64;
    Ok(1.0 - ((1.0 + 4.0 * a * a).sqrt() - 1.0) / (2.0 * a))
}

/// Equalising rate for an arbitrary selection probability `p`.
pub fn optimal_r_for_p(p: f64) -> Result<f64> {
    check_unit("p", p)?;
    optimal_r_for_ratio(1.0 / (1.0 - p))
}

/// Smallest root of `(ratio + 1 - r)(1 - r) = 1`.
fn optimal_r_for_ratio(ratio: f64) -> Result<f64> {
    if !(ratio.is_finite() && ratio > 1.0) {
        return Err(invalid(format!("no finite optimal rate for ratio {ratio}")));
    }
    let s = ratio + 2.0;
    let disc = s * s - 4.0 * ratio;
    // Stable form of (s - sqrt(disc)) / 2.
    Ok(2.0 * ratio / (s + disc.sqrt()))
}

/// Equalising rate for `c` colluding nodes with `t = c + 1`.
pub fn optimal_r_for_collusion(nodes: usize, c: usize) -> Result<f64> {
    check_collusion(nodes, c)?;
    optimal_r_for_ratio(collusion_ratio(nodes, c))
}

/// `lambda * ln(2a / (sqrt(1 + 4a^2) - 1))` with `a = 1 - 2/ell`.
pub fn min_leakage_epsilon(nodes: usize, lambda: u32) -> Result<f64> {
    check_lambda(lambda)?;
    if nodes < 3 {
        return Err(invalid(format!("need at least 3 nodes, got {nodes}")));
    }
    let a = 1.0 - 2.0 / nodes as f64;
    Ok(lambda as f64 * (2.0 * a / ((1.0 + 4.0 * a * a).sqrt() - 1.0)).ln())
}

/// `lambda * ln(2 / (sqrt(5) - 1))`, the infimum over all node counts.
pub fn leakage_lower_bound(lambda: u32) -> f64 {
    lambda as f64 * (2.0 / (5f64.sqrt() - 1.0)).ln()
}

/// Shift of the one-sided dummy baseline: `-(1/eps) ln(delta (1 + e^-eps) / lambda)`.
pub fn one_sided_beta(eps: f64, delta: f64, lambda: u32) -> Result<f64> {
    check_lambda(lambda)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {eps}")));
    }
    check_unit("delta", delta)?;
    Ok(-(delta * (1.0 + (-eps).exp()) / lambda as f64).ln() / eps)
}

/// Smallest integer shift whose failure probability `lambda alpha^b / (1 + alpha)` is at most delta.
pub fn one_sided_integer_beta(eps: f64, delta: f64, lambda: u32) -> Result<u64> {
    Ok(one_sided_beta(eps, delta, lambda)?.max(0.0).ceil() as u64)
}

/// Expected dummies of the selective protocol.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DummyExpectation {
    /// Mean of the geometric mass function with support starting at 0, `(1-r)/r`,
    /// times the number of generators.
    pub per_key: f64,
    /// The `1/r` convention, times the number of generators.
    pub per_key_reciprocal: f64,
    pub total: f64,
    pub total_reciprocal: f64,
}

pub fn expected_dummies(params: &ProtocolParams) -> Result<DummyExpectation> {
    check_unit("r", params.rate)?;
    let d = params.dummy_generators as f64;
    let n = params.key_domain as f64;
    let per_key = d * (1.0 - params.rate) / params.rate;
    let per_key_reciprocal = d / params.rate;
    Ok(DummyExpectation {
        per_key,
        per_key_reciprocal,
        total: n * per_key,
        total_reciprocal: n * per_key_reciprocal,
    })
}

/// Expected dummies of the one-sided baseline.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct OneSidedExpectation {
    /// The real-valued shift, a lower bound on the per-key mean.
    pub beta: f64,
    /// Exact `E[max(0, b + G2)]` at the integer shift `b = ceil(beta)`.
    pub per_key_exact: f64,
    pub total_lower_bound: f64,
}

pub fn expected_dummies_one_sided(
    key_domain: usize,
    eps: f64,
    delta: f64,
    lambda: u32,
) -> Result<OneSidedExpectation> {
    let beta = one_sided_beta(eps, delta, lambda)?;
    let b = one_sided_integer_beta(eps, delta, lambda)? as f64;
    let alpha = (-eps).exp();
    let per_key_exact = b + alpha.powf(b + 1.0) / ((1.0 + alpha) * (1.0 - alpha));
    Ok(OneSidedExpectation {
        beta,
        per_key_exact,
        total_lower_bound: key_domain as f64 * beta,
    })
}

/// Tail probability left above [`dummy_count_quantile`] in the default divisor bound.
pub const DIVISOR_TAIL: f64 = 1e-6;

/// Smallest `k` with `Pr[D <= k] >= 1 - tail`, where `D` is the number of
/// dummies one key receives from `generators` independent Geom(r) draws.
pub fn dummy_count_quantile(generators: usize, r: f64, tail: f64) -> Result<u64> {
    if generators < 1 || !(r > 0.0 && r < 1.0) || !(tail > 0.0 && tail < 1.0) {
        return Err(invalid(format!(
            "quantile needs d >= 1, r in (0, 1), tail in (0, 1); got d={generators}, r={r}, tail={tail}"
        )));
    }
    let d = generators as f64;
    let mut pk = r.powf(d);
    let mut cdf = pk;
    let mut k = 0u64;
    while cdf < 1.0 - tail {
        pk *= (d + k as f64) / (k + 1) as f64 * (1.0 - r);
        cdf += pk;
        k += 1;
    }
    Ok(k)
}

/// Public upper bound on a key's flag sum used by secure division: the client
/// count plus the high quantile of the dummy count.
pub fn default_divisor_bound(params: &ProtocolParams) -> Result<u64> {
    Ok(params.clients as u64
        + dummy_count_quantile(params.dummy_generators, params.rate, DIVISOR_TAIL)?)
}

/// Error bounds holding simultaneously over all keys with probability `1 - beta_conf`.
pub fn accuracy_bounds(params: &ProtocolParams, beta_conf: f64) -> Result<(f64, f64)> {
    if !(beta_conf > 0.0 && beta_conf <= 1.0) {
        return Err(invalid(format!("confidence parameter must be in (0, 1], got {beta_conf}")));
    }
    let log_term = (params.key_domain as f64 / beta_conf).ln();
    Ok((
        log_term * params.sensitivity_frequency() / params.eps_freq,
        log_term * params.sensitivity_mean() / params.eps_mean,
    ))
}

pub fn sensitivity_frequency(lambda: u32) -> f64 {
    lambda as f64
}

pub fn sensitivity_mean(lambda: u32, half_range: f64, min_frequency: u32) -> f64 {
    lambda as f64 * 2.0 * half_range / min_frequency as f64
}

/// Privacy accounting attached to every run.
#[derive(Clone, Debug, PartialEq)]
pub struct PrivacyReport {
    pub statistic: Statistic,
    pub noise: bool,
    pub nodes: usize,
    pub subset: usize,
    pub rate: f64,
    pub p: f64,
    pub max_keys: u32,
    pub eps_leakage: f64,
    pub eps_freq: f64,
    pub eps_mean: f64,
    pub eps_total: f64,
    pub expected_dummies_per_key: f64,
    pub expected_dummies_per_key_reciprocal: f64,
    pub expected_dummies_total: f64,
    pub beta_conf: f64,
    pub freq_error_bound: f64,
    pub mean_error_bound: f64,
}

impl PrivacyReport {
    /// Composes the leakage with the output budgets of the requested statistics.
    /// Without output noise only the leakage is spent and the output budgets are zero.
    pub fn new(params: &ProtocolParams, statistic: Statistic, noise: bool, beta_conf: f64) -> Result<Self> {
        params.validate()?;
        let eps_leakage = params.leakage_epsilon()?;
        let eps_freq = if noise && statistic.frequency() { params.eps_freq } else { 0.0 };
        let eps_mean = if noise && statistic.mean() { params.eps_mean } else { 0.0 };
        let dummies = expected_dummies(params)?;
        let (freq_bound, mean_bound) = if noise {
            accuracy_bounds(params, beta_conf)?
        } else {
            (0.0, 0.0)
        };
        Ok(Self {
            statistic,
            noise,
            nodes: params.nodes,
            subset: params.subset,
            rate: params.rate,
            p: params.p(),
            max_keys: params.max_keys,
            eps_leakage,
            eps_freq,
            eps_mean,
            eps_total: eps_leakage + eps_freq + eps_mean,
            expected_dummies_per_key: dummies.per_key,
            expected_dummies_per_key_reciprocal: dummies.per_key_reciprocal,
            expected_dummies_total: dummies.total,
            beta_conf,
            freq_error_bound: if statistic.frequency() { freq_bound } else { 0.0 },
            mean_error_bound: if statistic.mean() { mean_bound } else { 0.0 },
        })
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("statistic", self.statistic.as_str().to_string()),
            ("mode", if self.noise { "noisy" } else { "exact" }.to_string()),
            ("nodes", self.nodes.to_string()),
            ("subset", self.subset.to_string()),
            ("rate", fmt_f(self.rate)),
            ("p", fmt_f(self.p)),
            ("max_keys", self.max_keys.to_string()),
            ("eps_leakage", fmt_f(self.eps_leakage)),
            ("eps_freq", fmt_f(self.eps_freq)),
            ("eps_mean", fmt_f(self.eps_mean)),
            ("eps_total", fmt_f(self.eps_total)),
            ("expected_dummies_per_key", fmt_f(self.expected_dummies_per_key)),
            (
                "expected_dummies_per_key_reciprocal",
                fmt_f(self.expected_dummies_per_key_reciprocal),
            ),
            ("expected_dummies_total", fmt_f(self.expected_dummies_total)),
            ("beta_conf", fmt_f(self.beta_conf)),
            ("freq_error_bound", fmt_f(self.freq_error_bound)),
            ("mean_error_bound", fmt_f(self.mean_error_bound)),
        ]
    }

    /// Flat `key = value` block.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k} = {v}");
        }
        if !self.noise {
            let _ = writeln!(out, "note = exact mode, epsilon spent = eps_leakage");
        }
        out
    }

    /// Header plus one row, tagged with the configuration hash.
    pub fn to_csv(&self, config_hash: &str) -> String {
        let fields = self.fields();
        let mut out = String::from("config_hash");
        for (k, _) in &fields {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        out.push_str(config_hash);
        for (_, v) in &fields {
            out.push(',');
            out.push_str(v);
        }
        out.push('\n');
        out
    }
}

/// Fixed, platform-independent float formatting for reports.
pub fn fmt_f(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.9}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dummy_quantile_matches_geometric_tail() {
        // one generator: Pr[D > k] = (1 - r)^(k + 1)
        for r in [0.1, 0.4116, 0.9] {
            let k = dummy_count_quantile(1, r, 1e-6).unwrap();
            assert!((1.0 - r).powi(k as i32 + 1) <= 1e-6 + 1e-15);
            assert!(k == 0 || (1.0 - r).powi(k as i32) > 1e-6);
        }
        assert!(dummy_count_quantile(3, 0.4, 1e-6).unwrap() > dummy_count_quantile(1, 0.4, 1e-6).unwrap());
        assert!(dummy_count_quantile(0, 0.4, 1e-6).is_err());
        let p = ProtocolParams::default();
        assert_eq!(
            default_divisor_bound(&p).unwrap(),
            100 + dummy_count_quantile(1, p.rate, DIVISOR_TAIL).unwrap()
        );
    }

    #[test]
    fn leakage_examples() {
        let e = leakage_epsilon(1, 0.4, 2.0 / 3.0).unwrap();
        assert!((e - 3.6f64.ln()).abs() < 1e-12);
        assert!((e - 1.2809).abs() < 1e-4);
        assert!((leakage_epsilon(2, 0.4, 2.0 / 3.0).unwrap() - 2.0 * e).abs() < 1e-12);
        let tiny = leakage_epsilon(1, 1e-12, 1e-12).unwrap();
        assert!((tiny - 2f64.ln()).abs() < 1e-9);
        assert!(leakage_epsilon(0, 0.4, 0.5).is_err());
        assert!(leakage_epsilon(1, 1.0, 0.5).is_err());
    }

    #[test]
    fn collusion_reduces_to_single_node_at_c1() {
        assert!((collusion_ratio(20, 1) - 190.0 / 171.0).abs() < 1e-15);
        assert_eq!(190 * 18, 171 * 20);
        for nodes in 4..200 {
            let p = 2.0 / nodes as f64;
            assert!((collusion_p(nodes, 1).unwrap() - p).abs() < 1e-14);
            for r in [0.05, 0.3, 0.6, 0.95] {
                let a = collusion_epsilon(1, r, nodes, 1).unwrap();
                let b = leakage_epsilon(1, r, p).unwrap();
                assert!((a - b).abs() < 1e-12, "nodes={nodes} r={r}");
            }
        }
    }

    #[test]
    fn collusion_monotone_in_c() {
        let r = 0.4;
        let mut prev = 0.0;
        for c in 1..=18 {
            let e = collusion_epsilon(1, r, 20, c).unwrap();
            assert!(e >= prev, "c={c}");
            prev = e;
        }
        assert!(collusion_epsilon(1, r, 20, 10).unwrap().is_infinite());
        assert!(collusion_epsilon(1, r, 20, 9).unwrap().is_finite());
        assert!((collusion_epsilon(3, r, 20, 4).unwrap() - 3.0 * collusion_epsilon(1, r, 20, 4).unwrap()).abs() < 1e-12);
        assert!(collusion_epsilon(1, r, 20, 19).is_err());
    }

    #[test]
    fn optimal_rate_examples() {
        let r = optimal_r(20).unwrap();
        assert!((r - 0.4116).abs() < 1e-4, "{r}");
        for nodes in 3..=1000 {
            let r = optimal_r(nodes).unwrap();
            assert!(r > 0.0 && r < 1.0);
            let p = 2.0 / nodes as f64;
            let lhs = 1.0 / (1.0 - r);
            let rhs = 1.0 / (1.0 - p) + 1.0 - r;
            assert!((lhs - rhs).abs() < 1e-9, "nodes={nodes}");
            assert!((optimal_r_for_p(p).unwrap() - r).abs() < 1e-12);
            let eps = leakage_epsilon(1, r, p).unwrap();
            assert!((eps - min_leakage_epsilon(nodes, 1).unwrap()).abs() < 1e-9);
        }
        assert!(optimal_r(2).is_err());
    }

    #[test]
    fn optimal_rate_minimises_leakage() {
        for nodes in [3, 5, 20, 100] {
            let p = 2.0 / nodes as f64;
            let best = min_leakage_epsilon(nodes, 1).unwrap();
            for i in 1..1000 {
                let r = i as f64 / 1000.0;
                assert!(leakage_epsilon(1, r, p).unwrap() >= best - 1e-12);
            }
        }
    }

    #[test]
    fn minimum_leakage_golden_values() {
        let cases = [(3, 1.19, 0.005), (5, 0.758, 0.001), (30, 0.512, 0.001), (6, 0.69, 0.005), (10, 0.59, 0.005), (20, 0.53, 0.005)];
        for (nodes, want, tol) in cases {
            let got = min_leakage_epsilon(nodes, 1).unwrap();
            assert!((got - want).abs() <= tol, "nodes={nodes} got={got}");
        }
    }

    #[test]
    fn lower_bound() {
        let lb = leakage_lower_bound(1);
        assert!((lb - 0.4812).abs() < 1e-4);
        let mut prev = f64::INFINITY;
        for nodes in 3..=100_000usize {
            let e = min_leakage_epsilon(nodes, 1).unwrap();
            assert!(e > lb);
            assert!(e < prev);
            prev = e;
        }
        assert!((min_leakage_epsilon(10_000_000, 1).unwrap() - lb).abs() < 1e-5);
        assert_eq!(leakage_lower_bound(3), 3.0 * lb);
    }

    #[test]
    fn one_sided_beta_examples() {
        // Reference computed independently with 50-digit decimal arithmetic:
        // -ln(2^-40 (1 + e^-1)) = 27.412625534879...
        let beta = one_sided_beta(1.0, 2f64.powi(-40), 1).unwrap();
        assert!((beta - 27.412_625_534_879_59).abs() < 1e-12, "{beta}");
        let deltas = [1e-3, 1e-6, 1e-9, 2f64.powi(-40)];
        for w in deltas.windows(2) {
            assert!(one_sided_beta(1.0, w[0], 1).unwrap() < one_sided_beta(1.0, w[1], 1).unwrap());
        }
        let epss = [0.25, 0.5, 1.0, 2.0, 4.0];
        for w in epss.windows(2) {
            assert!(one_sided_beta(w[0], 1e-9, 1).unwrap() > one_sided_beta(w[1], 1e-9, 1).unwrap());
        }
        for eps in epss {
            let alpha = (-eps).exp();
            let b = one_sided_integer_beta(eps, 1e-9, 1).unwrap();
            assert!(alpha.powi(b as i32) / (1.0 + alpha) <= 1e-9);
        }
        assert!(one_sided_beta(1.0, 0.0, 1).is_err());
    }

    #[test]
    fn dummy_expectations() {
        let params = ProtocolParams {
            rate: 0.5,
            key_domain: 10,
            ..Default::default()
        };
        let d = expected_dummies(&params).unwrap();
        assert_eq!(d.total, 10.0);
        assert_eq!(d.total_reciprocal, 20.0);
        let p20 = ProtocolParams {
            nodes: 20,
            rate: optimal_r(20).unwrap(),
            ..Default::default()
        };
        assert!(expected_dummies(&p20).unwrap().per_key < 3.0);
        assert!(expected_dummies(&p20).unwrap().per_key_reciprocal < 3.0);
        let triple = ProtocolParams { dummy_generators: 3, ..p20.clone() };
        assert!((expected_dummies(&triple).unwrap().per_key - 3.0 * expected_dummies(&p20).unwrap().per_key).abs() < 1e-12);
    }

    #[test]
    fn one_sided_exact_mean_matches_summation() {
        let eps = 0.7;
        let e = expected_dummies_one_sided(4, eps, 1e-6, 1).unwrap();
        let b = one_sided_integer_beta(eps, 1e-6, 1).unwrap() as i64;
        let alpha = (-eps).exp();
        let brute: f64 = (-b..2000)
            .map(|z| (b + z) as f64 * (1.0 - alpha) / (1.0 + alpha) * alpha.powi(z.abs() as i32))
            .sum();
        assert!((e.per_key_exact - brute).abs() < 1e-9);
        assert!(e.per_key_exact >= e.beta);
        assert_eq!(e.total_lower_bound, 4.0 * e.beta);
    }

    #[test]
    fn accuracy_examples() {
        let params = ProtocolParams { key_domain: 1, ..Default::default() };
        assert_eq!(accuracy_bounds(&params, 1.0).unwrap(), (0.0, 0.0));
        let p1 = ProtocolParams { key_domain: 50, ..Default::default() };
        let p2 = ProtocolParams { max_keys: 2, ..p1.clone() };
        let (f1, _) = accuracy_bounds(&p1, 0.05).unwrap();
        let (f2, _) = accuracy_bounds(&p2, 0.05).unwrap();
        assert!((f2 - 2.0 * f1).abs() < 1e-12);
        assert!(accuracy_bounds(&p1, 0.0).is_err());
    }

    #[test]
    fn sensitivity_examples() {
        assert_eq!(sensitivity_frequency(1), 1.0);
        assert_eq!(sensitivity_mean(2, 1.0, 4), 1.0);
    }

    /// Exhaustive neighbour enumeration over tiny datasets: two keys, three
    /// clients, values on {-R, 0, R}, dropping one client at a time. Only pairs
    /// where every key meets the minimum frequency in both datasets count.
    #[test]
    fn mean_sensitivity_brute_force() {
        let grid = [-1.0, 0.0, 1.0];
        let keys = 2usize;
        for lambda in 1..=2u32 {
            for gamma in 1..=2u32 {
                let mut options: Vec<Vec<(usize, f64)>> = vec![vec![]];
                for k in 0..keys {
                    for &v in &grid {
                        options.push(vec![(k, v)]);
                    }
                }
                if lambda == 2 {
                    for k1 in 0..keys {
                        for k2 in k1 + 1..keys {
                            for &v1 in &grid {
                                for &v2 in &grid {
                                    options.push(vec![(k1, v1), (k2, v2)]);
                                }
                            }
                        }
                    }
                }
                let bound = sensitivity_mean(lambda, 1.0, gamma);
                let means = |clients: &[&Vec<(usize, f64)>]| -> Option<Vec<f64>> {
                    let mut sum = vec![0.0; keys];
                    let mut cnt = vec![0u32; keys];
                    for c in clients {
                        for &(k, v) in c.iter() {
                            sum[k] += v;
                            cnt[k] += 1;
                        }
                    }
                    if cnt.iter().any(|&c| c < gamma) {
                        return None;
                    }
                    Some(sum.iter().zip(&cnt).map(|(s, &c)| s / c as f64).collect())
                };
                let mut worst: f64 = 0.0;
                let mut compared = 0usize;
                for a in &options {
                    for b in &options {
                        for c in &options {
                            let full = [a, b, c];
                            let Some(mu) = means(&full) else { continue };
                            for drop in 0..3 {
                                let rest: Vec<&Vec<(usize, f64)>> =
                                    (0..3).filter(|&i| i != drop).map(|i| full[i]).collect();
                                let Some(mu2) = means(&rest) else { continue };
                                compared += 1;
                                let d: f64 = mu.iter().zip(&mu2).map(|(x, y)| (x - y).abs()).sum();
                                worst = worst.max(d);
                            }
                        }
                    }
                }
                assert!(worst <= bound + 1e-12, "lambda={lambda} gamma={gamma} worst={worst}");
                // Three clients with one key each cannot give two keys frequency 2.
                if (lambda, gamma) != (1, 2) {
                    assert!(compared > 0 && worst > 0.0);
                }
            }
        }
    }

    #[test]
    fn report_composition() {
        let params = ProtocolParams::default();
        let eps_l = params.leakage_epsilon().unwrap();
        let both = PrivacyReport::new(&params, Statistic::Both, true, 0.05).unwrap();
        assert!((both.eps_total - (1.0 + 1.0 + eps_l)).abs() < 1e-12);
        let freq = PrivacyReport::new(&params, Statistic::Frequency, true, 0.05).unwrap();
        assert!((freq.eps_total - (1.0 + eps_l)).abs() < 1e-12);
        assert_eq!(freq.mean_error_bound, 0.0);
        let exact = PrivacyReport::new(&params, Statistic::Both, false, 0.05).unwrap();
        assert_eq!(exact.eps_total, eps_l);
        assert!(exact.to_key_value().contains("exact mode"));
        let csv = both.to_csv("abc");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(lines[1].starts_with("abc,"));
    }

    #[test]
    fn params_validation() {
        assert!(ProtocolParams::default().validate().is_ok());
        let bad = [
            ProtocolParams { nodes: 2, ..Default::default() },
            ProtocolParams { subset: 3, ..Default::default() },
            ProtocolParams { collusion: 2, ..Default::default() },
            ProtocolParams { rate: 1.0, ..Default::default() },
            ProtocolParams { min_frequency: 0, ..Default::default() },
            ProtocolParams { eps_freq: 0.0, ..Default::default() },
            ProtocolParams { half_range: -1.0, ..Default::default() },
            ProtocolParams { dummy_generators: 0, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }
}
