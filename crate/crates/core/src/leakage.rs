//! Numerical certification of the leakage bounds.
//!
//! A single node's count for one key is `Bin(q + V, p)` with `V` the number of
//! dummies, geometric with parameter `r`. [`leakage_pmf`] evaluates that mass
//! function and the `verify_*` functions sweep neighbouring counts `q` and
//! `q + 1` over the whole truncated support.

use rand::Rng;
use rayon::prelude::*;

use crate::accountant::{collusion_epsilon, collusion_p, fmt_f, leakage_epsilon, ProtocolParams};
use crate::collection::{client_prepare, dummy_generate, shuffle_channel, KeyValuePair, Sender, Submission};
use crate::distributions::{
    binomial_pmf, ln_binomial_pmf, two_sided_geometric_pmf, two_sided_geometric_sample,
};
use crate::error::{invalid, Result};
use crate::fixed::FixedPointCodec;
use crate::rng::{substream, Domain, SimRng};
use crate::stats::total_variation;

/// Default truncation level for the dummy tail.
pub const DEFAULT_TAIL: f64 = 1e-15;
/// Default largest true count swept by the verifiers.
pub const DEFAULT_Q_MAX: u64 = 50;
/// Relative accuracy targeted by each mass-function evaluation.
const RELATIVE_TOLERANCE: f64 = 1e-17;

/// Parameters of one key's leakage distribution.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct LeakagePmfSpec {
    pub q: u64,
    pub r: f64,
    pub p: f64,
    pub tail: f64,
}

impl LeakagePmfSpec {
    pub fn new(q: u64, r: f64, p: f64) -> Result<Self> {
        let spec = Self {
            q,
            r,
            p,
            tail: DEFAULT_TAIL,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(invalid(format!("r must lie in (0, 1), got {}", self.r)));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(invalid(format!("p must lie in (0, 1], got {}", self.p)));
        }
        if !(self.tail > 0.0 && self.tail < 1.0) {
            return Err(invalid(format!("tail must lie in (0, 1), got {}", self.tail)));
        }
        Ok(())
    }

    /// Dummy count `V` beyond which the geometric tail `(1 - r)^V` is below `tail`.
    pub fn dummy_cutoff(&self) -> u64 {
        (self.tail.ln() / (-self.r).ln_1p()).ceil() as u64
    }

    /// Largest observed count kept in the truncated support.
    pub fn support_max(&self) -> u64 {
        self.q + 1 + self.dummy_cutoff()
    }

    /// Natural log of `Pr[Z = z]`.
    ///
    /// Terms of the dummy sum are generated by their ratio recurrence relative
    /// to the first nonzero term, whose logarithm is carried separately. The
    /// sum stops once the term ratio is below one and the geometric bound on
    /// the remainder drops under the relative tolerance.
    pub fn ln_pmf(&self, z: u64) -> f64 {
        let start = z.saturating_sub(self.q);
        let first = self.r.ln()
            + start as f64 * (-self.r).ln_1p()
            + ln_binomial_pmf(z, self.q + start, self.p);
        if first == f64::NEG_INFINITY {
            return first;
        }
        let decay = (1.0 - self.r) * (1.0 - self.p);
        let mut scale = first;
        let mut term = 1.0f64;
        let mut acc = 1.0f64;
        let mut v = start;
        loop {
            let a = (self.q + v + 1) as f64;
            let ratio = decay * a / (a - z as f64);
            term *= ratio;
            acc += term;
            v += 1;
            if ratio < 1.0 && term * ratio / (1.0 - ratio) < RELATIVE_TOLERANCE * acc {
                break;
            }
            if acc > 1e250 {
                scale += acc.ln();
                term /= acc;
                acc = 1.0;
            }
        }
        scale + acc.ln()
    }

    pub fn pmf(&self, z: u64) -> f64 {
        self.ln_pmf(z).exp()
    }

    /// Masses for `z = 0..=support_max()`.
    pub fn pmf_vec(&self) -> Vec<f64> {
        (0..=self.support_max()).map(|z| self.pmf(z)).collect()
    }
}

/// `Pr[Z = z]` for a key with true count `spec.q`.
pub fn leakage_pmf(spec: &LeakagePmfSpec, z: u64) -> f64 {
    spec.pmf(z)
}

/// Which neighbour is in the numerator of the worst ratio.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `Pr_q / Pr_{q+1}`: the neighbour gains a record.
    Addition,
    /// `Pr_{q+1} / Pr_q`: the neighbour loses a record.
    Removal,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Addition => "add",
            Direction::Removal => "remove",
        }
    }
}

/// Outcome of a brute-force ratio sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct DpRatioResult {
    pub r: f64,
    pub p: f64,
    pub lambda: u32,
    pub q_max: u64,
    /// Largest `lambda * |ln Pr_q(Z) - ln Pr_{q+1}(Z)|` seen.
    pub max_log_ratio: f64,
    pub attaining_z: u64,
    pub attaining_q: u64,
    pub direction: Direction,
    pub max_addition: f64,
    pub addition_z: u64,
    pub max_removal: f64,
    pub removal_z: u64,
    /// Claimed bound, in log space.
    pub bound: f64,
    /// Extra ratio allowance covering evaluation and truncation error.
    pub slack: f64,
    pub passed: bool,
}

impl DpRatioResult {
    /// Worst ratio in linear space.
    pub fn max_ratio(&self) -> f64 {
        self.max_log_ratio.exp()
    }

    pub fn describe(&self) -> String {
        format!(
            "r={} p={} lambda={} q_max={}: max log-ratio {:.12} ({} direction, q={}, Z={}) vs bound {:.12}: {}",
            self.r,
            self.p,
            self.lambda,
            self.q_max,
            self.max_log_ratio,
            self.direction.as_str(),
            self.attaining_q,
            self.attaining_z,
            self.bound,
            if self.passed { "ok" } else { "VIOLATED" }
        )
    }
}

/// Ratio tolerance granted on top of `exp(bound)`.
pub const RATIO_TOLERANCE: f64 = 1e-9;

fn sweep(r: f64, p: f64, lambda: u32, q_max: u64, bound: f64) -> Result<DpRatioResult> {
    if lambda < 1 {
        return Err(invalid("lambda must be at least 1"));
    }
    let lam = lambda as f64;
    let mut best = DpRatioResult {
        r,
        p,
        lambda,
        q_max,
        max_log_ratio: f64::NEG_INFINITY,
        attaining_z: 0,
        attaining_q: 0,
        direction: Direction::Addition,
        max_addition: f64::NEG_INFINITY,
        addition_z: 0,
        max_removal: f64::NEG_INFINITY,
        removal_z: 0,
        bound,
        slack: 0.0,
        passed: false,
    };
    let base = LeakagePmfSpec::new(0, r, p)?;
    let zmax = LeakagePmfSpec { q: q_max + 1, ..base }.support_max();
    let tables: Vec<Vec<f64>> = (0..=q_max + 1)
        .map(|q| {
            let spec = LeakagePmfSpec { q, ..base };
            (0..=zmax).map(|z| spec.ln_pmf(z)).collect()
        })
        .collect();
    for q in 0..=q_max {
        let (lower, upper) = (&tables[q as usize], &tables[q as usize + 1]);
        for z in 0..=zmax {
            let (a, b) = (lower[z as usize], upper[z as usize]);
            if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
                continue;
            }
            let (add, remove) = (lam * (a - b), lam * (b - a));
            if add > best.max_addition {
                best.max_addition = add;
                best.addition_z = z;
            }
            if remove > best.max_removal {
                best.max_removal = remove;
                best.removal_z = z;
            }
            for (value, dir) in [(add, Direction::Addition), (remove, Direction::Removal)] {
                if value > best.max_log_ratio {
                    best.max_log_ratio = value;
                    best.attaining_z = z;
                    best.attaining_q = q;
                    best.direction = dir;
                }
            }
        }
    }
    best.slack = RATIO_TOLERANCE;
    best.passed = if bound.is_infinite() {
        true
    } else {
        best.max_ratio() <= bound.exp() + best.slack
    };
    Ok(best)
}

/// Sweeps counts `0..=q_max` and both neighbour directions at selection probability `p`.
pub fn verify_theorem1(r: f64, p: f64, lambda: u32, q_max: u64) -> Result<DpRatioResult> {
    let bound = leakage_epsilon(lambda, r, p)?;
    sweep(r, p, lambda, q_max, bound)
}

/// As [`verify_theorem1`] with the coalition's selection probability for `c`
/// colluding nodes and `t = c + 1`.
pub fn verify_collusion(r: f64, nodes: usize, c: usize, lambda: u32, q_max: u64) -> Result<DpRatioResult> {
    let p = collusion_p(nodes, c)?;
    let bound = collusion_epsilon(lambda, r, nodes, c)?;
    sweep(r, p, lambda, q_max, bound)
}

/// `alpha^beta / (1 + alpha)`: probability that `beta + G2(alpha)` is at most zero.
pub fn one_sided_tail(alpha: f64, beta: u64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    Ok(alpha.powf(beta as f64) / (1.0 + alpha))
}

/// `q + max(0, beta + G2(e^-eps))`.
pub fn one_sided_mechanism<R: Rng + ?Sized>(q: u64, eps: f64, beta: u64, rng: &mut R) -> Result<u64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {eps}")));
    }
    let noise = beta as i64 + two_sided_geometric_sample((-eps).exp(), rng)?;
    Ok(q + noise.max(0) as u64)
}

/// Exact output mass of the one-sided mechanism.
pub fn one_sided_pmf(q: u64, eps: f64, beta: u64, z: u64) -> Result<f64> {
    let alpha = (-eps).exp();
    if z < q {
        return Ok(0.0);
    }
    if z == q {
        return one_sided_tail(alpha, beta);
    }
    two_sided_geometric_pmf(z as i64 - q as i64 - beta as i64, alpha)
}

/// Exhaustive approximate-DP check of the one-sided mechanism.
#[derive(Clone, Debug, PartialEq)]
pub struct OneSidedCheck {
    pub eps: f64,
    pub delta: f64,
    pub beta: u64,
    pub q_max: u64,
    /// Largest `sum_z max(0, Pr_a(z) - e^eps Pr_b(z))` over neighbours and directions.
    pub max_hockey_stick: f64,
    /// Largest `Pr_a(z) - e^eps Pr_b(z)` at a single output.
    pub max_pointwise_excess: f64,
    pub passed: bool,
}

/// Checks `(eps, delta)`-DP for true counts `0..=q_max` against `q + 1`, both directions.
pub fn verify_one_sided(eps: f64, delta: f64, beta: u64, q_max: u64) -> Result<OneSidedCheck> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    // Past this offset both masses decay geometrically with ratio exactly alpha.
    let span = beta + 2 + (60.0 / eps).ceil() as u64;
    let e = eps.exp();
    let mut hockey: f64 = 0.0;
    let mut pointwise: f64 = 0.0;
    for q in 0..=q_max {
        let lo: Vec<f64> = (0..=q + 1 + span).map(|z| one_sided_pmf(q, eps, beta, z)).collect::<Result<_>>()?;
        let hi: Vec<f64> = (0..=q + 1 + span).map(|z| one_sided_pmf(q + 1, eps, beta, z)).collect::<Result<_>>()?;
        for (a, b) in [(&lo, &hi), (&hi, &lo)] {
            let mut sum = 0.0;
            for (pa, pb) in a.iter().zip(b.iter()) {
                let excess = pa - e * pb;
                pointwise = pointwise.max(excess);
                sum += excess.max(0.0);
            }
            hockey = hockey.max(sum);
        }
    }
    Ok(OneSidedCheck {
        eps,
        delta,
        beta,
        q_max,
        max_hockey_stick: hockey,
        max_pointwise_excess: pointwise,
        passed: hockey <= delta,
    })
}

/// Simulated single-node view of one key against the analytic leakage law.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewCheck {
    pub q: u64,
    pub r: f64,
    pub p: f64,
    pub trials: u64,
    /// Node 0's observed count per trial, with and without dummies.
    pub histogram: Vec<u64>,
    pub histogram_no_dummies: Vec<u64>,
    pub tv: f64,
    pub tv_no_dummies: f64,
    /// Empirical `Pr[Z > q]`.
    pub above_q: f64,
    pub above_q_no_dummies: f64,
}

impl ViewCheck {
    /// `z, empirical, analytic, empirical_no_dummies, binomial` rows.
    pub fn to_csv(&self, config_hash: &str) -> Result<String> {
        let spec = LeakagePmfSpec::new(self.q, self.r, self.p)?;
        let n = self.trials as f64;
        let mut out = String::from("z,empirical,analytic,empirical_no_dummies,binomial,config_hash\n");
        for z in 0..self.histogram.len().max(self.histogram_no_dummies.len()) {
            let h = |v: &[u64]| v.get(z).copied().unwrap_or(0) as f64 / n;
            out.push_str(&format!(
                "{z},{},{},{},{},{config_hash}\n",
                fmt_f(h(&self.histogram)),
                fmt_f(spec.pmf(z as u64)),
                fmt_f(h(&self.histogram_no_dummies)),
                fmt_f(binomial_pmf(z as u64, self.q, self.p)?),
            ));
        }
        Ok(out)
    }
}

fn histogram_tv(hist: &[u64], trials: u64, pmf: impl Fn(u64) -> f64, len: usize) -> f64 {
    let n = trials as f64;
    let emp: Vec<f64> = (0..len).map(|z| hist.get(z).copied().unwrap_or(0) as f64 / n).collect();
    let exact: Vec<f64> = (0..len as u64).map(&pmf).collect();
    let covered: f64 = exact.iter().sum();
    total_variation(&emp, &exact) + 0.5 * (1.0 - covered).max(0.0)
}

/// Runs `trials` independent collections of one key held by `q` clients
/// through client sharing, dummy generation and the shuffler, and histograms
/// how many envelopes node 0 receives.
pub fn empirical_view_check(params: &ProtocolParams, q: u64, trials: u64, seed: u64) -> Result<ViewCheck> {
    if trials == 0 {
        return Err(invalid("view check needs at least one trial"));
    }
    let params = ProtocolParams {
        key_domain: 1,
        max_keys: 1,
        clients: q as usize,
        center: 0.0,
        half_range: 1.0,
        ..params.clone()
    };
    params.validate()?;
    let codec = FixedPointCodec::new(20, 1.0)?;
    let pair = [KeyValuePair { key: 0, value: 0.0 }];
    let count_at_zero = |subs: Vec<Submission>, rng: &mut SimRng| -> Result<usize> {
        let (inboxes, _) = shuffle_channel(subs, params.nodes, rng)?;
        Ok(inboxes[0].len())
    };
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, Domain::Verifier, i);
            let mut clients = Vec::with_capacity(q as usize + 1);
            for c in 0..q {
                clients.push(Submission {
                    sender: Sender::Client(c),
                    envelopes: client_prepare(c, &pair, &params, &codec, &mut rng)?,
                });
            }
            let plain = count_at_zero(clients.clone(), &mut rng)?;
            clients.push(Submission {
                sender: Sender::DummyGenerator(0),
                envelopes: dummy_generate(&params, &mut rng)?,
            });
            let with = count_at_zero(clients, &mut rng)?;
            Ok((with, plain))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut histogram = Vec::new();
    let mut histogram_no_dummies = vec![0u64; q as usize + 1];
    for (with, plain) in per_trial {
        if with >= histogram.len() {
            histogram.resize(with + 1, 0);
        }
        histogram[with] += 1;
        if plain >= histogram_no_dummies.len() {
            histogram_no_dummies.resize(plain + 1, 0);
        }
        histogram_no_dummies[plain] += 1;
    }
    let p = params.p();
    let spec = LeakagePmfSpec::new(q, params.rate, p)?;
    let len = (spec.support_max() as usize + 1).max(histogram.len());
    let tv = histogram_tv(&histogram, trials, |z| spec.pmf(z), len);
    let tv_no_dummies = histogram_tv(
        &histogram_no_dummies,
        trials,
        |z| binomial_pmf(z, q, p).unwrap_or(0.0),
        histogram_no_dummies.len().max(q as usize + 1),
    );
    let above = |h: &[u64]| h.iter().skip(q as usize + 1).sum::<u64>() as f64 / trials as f64;
    Ok(ViewCheck {
        q,
        r: params.rate,
        p,
        trials,
        above_q: above(&histogram),
        above_q_no_dummies: above(&histogram_no_dummies),
        histogram,
        histogram_no_dummies,
        tv,
        tv_no_dummies,
    })
}
