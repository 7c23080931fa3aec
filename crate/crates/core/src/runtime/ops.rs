//! Interactive operations on shared values.

use crate::distributions::gamma_sample;
use crate::error::{invalid, Error, Result};
use crate::field::{Fe, Fp, Modulus};
use crate::fixed::FixedPointCodec;
use crate::rng::SimRng;
use crate::runtime::bus::{Audience, Bus};
use crate::runtime::dealer::{BeaverTriple, Dealer, TruncMask, TRUNC_KAPPA};
use crate::runtime::shared::Shared;

/// Fractional bits of the Newton reciprocal. The product `w * e` inside an
/// iteration needs `2F + 3` bits plus the truncation mask, which caps `F` at 41
/// in a 127-bit field.
pub const RECIPROCAL_BITS: u32 = 41;

/// Upper limit on Newton iterations.
pub const MAX_NEWTON_ITERATIONS: u32 = 64;

/// Multiplies pairs of shared values in one round using one triple per pair.
pub fn beaver_multiply_many<M: Modulus>(
    bus: &mut Bus,
    xs: &[Shared<M>],
    ys: &[Shared<M>],
    triples: Vec<BeaverTriple<M>>,
) -> Result<Vec<Shared<M>>> {
    if xs.len() != ys.len() || xs.len() != triples.len() {
        return Err(invalid(format!(
            "{} left operands, {} right operands, {} triples",
            xs.len(),
            ys.len(),
            triples.len()
        )));
    }
    let mut masked = Vec::with_capacity(2 * xs.len());
    for ((x, y), t) in xs.iter().zip(ys).zip(&triples) {
        bus.consume_triple(t.id)?;
        if bus.audit()
            && t.a.reconstruct_oracle() * t.b.reconstruct_oracle() != t.c.reconstruct_oracle()
        {
            return Err(Error::Protocol(format!("triple {} fails a*b = c", t.id)));
        }
        masked.push(x.sub(&t.a)?);
        masked.push(y.sub(&t.b)?);
    }
    let refs: Vec<&Shared<M>> = masked.iter().collect();
    let opened = bus.open_many(&refs, Audience::Holders)?;
    triples
        .iter()
        .zip(opened.chunks(2))
        .map(|(t, de)| {
            let (d, e) = (de[0], de[1]);
            Ok(t.c
                .add(&t.b.scale(d))?
                .add(&t.a.scale(e))?
                .add_const(d * e))
        })
        .collect()
}

/// `[x * y]` from one triple; opens `x - a` and `y - b`.
pub fn beaver_multiply<M: Modulus>(
    bus: &mut Bus,
    x: &Shared<M>,
    y: &Shared<M>,
    triple: BeaverTriple<M>,
) -> Result<Shared<M>> {
    Ok(beaver_multiply_many(bus, std::slice::from_ref(x), std::slice::from_ref(y), vec![triple])?
        .pop()
        .unwrap())
}

/// Divides signed values by `2^m` with probabilistic rounding, in one round.
///
/// Each input must satisfy `|x| < 2^(k-1)` for its mask's `k`; the result is
/// `floor(x / 2^m)` or that plus one, rounding up with probability equal to
/// the discarded fraction.
pub fn trunc_many(bus: &mut Bus, xs: &[Shared], masks: Vec<TruncMask>) -> Result<Vec<Shared>> {
    if xs.len() != masks.len() {
        return Err(invalid(format!("{} values for {} masks", xs.len(), masks.len())));
    }
    let masked: Vec<Shared> = xs
        .iter()
        .zip(&masks)
        .map(|(x, mask)| Ok(x.add(&mask.full)?.add_const(Fe::new(1u128 << (mask.k - 1)))))
        .collect::<Result<_>>()?;
    let refs: Vec<&Shared> = masked.iter().collect();
    let opened = bus.open_many(&refs, Audience::Holders)?;
    xs.iter()
        .zip(&masks)
        .zip(opened)
        .map(|((x, mask), c)| {
            let low_c = Fe::new(c.value() & ((1u128 << mask.m) - 1));
            let inv = Fe::new(1u128 << mask.m).inverse().unwrap();
            Ok(x.add(&mask.low)?.add_const(-low_c).scale(inv))
        })
        .collect()
}

/// Public schedule for dividing by a secret integer known to lie in `[low, high]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DivisionPlan {
    pub low: u64,
    pub high: u64,
    pub frac_bits: u32,
    pub iterations: u32,
    /// `round(2^F * 2 / (low + high))`.
    pub initial: u128,
    /// Bit length bound of the scaled numerator magnitude.
    pub numerator_bits: u32,
}

fn bits_of(x: f64) -> u32 {
    if x < 1.0 {
        1
    } else {
        x.log2().floor() as u32 + 1
    }
}

impl DivisionPlan {
    /// `numerator_bound` bounds `|a|` in real units.
    pub fn new(low: u64, high: u64, frac_bits: u32, numerator_bound: f64) -> Result<Self> {
        if low == 0 || low > high {
            return Err(invalid(format!("divisor range [{low}, {high}] needs 1 <= low <= high")));
        }
        if frac_bits >= RECIPROCAL_BITS {
            return Err(invalid(format!(
                "{frac_bits} fractional bits leave no room for a {RECIPROCAL_BITS}-bit reciprocal"
            )));
        }
        if !(numerator_bound.is_finite() && numerator_bound >= 0.0) {
            return Err(invalid(format!("numerator bound must be finite, got {numerator_bound}")));
        }
        let f = RECIPROCAL_BITS as f64;
        let rho = (high - low) as f64 / (high + low) as f64;
        let iterations = if rho == 0.0 {
            1
        } else {
            ((f / -rho.log2()).log2().ceil().max(1.0) as u32).min(MAX_NEWTON_ITERATIONS)
        };
        let initial = ((2.0 * f.exp2()) / (low + high) as f64).round() as u128;
        let numerator_bits = bits_of(numerator_bound * (frac_bits as f64).exp2());
        let plan = Self {
            low,
            high,
            frac_bits,
            iterations,
            initial,
            numerator_bits,
        };
        if plan.product_bits() + TRUNC_KAPPA + 1 > 127 {
            return Err(invalid(format!(
                "numerator bound {numerator_bound} is too wide for secure division"
            )));
        }
        Ok(plan)
    }

    fn newton_bits(&self) -> u32 {
        2 * RECIPROCAL_BITS + 3
    }

    fn product_bits(&self) -> u32 {
        self.numerator_bits + RECIPROCAL_BITS + 2
    }

    /// Rounds spent by [`fixed_div_many`].
    pub fn rounds(&self) -> u32 {
        1 + 3 * (self.iterations - 1) + 2
    }
}

/// Shares of `a / b` at the numerator's scale.
///
/// `nums` are fixed-point values, `dens` plain integers in the plan's range.
/// Every element draws its triples and masks from its own dealer so batched
/// and per-key runs agree.
pub fn fixed_div_many(
    bus: &mut Bus,
    nums: &[Shared],
    dens: &[Shared],
    plan: &DivisionPlan,
    dealers: &mut [&mut Dealer],
) -> Result<Vec<Shared>> {
    let n = nums.len();
    if dens.len() != n || dealers.len() != n {
        return Err(invalid(format!(
            "{n} numerators, {} divisors, {} dealers",
            dens.len(),
            dealers.len()
        )));
    }
    let two = Fe::new(1u128 << (RECIPROCAL_BITS + 1));
    let w0 = Fe::new(plan.initial);
    let newton_k = plan.newton_bits();

    let mut masks = Vec::with_capacity(n);
    let mut prods = Vec::with_capacity(n);
    for (den, dealer) in dens.iter().zip(dealers.iter_mut()) {
        let e = den.scale(-w0).add_const(two);
        prods.push(e.scale(w0));
        masks.push(dealer.trunc_mask(den.holders(), newton_k, RECIPROCAL_BITS)?);
    }
    let mut w = trunc_many(bus, &prods, masks)?;

    for _ in 1..plan.iterations {
        let triples = take_triples(dealers, dens)?;
        let dw = beaver_multiply_many(bus, dens, &w, triples)?;
        let es: Vec<Shared> = dw.iter().map(|t| t.neg().add_const(two)).collect();
        let triples = take_triples(dealers, dens)?;
        let we = beaver_multiply_many(bus, &w, &es, triples)?;
        let masks = take_masks(dealers, dens, newton_k)?;
        w = trunc_many(bus, &we, masks)?;
    }

    let triples = take_triples(dealers, dens)?;
    let aw = beaver_multiply_many(bus, nums, &w, triples)?;
    let masks = take_masks(dealers, dens, plan.product_bits())?;
    trunc_many(bus, &aw, masks)
}

fn take_triples(dealers: &mut [&mut Dealer], like: &[Shared]) -> Result<Vec<BeaverTriple<crate::field::M127>>> {
    dealers
        .iter_mut()
        .zip(like)
        .map(|(d, s)| d.triple(s.holders()))
        .collect()
}

fn take_masks(dealers: &mut [&mut Dealer], like: &[Shared], k: u32) -> Result<Vec<TruncMask>> {
    dealers
        .iter_mut()
        .zip(like)
        .map(|(d, s)| d.trunc_mask(s.holders(), k, RECIPROCAL_BITS))
        .collect()
}

/// Single division; see [`fixed_div_many`].
pub fn fixed_div(
    bus: &mut Bus,
    a: &Shared,
    b: &Shared,
    plan: &DivisionPlan,
    dealer: &mut Dealer,
) -> Result<Shared> {
    Ok(fixed_div_many(
        bus,
        std::slice::from_ref(a),
        std::slice::from_ref(b),
        plan,
        &mut [dealer],
    )?
    .pop()
    .unwrap())
}

/// One node's fixed-point contribution `g1 - g2` with `g1, g2 ~ Gamma(1/nodes, scale)`.
pub fn laplace_contribution(
    nodes: usize,
    scale: f64,
    codec: &FixedPointCodec,
    rng: &mut SimRng,
) -> Result<Fe> {
    let shape = 1.0 / nodes as f64;
    let g1 = gamma_sample(shape, scale, rng)?;
    let g2 = gamma_sample(shape, scale, rng)?;
    codec.encode(g1 - g2)
}

/// Shares of `xi ~ Lap(sensitivity / eps)` held by all nodes, built from
/// purely local sampling. `node_rngs[i]` is node `i`'s private stream.
///
/// Any coalition can subtract its own contributions, so the noise left
/// against `c` colluders is a difference of `Gamma((nodes - c) / nodes)`
/// variables rather than a full Laplace draw.
pub fn distributed_laplace(
    sensitivity: f64,
    eps: f64,
    codec: &FixedPointCodec,
    node_rngs: &mut [SimRng],
) -> Result<Shared> {
    if !(sensitivity.is_finite() && sensitivity > 0.0) {
        return Err(invalid(format!("sensitivity must be positive, got {sensitivity}")));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {eps}")));
    }
    let nodes = node_rngs.len();
    if nodes < 2 {
        return Err(invalid("distributed noise needs at least 2 nodes"));
    }
    let scale = sensitivity / eps;
    let shares = node_rngs
        .iter_mut()
        .map(|rng| laplace_contribution(nodes, scale, codec, rng))
        .collect::<Result<Vec<_>>>()?;
    Shared::new((0..nodes).collect(), shares)
}

/// Checks `x * (1 - x) = 0` for each flag among its own holders: one
/// multiplication round and one opening round for the whole batch.
pub fn validate_flags<M: Modulus>(
    bus: &mut Bus,
    flags: &[Shared<M>],
    triples: Vec<BeaverTriple<M>>,
) -> Result<Vec<bool>> {
    let squares = beaver_multiply_many(bus, flags, flags, triples)?;
    let checks: Vec<Shared<M>> = flags
        .iter()
        .zip(&squares)
        .map(|(x, sq)| x.sub(sq))
        .collect::<Result<_>>()?;
    let refs: Vec<&Shared<M>> = checks.iter().collect();
    Ok(bus
        .open_many(&refs, Audience::Holders)?
        .into_iter()
        .map(Fp::is_zero)
        .collect())
}

pub fn validate_flag<M: Modulus>(
    bus: &mut Bus,
    flag: &Shared<M>,
    triple: BeaverTriple<M>,
) -> Result<bool> {
    Ok(validate_flags(bus, std::slice::from_ref(flag), vec![triple])?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::laplace_cdf;
    use crate::field::{Tiny101, M127};
    use crate::rng::{substream, substream2, Domain};
    use crate::sharing::{share, share_among};
    use crate::stats::{ks_critical, ks_statistic, mean_and_variance};
    use rand::Rng;

    fn shared<M: Modulus>(x: Fp<M>, holders: &[usize], rng: &mut SimRng) -> Shared<M> {
        Shared::from_shares(&share_among(x, holders, rng).unwrap()).unwrap()
    }

    fn codec() -> FixedPointCodec {
        FixedPointCodec::new(20, 1e12).unwrap()
    }

    #[test]
    fn beaver_small_examples() {
        let mut rng = substream(1, Domain::Bench, 0);
        let mut dealer = Dealer::new(substream(1, Domain::Dealer, 0), 0);
        let h = [0, 1, 2];
        let mut bus = Bus::new(3).with_audit(true);
        let x = shared(Fe::new(3), &h, &mut rng);
        let y = shared(Fe::new(4), &h, &mut rng);
        let z = beaver_multiply(&mut bus, &x, &y, dealer.triple(&h).unwrap()).unwrap();
        assert_eq!(z.reconstruct_oracle(), Fe::new(12));
        assert_eq!(bus.metrics().rounds, 1);
        // each node broadcasts two elements to the two other holders
        assert_eq!(bus.metrics().node_bytes(), 3 * 2 * 2 * 16);
        let zero = shared(Fe::ZERO, &h, &mut rng);
        for y in [0u128, 1, 99, M127::P - 1] {
            let y = shared(Fe::new(y), &h, &mut rng);
            let z = beaver_multiply(&mut bus, &zero, &y, dealer.triple(&h).unwrap()).unwrap();
            assert!(z.reconstruct_oracle().is_zero());
        }
    }

    #[test]
    fn beaver_matches_plaintext_products_over_tiny_field() {
        let mut rng = substream(2, Domain::Bench, 0);
        let mut dealer = Dealer::new(substream(2, Domain::Dealer, 0), 0);
        let h = [0, 2, 4];
        let mut bus = Bus::new(5).with_audit(true);
        for _ in 0..100 {
            let (a, b) = (rng.gen_range(0..101u128), rng.gen_range(0..101u128));
            let x = shared(Fp::<Tiny101>::new(a), &h, &mut rng);
            let y = shared(Fp::<Tiny101>::new(b), &h, &mut rng);
            let z = beaver_multiply(&mut bus, &x, &y, dealer.triple(&h).unwrap()).unwrap();
            assert_eq!(z.reconstruct_oracle().value(), a * b % 101);
        }
    }

    #[test]
    fn triple_reuse_and_bad_triples_are_errors() {
        let mut rng = substream(3, Domain::Bench, 0);
        let mut dealer = Dealer::new(substream(3, Domain::Dealer, 0), 0);
        let h = [0, 1];
        let mut bus = Bus::new(2).with_audit(true);
        let x = shared(Fe::new(2), &h, &mut rng);
        let t = dealer.triple::<M127>(&h).unwrap();
        beaver_multiply(&mut bus, &x, &x, t.clone()).unwrap();
        assert!(matches!(
            beaver_multiply(&mut bus, &x, &x, t),
            Err(Error::Protocol(_))
        ));
        let mut bad = dealer.triple::<M127>(&h).unwrap();
        bad.c = bad.c.add_const(Fe::ONE);
        assert!(beaver_multiply(&mut bus, &x, &x, bad).is_err());
    }

    #[test]
    fn truncation_rounds_probabilistically() {
        let mut rng = substream(4, Domain::Bench, 0);
        let mut dealer = Dealer::new(substream(4, Domain::Dealer, 0), 0);
        let h = [0, 1, 2];
        let mut bus = Bus::new(3);
        let mut ups = 0;
        let trials = 4000;
        for i in 0..trials {
            let x: i128 = if i % 2 == 0 { (5 << 20) + (1 << 18) } else { -(5 << 20) + (1 << 18) };
            let s = shared(Fe::from_i128(x), &h, &mut rng);
            let mask = dealer.trunc_mask(&h, 40, 20).unwrap();
            let out = trunc_many(&mut bus, &[s], vec![mask]).unwrap()[0]
                .reconstruct_oracle()
                .to_signed();
            let floor = x.div_euclid(1 << 20);
            assert!(out == floor || out == floor + 1, "{x} -> {out}");
            ups += (out == floor + 1) as usize;
        }
        // discarded fraction is 1/4 for both inputs
        let p = ups as f64 / trials as f64;
        assert!((p - 0.25).abs() < 4.0 * (0.25 * 0.75 / trials as f64).sqrt(), "{p}");
    }

    fn divide(a: f64, b: u64, low: u64, high: u64, bound: f64, seed: u64) -> f64 {
        let c = codec();
        let mut rng = substream(seed, Domain::Bench, 0);
        let mut dealer = Dealer::new(substream(seed, Domain::Dealer, 0), 0);
        let h = [0, 1, 2];
        let mut bus = Bus::new(3).with_audit(true);
        let plan = DivisionPlan::new(low, high, 20, bound).unwrap();
        let num = shared(c.encode(a).unwrap(), &h, &mut rng);
        let den = shared(Fe::from_u64(b), &h, &mut rng);
        let q = fixed_div(&mut bus, &num, &den, &plan, &mut dealer).unwrap();
        assert_eq!(bus.metrics().rounds, plan.rounds() as u64);
        c.decode(q.reconstruct_oracle())
    }

    #[test]
    fn division_examples() {
        let tol = 4.0 * (-20f64).exp2();
        assert!((divide(10.0, 4, 1, 16, 100.0, 1) - 2.5).abs() <= tol);
        assert_eq!(divide(0.0, 7, 1, 16, 100.0, 2), 0.0);
        assert!((divide(-10.0, 3, 1, 16, 100.0, 3) + 10.0 / 3.0).abs() <= tol);
    }

    #[test]
    fn division_sweep_stays_within_tolerance() {
        let tol = 4.0 * (-20f64).exp2();
        let mut rng = substream(11, Domain::Bench, 1);
        let (low, high) = (1, 1030);
        let bound = 1030.0 * 10.0;
        let mut worst: f64 = 0.0;
        for i in 0..60 {
            let b = rng.gen_range(low..=high);
            let a = codec().quantize(rng.gen_range(-10.0..10.0) * b as f64);
            let got = divide(a, b, low, high, bound, 100 + i);
            worst = worst.max((got - a / b as f64).abs());
        }
        assert!(worst <= tol, "worst error {worst}");
    }

    #[test]
    fn division_rejects_bad_ranges() {
        assert!(DivisionPlan::new(0, 10, 20, 1.0).is_err());
        assert!(DivisionPlan::new(11, 10, 20, 1.0).is_err());
        assert!(DivisionPlan::new(1, 10, 20, 1e30).is_err());
        let p = DivisionPlan::new(5, 5, 20, 1.0).unwrap();
        assert_eq!(p.iterations, 1);
    }

    #[test]
    fn newton_iteration_count_reaches_working_precision() {
        for (low, high) in [(1u64, 16u64), (1, 1000), (3, 200), (1, 100_000)] {
            let p = DivisionPlan::new(low, high, 20, 1.0).unwrap();
            let rho = (high - low) as f64 / (high + low) as f64;
            let residual = rho.powf((p.iterations as f64).exp2());
            assert!(residual <= (-(RECIPROCAL_BITS as f64)).exp2());
            let fewer = rho.powf(((p.iterations - 1) as f64).exp2());
            assert!(fewer > (-(RECIPROCAL_BITS as f64)).exp2());
        }
    }

    #[test]
    fn distributed_laplace_matches_the_target_law() {
        let c = codec();
        let (delta, eps, nodes) = (1.0, 0.5, 5);
        let b = delta / eps;
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|j| {
                let mut rngs: Vec<SimRng> =
                    (0..nodes).map(|i| substream2(8, Domain::Noise, i, j)).collect();
                c.decode(distributed_laplace(delta, eps, &c, &mut rngs).unwrap().reconstruct_oracle())
            })
            .collect();
        assert!(ks_statistic(&xs, |x| laplace_cdf(x, b).unwrap()) < ks_critical(n as usize, 0.01));
        let (mean, var) = mean_and_variance(&xs);
        let sd = 2f64.sqrt() * b;
        assert!(mean.abs() < 3.0 * sd / (n as f64).sqrt());
        assert!((var.sqrt() / sd - 1.0).abs() < 0.02);
    }

    #[test]
    fn distributed_laplace_validates_parameters() {
        let c = codec();
        let mut rngs: Vec<SimRng> = (0..3).map(|i| substream(1, Domain::Noise, i)).collect();
        assert!(distributed_laplace(0.0, 1.0, &c, &mut rngs).is_err());
        assert!(distributed_laplace(1.0, -1.0, &c, &mut rngs).is_err());
        assert!(distributed_laplace(1.0, 1.0, &c, &mut rngs[..1]).is_err());
    }

    #[test]
    fn flag_validation() {
        let mut rng = substream(5, Domain::Bench, 0);
        let mut dealer = Dealer::new(substream(5, Domain::Dealer, 0), 0);
        let h = [1, 3];
        let mut bus = Bus::new(4).with_audit(true).with_views();
        for (flag, ok) in [(0i128, true), (1, true), (2, false), (-1, false), (7, false)] {
            let x = shared(Fe::from_i128(flag), &h, &mut rng);
            assert_eq!(validate_flag(&mut bus, &x, dealer.triple(&h).unwrap()).unwrap(), ok);
        }
        // nodes outside the recipient set take no part
        assert!(bus.view(0).unwrap().is_empty() && bus.view(2).unwrap().is_empty());
        assert_eq!(bus.metrics().link(0, 1) + bus.metrics().link(2, 3), 0);
    }

    #[test]
    fn share_then_open_round_trip() {
        let mut rng = substream(6, Domain::Bench, 0);
        let mut bus = Bus::new(4);
        let x = Fe::random(&mut rng);
        let s = Shared::from_shares(&share(x, 4, &mut rng).unwrap()).unwrap();
        assert_eq!(bus.open(&s, Audience::All).unwrap(), x);
    }
}
