//! Additive (t, t) secret sharing.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::field::{Fp, Modulus};

/// One holder's additive share of a secret.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Share<M: Modulus> {
    pub holder: usize,
    pub element: Fp<M>,
}

/// Splits `secret` into `count` shares held by `0..count`.
pub fn share<M: Modulus, R: Rng + ?Sized>(
    secret: Fp<M>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Share<M>>> {
    let holders: Vec<usize> = (0..count).collect();
    share_among(secret, &holders, rng)
}

/// Splits `secret` among the given holders. The first `len - 1` shares are
/// uniform; the last one fixes the sum.
pub fn share_among<M: Modulus, R: Rng + ?Sized>(
    secret: Fp<M>,
    holders: &[usize],
    rng: &mut R,
) -> Result<Vec<Share<M>>> {
    if holders.len() < 2 {
        return Err(invalid(format!(
            "sharing needs at least 2 holders, got {}",
            holders.len()
        )));
    }
    let mut out = Vec::with_capacity(holders.len());
    let mut acc = Fp::ZERO;
    for &holder in &holders[..holders.len() - 1] {
        let element = Fp::random(rng);
        acc += element;
        out.push(Share { holder, element });
    }
    out.push(Share {
        holder: holders[holders.len() - 1],
        element: secret - acc,
    });
    Ok(out)
}

/// Sum of all share elements.
pub fn reconstruct<M: Modulus>(shares: &[Share<M>]) -> Result<Fp<M>> {
    if shares.is_empty() {
        return Err(invalid("cannot reconstruct from an empty share list"));
    }
    Ok(shares.iter().map(|s| s.element).sum())
}

/// Computes shares of `sum_i coeffs[i] * x_i + constant` locally.
///
/// Every input vector must be held by the same holders in the same order. The
/// public constant is folded into the first holder's share.
pub fn linear_combine<M: Modulus>(
    coeffs: &[Fp<M>],
    inputs: &[&[Share<M>]],
    constant: Fp<M>,
) -> Result<Vec<Share<M>>> {
    if coeffs.len() != inputs.len() {
        return Err(invalid(format!(
            "{} coefficients for {} inputs",
            coeffs.len(),
            inputs.len()
        )));
    }
    let Some(first) = inputs.first() else {
        return Err(invalid("linear_combine needs at least one input"));
    };
    for other in &inputs[1..] {
        let same = other.len() == first.len()
            && other.iter().zip(first.iter()).all(|(a, b)| a.holder == b.holder);
        if !same {
            return Err(invalid("inputs are shared among different holder sets"));
        }
    }
    let mut out: Vec<Share<M>> = first
        .iter()
        .map(|s| Share {
            holder: s.holder,
            element: Fp::ZERO,
        })
        .collect();
    for (c, input) in coeffs.iter().zip(inputs) {
        for (o, s) in out.iter_mut().zip(input.iter()) {
            o.element += *c * s.element;
        }
    }
    if let Some(o) = out.first_mut() {
        o.element += constant;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Fe, Tiny101, M127};
    use crate::rng::{substream, Domain};
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    type T = Fp<Tiny101>;

    #[test]
    fn rejects_single_holder() {
        let mut rng = substream(1, Domain::Client, 0);
        assert!(share(Fe::ONE, 1, &mut rng).is_err());
        assert!(reconstruct::<M127>(&[]).is_err());
    }

    #[test]
    fn zero_secret_three_holders() {
        let mut rng = substream(1, Domain::Client, 0);
        let s = share(Fe::ZERO, 3, &mut rng).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(reconstruct(&s).unwrap(), Fe::ZERO);
    }

    #[test]
    fn seeded_sharing_is_reproducible() {
        let a = share(Fe::new(5), 2, &mut substream(9, Domain::Client, 1)).unwrap();
        let b = share(Fe::new(5), 2, &mut substream(9, Domain::Client, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exhaustive_round_trip_tiny_field() {
        let mut rng = substream(2, Domain::Client, 0);
        for s in 0..101u128 {
            for t in 2..6 {
                let shares = share(T::new(s), t, &mut rng).unwrap();
                assert_eq!(reconstruct(&shares).unwrap(), T::new(s));
            }
        }
    }

    /// Chi-square test that, for a fixed secret, the partial sum of t-1 shares
    /// and the joint pair of two shares (t = 3) are uniform on the tiny field.
    #[test]
    fn partial_shares_are_uniform() {
        let mut rng = substream(3, Domain::Client, 0);
        let trials = 202_000usize;
        let mut partial = vec![0usize; 101];
        let mut joint = vec![0usize; 101 * 101];
        for _ in 0..trials {
            let shares = share(T::new(42), 3, &mut rng).unwrap();
            let sub = reconstruct(&shares[..2]).unwrap();
            partial[sub.value() as usize] += 1;
            let j = shares[0].element.value() as usize * 101 + shares[1].element.value() as usize;
            joint[j] += 1;
        }
        for (counts, df) in [(&partial, 100.0), (&joint, 10200.0)] {
            let expected = trials as f64 / counts.len() as f64;
            let stat: f64 = counts
                .iter()
                .map(|&c| (c as f64 - expected).powi(2) / expected)
                .sum();
            let critical = ChiSquared::new(df).unwrap().inverse_cdf(0.99);
            assert!(stat < critical, "chi2 {stat} >= {critical}");
        }
    }

    #[test]
    fn linear_combination_examples() {
        let mut rng = substream(4, Domain::Client, 0);
        let x = share(Fe::new(7), 3, &mut rng).unwrap();
        let y = share(Fe::new(11), 3, &mut rng).unwrap();
        let sum = linear_combine(&[Fe::ONE, Fe::ONE], &[&x, &y], Fe::ZERO).unwrap();
        assert_eq!(reconstruct(&sum).unwrap(), Fe::new(18));
        let (v1, v2, v3) = (Fe::new(3), Fe::from_i128(-2), Fe::new(100));
        let lc = linear_combine(&[v1, v2], &[&x, &y], v3).unwrap();
        assert_eq!(reconstruct(&lc).unwrap(), Fe::new(3 * 7 + 100 - 22));
        let c = linear_combine(&[Fe::ZERO, Fe::ZERO], &[&x, &y], Fe::new(9)).unwrap();
        assert_eq!(reconstruct(&c).unwrap(), Fe::new(9));
    }

    #[test]
    fn mismatched_holders_rejected() {
        let mut rng = substream(5, Domain::Client, 0);
        let x = share_among(Fe::ONE, &[0, 1], &mut rng).unwrap();
        let y = share_among(Fe::ONE, &[0, 2], &mut rng).unwrap();
        assert!(linear_combine(&[Fe::ONE, Fe::ONE], &[&x, &y], Fe::ZERO).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_production_field(s in any::<u128>(), t in 2usize..12, seed in any::<u64>()) {
            let mut rng = substream(seed, Domain::Client, 0);
            let secret = Fe::new(s);
            let shares = share(secret, t, &mut rng).unwrap();
            prop_assert_eq!(reconstruct(&shares).unwrap(), secret);
        }

        #[test]
        fn reconstruct_is_homomorphic(a in any::<u128>(), b in any::<u128>(), k in any::<u128>(), seed in any::<u64>()) {
            let mut rng = substream(seed, Domain::Client, 1);
            let (a, b, k) = (Fe::new(a), Fe::new(b), Fe::new(k));
            let x = share(a, 4, &mut rng).unwrap();
            let y = share(b, 4, &mut rng).unwrap();
            let z = linear_combine(&[k, Fe::ONE], &[&x, &y], Fe::ZERO).unwrap();
            prop_assert_eq!(reconstruct(&z).unwrap(), k * a + b);
        }
    }
}
