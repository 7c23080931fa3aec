//! Simulated trusted dealer for correlated randomness.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::field::{Fe, Fp, Modulus};
use crate::rng::SimRng;
use crate::runtime::shared::Shared;
use crate::sharing::share_among;

/// Statistical hiding parameter for probabilistic truncation.
pub const TRUNC_KAPPA: u32 = 40;

/// Shares of random `a`, `b` and `a * b`.
#[derive(Clone, Debug)]
pub struct BeaverTriple<M: Modulus> {
    pub id: u64,
    pub a: Shared<M>,
    pub b: Shared<M>,
    pub c: Shared<M>,
}

/// Masks for truncating a `k`-bit signed value by `m` bits: `low` is uniform
/// below `2^m` and `full = high * 2^m + low` with `high` uniform below
/// `2^(k + kappa - m)`.
#[derive(Clone, Debug)]
pub struct TruncMask {
    pub k: u32,
    pub m: u32,
    pub low: Shared,
    pub full: Shared,
}

/// Issues triples and masks from its own random stream. `prefix` keeps
/// triple ids from different dealers apart.
#[derive(Debug)]
pub struct Dealer {
    rng: SimRng,
    prefix: u64,
    counter: u64,
}

impl Dealer {
    pub fn new(rng: SimRng, prefix: u64) -> Self {
        Self {
            rng,
            prefix,
            counter: 0,
        }
    }

    fn next_id(&mut self) -> u64 {
        self.counter += 1;
        (self.prefix << 40) | self.counter
    }

    fn deal<M: Modulus>(&mut self, x: Fp<M>, holders: &[usize]) -> Result<Shared<M>> {
        Shared::from_shares(&share_among(x, holders, &mut self.rng)?)
    }

    pub fn triple<M: Modulus>(&mut self, holders: &[usize]) -> Result<BeaverTriple<M>> {
        let a = Fp::random(&mut self.rng);
        let b = Fp::random(&mut self.rng);
        Ok(BeaverTriple {
            id: self.next_id(),
            a: self.deal(a, holders)?,
            b: self.deal(b, holders)?,
            c: self.deal(a * b, holders)?,
        })
    }

    pub fn trunc_mask(&mut self, holders: &[usize], k: u32, m: u32) -> Result<TruncMask> {
        if m == 0 || m >= k || k + TRUNC_KAPPA + 1 > 127 {
            return Err(invalid(format!(
                "cannot truncate a {k}-bit value by {m} bits in a 127-bit field"
            )));
        }
        let low: u128 = self.rng.gen_range(0..1u128 << m);
        let high: u128 = self.rng.gen_range(0..1u128 << (k + TRUNC_KAPPA - m));
        Ok(TruncMask {
            k,
            m,
            low: self.deal(Fe::new(low), holders)?,
            full: self.deal(Fe::new((high << m) | low), holders)?,
        })
    }
}
