//! Prime-field arithmetic.
//!
//! [`Fp`] is generic over a [`Modulus`]. The production field is the Mersenne
//! prime 2^127 - 1 ([`M127`]), which leaves room for the double-width products
//! that fixed-point multiplication and secure division need before truncation.
//! [`Tiny101`] is a 101-element field used to brute-force sharing properties.

use std::fmt;
use std::hash::Hash;
use std::iter::Sum;
use std::marker::PhantomData;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::Rng;

use crate::error::{Error, Result};

/// A public prime modulus together with its reduction routine.
pub trait Modulus:
    Copy + Clone + fmt::Debug + Default + PartialEq + Eq + Hash + Send + Sync + 'static
{
    const P: u128;
    /// Serialized size of one element in bytes.
    const BYTES: usize;
    const NAME: &'static str;

    /// `a * b mod P` for canonical inputs.
    fn mul_mod(a: u128, b: u128) -> u128;
}

/// The Mersenne prime 2^127 - 1.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct M127;

const MASK64: u128 = (1u128 << 64) - 1;

/// 128 x 128 -> 256 bit product as (high, low) halves.
#[inline]
fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    let (a1, a0) = (a >> 64, a & MASK64);
    let (b1, b0) = (b >> 64, b & MASK64);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & MASK64) + (p10 & MASK64);
    let lo = (p00 & MASK64) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

impl Modulus for M127 {
    const P: u128 = (1u128 << 127) - 1;
    const BYTES: usize = 16;
    const NAME: &'static str = "2^127-1";

    #[inline]
    fn mul_mod(a: u128, b: u128) -> u128 {
        let (hi, lo) = mul_wide(a, b);
        // 2^127 == 1 (mod P); hi < 2^126 because both inputs are < 2^127.
        let folded = (hi << 1) | (lo >> 127);
        let s = folded + (lo & Self::P);
        let s = (s & Self::P) + (s >> 127);
        if s >= Self::P {
            s - Self::P
        } else {
            s
        }
    }
}

/// A 101-element field for exhaustive tests.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Tiny101;

impl Modulus for Tiny101 {
    const P: u128 = 101;
    const BYTES: usize = 8;
    const NAME: &'static str = "101";

    #[inline]
    fn mul_mod(a: u128, b: u128) -> u128 {
        (a * b) % Self::P
    }
}

/// An element of the prime field defined by `M`.
#[derive(Copy, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fp<M: Modulus> {
    value: u128,
    _m: PhantomData<M>,
}

/// Element of the production field.
pub type Fe = Fp<M127>;

impl<M: Modulus> Fp<M> {
    pub const ZERO: Self = Self {
        value: 0,
        _m: PhantomData,
    };
    pub const ONE: Self = Self {
        value: 1,
        _m: PhantomData,
    };

    /// Reduces an arbitrary integer into the field.
    pub fn new(value: u128) -> Self {
        Self {
            value: value % M::P,
            _m: PhantomData,
        }
    }

    /// Maps a signed integer into the field; negatives land in the upper half.
    pub fn from_i128(value: i128) -> Self {
        let m = value.unsigned_abs() % M::P;
        if value < 0 && m != 0 {
            Self::new(M::P - m)
        } else {
            Self::new(m)
        }
    }

    pub fn from_u64(value: u64) -> Self {
        Self::new(value as u128)
    }

    /// Canonical representative in `[0, P)`.
    pub fn value(self) -> u128 {
        self.value
    }

    /// Signed representative in `(-P/2, P/2]`.
    pub fn to_signed(self) -> i128 {
        if self.value > M::P / 2 {
            self.value as i128 - M::P as i128
        } else {
            self.value as i128
        }
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            value: rng.gen_range(0..M::P),
            _m: PhantomData,
        }
    }

    pub fn pow(self, mut exp: u128) -> Self {
        let mut base = self;
        let mut acc = Self::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base *= base;
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inverse(self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(self.pow(M::P - 2))
        }
    }

    /// Little-endian encoding of `M::BYTES` bytes.
    pub fn to_le_bytes(self) -> Vec<u8> {
        self.value.to_le_bytes()[..M::BYTES].to_vec()
    }

    pub fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.value.to_le_bytes()[..M::BYTES]);
    }

    /// Decodes exactly `M::BYTES` little-endian bytes, rejecting non-canonical values.
    pub fn from_le_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != M::BYTES {
            return Err(Error::Decode(format!(
                "field element needs {} bytes, got {}",
                M::BYTES,
                bytes.len()
            )));
        }
        let mut buf = [0u8; 16];
        buf[..M::BYTES].copy_from_slice(bytes);
        let value = u128::from_le_bytes(buf);
        if value >= M::P {
            return Err(Error::Decode(format!(
                "non-canonical element {value} for modulus {}",
                M::NAME
            )));
        }
        Ok(Self {
            value,
            _m: PhantomData,
        })
    }
}

impl<M: Modulus> fmt::Debug for Fp<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fp({})", self.value)
    }
}

impl<M: Modulus> fmt::Display for Fp<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl<M: Modulus> Add for Fp<M> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        // Both operands < 2^127, so the sum cannot overflow u128.
        let s = self.value + rhs.value;
        Self {
            value: if s >= M::P { s - M::P } else { s },
            _m: PhantomData,
        }
    }
}

impl<M: Modulus> Sub for Fp<M> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let value = if self.value >= rhs.value {
            self.value - rhs.value
        } else {
            M::P - (rhs.value - self.value)
        };
        Self {
            value,
            _m: PhantomData,
        }
    }
}

impl<M: Modulus> Neg for Fp<M> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::ZERO - self
    }
}

impl<M: Modulus> Mul for Fp<M> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self {
            value: M::mul_mod(self.value, rhs.value),
            _m: PhantomData,
        }
    }
}

impl<M: Modulus> AddAssign for Fp<M> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<M: Modulus> SubAssign for Fp<M> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<M: Modulus> MulAssign for Fp<M> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<M: Modulus> Sum for Fp<M> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + b)
    }
}

impl<'a, M: Modulus> Sum<&'a Fp<M>> for Fp<M> {
    fn sum<I: Iterator<Item = &'a Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + *b)
    }
}
