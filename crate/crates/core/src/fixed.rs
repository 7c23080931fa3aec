//! Fixed-point encoding of signed rationals into the field.

use crate::error::{invalid, Error, Result};
use crate::field::{Fp, Modulus};

/// Default number of fractional bits.
pub const DEFAULT_FRAC_BITS: u32 = 20;

/// Encodes `x` as `round(x * 2^f)`, with negatives in the upper half of the field.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct FixedPointCodec {
    frac_bits: u32,
    range_bound: f64,
}

impl FixedPointCodec {
    /// Fails unless `2 * range_bound * 2^f < P` for the production field.
    pub fn new(frac_bits: u32, range_bound: f64) -> Result<Self> {
        Self::for_modulus::<crate::field::M127>(frac_bits, range_bound)
    }

    pub fn for_modulus<M: Modulus>(frac_bits: u32, range_bound: f64) -> Result<Self> {
        if frac_bits == 0 || frac_bits > 60 {
            return Err(invalid(format!("frac_bits must be in 1..=60, got {frac_bits}")));
        }
        if !(range_bound.is_finite() && range_bound > 0.0) {
            return Err(invalid(format!("range bound must be positive, got {range_bound}")));
        }
        let span = 2.0 * range_bound * (frac_bits as f64).exp2();
        if span >= M::P as f64 {
            return Err(invalid(format!(
                "range bound {range_bound} with {frac_bits} fractional bits overflows the field"
            )));
        }
        Ok(Self {
            frac_bits,
            range_bound,
        })
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn range_bound(&self) -> f64 {
        self.range_bound
    }

    /// `2^f` as a field element.
    pub fn scale<M: Modulus>(&self) -> Fp<M> {
        Fp::new(1u128 << self.frac_bits)
    }

    /// The resolution `2^-f`.
    pub fn ulp(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// `round(x * 2^f)` as a signed integer, range-checked.
    pub fn to_scaled(&self, x: f64) -> Result<i128> {
        if !x.is_finite() || x.abs() > self.range_bound {
            return Err(Error::Range {
                value: x,
                low: -self.range_bound,
                high: self.range_bound,
            });
        }
        Ok((x * (self.frac_bits as f64).exp2()).round() as i128)
    }

    pub fn encode<M: Modulus>(&self, x: f64) -> Result<Fp<M>> {
        Ok(Fp::from_i128(self.to_scaled(x)?))
    }

    pub fn decode<M: Modulus>(&self, e: Fp<M>) -> f64 {
        e.to_signed() as f64 / (self.frac_bits as f64).exp2()
    }

    /// Rounds `x` onto the representable grid without encoding.
    pub fn quantize(&self, x: f64) -> f64 {
        let s = (self.frac_bits as f64).exp2();
        (x * s).round() / s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Fe, M127};
    use proptest::prelude::*;

    fn codec() -> FixedPointCodec {
        FixedPointCodec::new(20, 1e6).unwrap()
    }

    #[test]
    fn dyadic_examples() {
        let c = codec();
        assert_eq!(c.encode::<M127>(0.0).unwrap(), Fe::ZERO);
        assert_eq!(c.decode(c.encode::<M127>(1.5).unwrap()), 1.5);
        assert_eq!(c.decode(c.encode::<M127>(-2.25).unwrap()), -2.25);
        // Negatives occupy the upper half: P - |x| * 2^f.
        assert_eq!(
            c.encode::<M127>(-2.25).unwrap().value(),
            M127::P - (9u128 << 18)
        );
    }

    #[test]
    fn range_errors() {
        let c = FixedPointCodec::new(20, 10.0).unwrap();
        assert!(matches!(c.encode::<M127>(10.5), Err(Error::Range { .. })));
        assert!(c.encode::<M127>(f64::NAN).is_err());
        assert!(c.encode::<M127>(-10.0).is_ok());
        assert!(FixedPointCodec::new(20, 1e40).is_err());
        assert!(FixedPointCodec::new(0, 1.0).is_err());
    }

    #[test]
    fn rounding_to_nearest() {
        let c = codec();
        let x = 1.0 / 3.0;
        let back = c.decode(c.encode::<M127>(x).unwrap());
        assert_eq!(back, (x * 1048576.0).round() / 1048576.0);
        assert!((back - x).abs() <= c.ulp() / 2.0);
    }

    proptest! {
        #[test]
        fn identity_on_dyadics(k in -(1i64 << 39)..(1i64 << 39)) {
            let c = codec();
            let x = k as f64 / 1048576.0;
            prop_assert_eq!(c.decode(c.encode::<M127>(x).unwrap()), x);
        }
    }
}
