//! Samplers and exact mass/density functions for the geometric, two-sided
//! geometric, binomial, Laplace and gamma distributions.
//!
//! The geometric distribution has support {0, 1, 2, ...} with
//! `G(z; r) = (1 - r)^z * r`, so its mean is `(1 - r) / r`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::factorial::ln_binomial;

use crate::error::{invalid, Result};

fn check_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// Validated geometric parameter `r` in (0, 1).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct GeometricParams {
    r: f64,
}

impl GeometricParams {
    pub fn new(r: f64) -> Result<Self> {
        check_open_unit("geometric parameter r", r)?;
        Ok(Self { r })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn pmf(&self, z: u64) -> f64 {
        self.ln_pmf(z).exp()
    }

    pub fn ln_pmf(&self, z: u64) -> f64 {
        z as f64 * (-self.r).ln_1p() + self.r.ln()
    }

    /// Mean of the distribution as defined by the mass function, `(1 - r) / r`.
    pub fn mean(&self) -> f64 {
        (1.0 - self.r) / self.r
    }

    /// Inverse-transform sample: `floor(ln U / ln(1 - r))` for U uniform on (0, 1].
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = 1.0 - rng.gen::<f64>();
        let x = (u.ln() / (-self.r).ln_1p()).floor();
        if x >= u64::MAX as f64 {
            u64::MAX
        } else {
            x as u64
        }
    }
}

/// `(1 - r)^z * r`.
pub fn geometric_pmf(z: u64, r: f64) -> Result<f64> {
    Ok(GeometricParams::new(r)?.pmf(z))
}

pub fn geometric_sample<R: Rng + ?Sized>(r: f64, rng: &mut R) -> Result<u64> {
    Ok(GeometricParams::new(r)?.sample(rng))
}

/// Natural log of the binomial mass `C(a, z) p^z (1-p)^(a-z)`; `-inf` outside the support.
pub fn ln_binomial_pmf(z: u64, a: u64, p: f64) -> f64 {
    if z > a {
        return f64::NEG_INFINITY;
    }
    if p == 0.0 {
        return if z == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p == 1.0 {
        return if z == a { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_binomial(a, z) + z as f64 * p.ln() + (a - z) as f64 * (-p).ln_1p()
}

/// Binomial mass; exactly zero whenever `z > a`.
pub fn binomial_pmf(z: u64, a: u64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("binomial p must lie in [0, 1], got {p}")));
    }
    Ok(ln_binomial_pmf(z, a, p).exp())
}

/// `((1 - alpha) / (1 + alpha)) * alpha^|z|`.
pub fn two_sided_geometric_pmf(z: i64, alpha: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let k = z.unsigned_abs();
    let tail = if k == 0 { 1.0 } else { alpha.powf(k as f64) };
    Ok((1.0 - alpha) / (1.0 + alpha) * tail)
}

/// Difference of two i.i.d. geometric draws with success probability `1 - alpha`.
pub fn two_sided_geometric_sample<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<i64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(0);
    }
    let g = GeometricParams::new(1.0 - alpha)?;
    Ok(g.sample(rng) as i64 - g.sample(rng) as i64)
}

/// Laplace distribution with scale `b = sensitivity / epsilon`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct LaplaceParams {
    scale: f64,
}

impl LaplaceParams {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid(format!("Laplace scale must be positive, got {scale}")));
        }
        Ok(Self { scale })
    }

    pub fn from_budget(sensitivity: f64, epsilon: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Self::new(sensitivity / epsilon)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.5 * (t / self.scale).exp()
        } else {
            1.0 - 0.5 * (-t / self.scale).exp()
        }
    }

    pub fn inv_cdf(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(invalid(format!("Laplace quantile needs u in (0, 1), got {u}")));
        }
        Ok(if u < 0.5 {
            self.scale * (2.0 * u).ln()
        } else {
            -self.scale * (2.0 * (1.0 - u)).ln()
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.gen();
            if u > 0.0 {
                return self.inv_cdf(u).expect("u in (0, 1)");
            }
        }
    }
}

pub fn laplace_cdf(t: f64, b: f64) -> Result<f64> {
    Ok(LaplaceParams::new(b)?.cdf(t))
}

pub fn laplace_inv_cdf(u: f64, b: f64) -> Result<f64> {
    LaplaceParams::new(b)?.inv_cdf(u)
}

pub fn laplace_sample<R: Rng + ?Sized>(b: f64, rng: &mut R) -> Result<f64> {
    Ok(LaplaceParams::new(b)?.sample(rng))
}

/// Gamma(shape, scale) via Marsaglia-Tsang; shapes below one use the
/// `G(shape + 1) * U^(1/shape)` boost.
pub fn gamma_sample<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(shape.is_finite() && shape > 0.0) {
        return Err(invalid(format!("gamma shape must be positive, got {shape}")));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(invalid(format!("gamma scale must be positive, got {scale}")));
    }
    if shape < 1.0 {
        let boosted = marsaglia_tsang(shape + 1.0, rng);
        let u: f64 = 1.0 - rng.gen::<f64>();
        return Ok(scale * boosted * u.powf(1.0 / shape));
    }
    Ok(scale * marsaglia_tsang(shape, rng))
}

fn marsaglia_tsang<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = StandardNormal.sample(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = 1.0 - rng.gen::<f64>();
        if u < 1.0 - 0.0331 * x.powi(4) || u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}
