//! Seeded synthetic workloads.

use rand::Rng;
use rand_distr::{Distribution, Zipf};

use crate::collection::KeyValuePair;
use crate::dataset::{ClientRecord, Dataset};
use crate::error::{invalid, Result};
use crate::rng::{substream, Domain};

/// Default key-popularity exponent.
pub const DEFAULT_ZIPF_EXPONENT: f64 = 1.1;

/// Shape of a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub clients: usize,
    pub key_domain: usize,
    /// Each client holds a uniform number of keys in `0..=max_keys`.
    pub max_keys: u32,
    pub center: f64,
    pub half_range: f64,
    pub zipf_exponent: f64,
}

impl SyntheticSpec {
    /// Client `i` draws from its own stream, so datasets grow by prefix.
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        if self.key_domain == 0 {
            return Err(invalid("synthetic key domain must be nonempty"));
        }
        if self.zipf_exponent.is_nan() || self.zipf_exponent <= 0.0 {
            return Err(invalid(format!("Zipf exponent must be positive, got {}", self.zipf_exponent)));
        }
        if !(self.half_range.is_finite() && self.half_range > 0.0 && self.center.is_finite()) {
            return Err(invalid("synthetic value range must be finite and nonempty"));
        }
        let zipf = Zipf::new(self.key_domain as u64, self.zipf_exponent)
            .map_err(|e| invalid(format!("Zipf parameters: {e}")))?;
        let lambda = (self.max_keys as usize).min(self.key_domain);
        let clients = (0..self.clients)
            .map(|i| {
                let mut rng = substream(seed, Domain::Synthetic, i as u64);
                let count = rng.gen_range(0..=lambda);
                let mut keys: Vec<u64> = Vec::with_capacity(count);
                let mut attempts = 0;
                while keys.len() < count && attempts < 64 * count {
                    let k = zipf.sample(&mut rng) as u64 - 1;
                    if !keys.contains(&k) {
                        keys.push(k);
                    }
                    attempts += 1;
                }
                while keys.len() < count {
                    let k = rng.gen_range(0..self.key_domain as u64);
                    if !keys.contains(&k) {
                        keys.push(k);
                    }
                }
                let pairs = keys
                    .into_iter()
                    .map(|key| KeyValuePair {
                        key,
                        value: rng.gen_range(self.center - self.half_range..=self.center + self.half_range),
                    })
                    .collect();
                ClientRecord { id: i as u64, pairs }
            })
            .collect();
        Ok(Dataset::new(clients))
    }
}
