//! Secret values as seen by the simulator: one share per holder.

use crate::error::{Error, Result};
use crate::field::{Fp, Modulus, M127};
use crate::sharing::Share;

/// Additive shares of one secret, indexed by holder.
///
/// Local operations never communicate. The simulator keeps every holder's
/// share in one place; node code only ever reads its own entry through
/// [`Shared::share_of`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shared<M: Modulus = M127> {
    holders: Vec<usize>,
    shares: Vec<Fp<M>>,
}

impl<M: Modulus> Shared<M> {
    pub fn new(holders: Vec<usize>, shares: Vec<Fp<M>>) -> Result<Self> {
        if holders.is_empty() || holders.len() != shares.len() {
            return Err(Error::Protocol(format!(
                "{} holders for {} shares",
                holders.len(),
                shares.len()
            )));
        }
        let mut sorted = holders.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != holders.len() {
            return Err(Error::Protocol("duplicate holder in shared value".into()));
        }
        Ok(Self { holders, shares })
    }

    pub fn from_shares(shares: &[Share<M>]) -> Result<Self> {
        Self::new(
            shares.iter().map(|s| s.holder).collect(),
            shares.iter().map(|s| s.element).collect(),
        )
    }

    /// A public constant: the first holder carries it, the rest hold zero.
    pub fn constant(holders: &[usize], value: Fp<M>) -> Self {
        let mut shares = vec![Fp::ZERO; holders.len()];
        shares[0] = value;
        Self {
            holders: holders.to_vec(),
            shares,
        }
    }

    pub fn zero(holders: &[usize]) -> Self {
        Self::constant(holders, Fp::ZERO)
    }

    pub fn holders(&self) -> &[usize] {
        &self.holders
    }

    pub fn shares(&self) -> &[Fp<M>] {
        &self.shares
    }

    pub fn share_of(&self, holder: usize) -> Option<Fp<M>> {
        self.holders
            .iter()
            .position(|&h| h == holder)
            .map(|i| self.shares[i])
    }

    pub fn to_shares(&self) -> Vec<Share<M>> {
        self.holders
            .iter()
            .zip(&self.shares)
            .map(|(&holder, &element)| Share { holder, element })
            .collect()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.holders != other.holders {
            return Err(Error::Protocol(format!(
                "holder sets differ: {:?} vs {:?}",
                self.holders, other.holders
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            holders: self.holders.clone(),
            shares: self.shares.iter().zip(&other.shares).map(|(a, b)| *a + *b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            holders: self.holders.clone(),
            shares: self.shares.iter().zip(&other.shares).map(|(a, b)| *a - *b).collect(),
        })
    }

    pub fn scale(&self, c: Fp<M>) -> Self {
        Self {
            holders: self.holders.clone(),
            shares: self.shares.iter().map(|s| *s * c).collect(),
        }
    }

    pub fn add_const(&self, c: Fp<M>) -> Self {
        let mut out = self.clone();
        out.shares[0] += c;
        out
    }

    pub fn neg(&self) -> Self {
        self.scale(-Fp::ONE)
    }

    /// Sum of all shares. Simulator-side oracle for tests and audits; protocol
    /// code reveals values only through the bus.
    pub fn reconstruct_oracle(&self) -> Fp<M> {
        self.shares.iter().copied().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Fe, Tiny101};
    use crate::rng::{substream, Domain};
    use crate::sharing::share_among;

    #[test]
    fn local_ops_follow_the_secrets() {
        let mut rng = substream(1, Domain::Bench, 0);
        let h = [0, 2, 3];
        let x = Shared::from_shares(&share_among(Fe::new(7), &h, &mut rng).unwrap()).unwrap();
        let y = Shared::from_shares(&share_among(Fe::new(5), &h, &mut rng).unwrap()).unwrap();
        assert_eq!(x.add(&y).unwrap().reconstruct_oracle(), Fe::new(12));
        assert_eq!(x.sub(&y).unwrap().reconstruct_oracle(), Fe::new(2));
        assert_eq!(x.scale(Fe::new(3)).reconstruct_oracle(), Fe::new(21));
        assert_eq!(x.add_const(Fe::new(1)).reconstruct_oracle(), Fe::new(8));
        assert_eq!(x.neg().reconstruct_oracle(), -Fe::new(7));
        assert_eq!(x.share_of(2), Some(x.shares()[1]));
        assert_eq!(x.share_of(1), None);
    }

    #[test]
    fn mismatched_holders_are_rejected() {
        let a = Shared::<Tiny101>::zero(&[0, 1]);
        let b = Shared::<Tiny101>::zero(&[0, 2]);
        assert!(a.add(&b).is_err());
        assert!(Shared::<Tiny101>::new(vec![1, 1], vec![Fp::ZERO; 2]).is_err());
    }
}
