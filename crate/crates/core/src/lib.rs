//! Selective secret-sharing MPC for differentially private key-value
//! frequency and mean estimation.
//!
//! Clients share each key-value pair to a random `t`-subset of `ell`
//! computation nodes, dummy generators add geometric numbers of fake pairs per
//! key, and the nodes jointly compute noisy frequencies and means over the
//! shares. The [`accountant`] module holds the closed-form privacy and
//! accuracy formulas and [`leakage`] certifies them numerically.

pub mod accountant;
pub mod collection;
pub mod config;
pub mod dataset;
pub mod distributions;
pub mod error;
pub mod field;
pub mod fixed;
pub mod harness;
pub mod leakage;
pub mod protocols;
pub mod rng;
pub mod runtime;
pub mod sharing;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use field::{Fe, Fp, Modulus, Tiny101, M127};
pub use fixed::FixedPointCodec;
pub use sharing::{linear_combine, reconstruct, share, share_among, Share};
