//! Simulated computation nodes: shared values, the message bus, the dealer
//! and the interactive operations built on them.

pub mod bus;
pub mod dealer;
pub mod node;
pub mod ops;
pub mod shared;

pub use bus::{latency_model, Audience, Bus, LatencyPreset, TranscriptMetrics};
pub use dealer::{BeaverTriple, Dealer, TruncMask};
pub use node::{NodeState, NodeView};
pub use ops::{
    beaver_multiply, beaver_multiply_many, distributed_laplace, fixed_div, fixed_div_many,
    trunc_many, validate_flag, validate_flags, DivisionPlan,
};
pub use shared::Shared;
