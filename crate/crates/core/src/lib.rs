//! Conversational recommendation over a dynamic knowledge graph.
//!
//! The crate is `no_std` (it needs `alloc`) and holds the whole algorithmic
//! pipeline:
//!
//! * [`graph`]: user/item/attribute triple store with a session overlay that
//!   hides removed entities and resets in O(1).
//! * [`embed`]: TransD node features, cached attention and multi-step
//!   neighbourhood propagation, trained with analytic gradients.
//! * [`recommend`]: item scoring, ranking, the item loss and session-local
//!   fine-tuning.
//! * [`policy`]: state encoding, rewards and the MLP dialogue policy trained
//!   with REINFORCE (plus imitation pretraining).
//! * [`session`]: the multi-round conversation loop, the scripted user
//!   simulator and the rule-based baselines.
//! * [`metrics`]: SR@T / AT / APA and offline ranking metrics.
//!
//! IO, file formats and the command line live in the companion `kgcrs-cli`
//! crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod config;
pub mod dataset;
pub mod embed;
mod error;
pub mod graph;
pub mod math;
pub mod metrics;
pub mod policy;
pub mod recommend;
pub mod session;
pub mod synth;

pub use error::{Error, Result};

/// Deterministic generator used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
