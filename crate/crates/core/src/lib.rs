//! Recurrent one-hop predictors (ROP) for multi-hop knowledge-graph reasoning.
//!
//! Given a head entity and a relation sequence, a ROP predicts the entity
//! reached after every hop. Three architectures are provided:
//!
//! * [`Arch::Arc1`] seeds a GRU's hidden state with the head entity and feeds
//!   relations as inputs, so predicted entities live in the hidden space.
//! * [`Arch::Arc2`] encodes the relation prefix with a zero-initialised GRU and
//!   composes each hidden state with the head entity (ADD or a second GRU).
//! * [`Arch::Arc3`] additionally composes the previous prediction, either by
//!   a three-way sum or by the extended GRU ([`EGruParams`]).
//!
//! Everything in this crate is `no_std` + `alloc`: numerics, the graph data
//! model, the knowledge-base-completion and path-query tasks, metrics and the
//! synthetic world generator. File formats, checkpoints and the CLI live in
//! the companion `rop` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod kbc;
pub mod kg;
pub mod numerics;
pub mod pqa;
pub mod rop;
pub mod synth;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use kg::{EntityId, KbcExample, PathInstance, RelationId, TripleStore, Vocab};
pub use numerics::{
    adagrad_update, cosine, grad_check, gru_step, egru_step, margin_loss, spearman, EGruParams,
    GradCheckReport, GruParams, Matrix, Param, Parameterized, Similarity,
};
pub use rop::{Arch, Composition, ForwardTrace, RopConfig, RopModel};

/// Deterministic RNG used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
