//! Numerical core for the spin-correlation laboratory.
//!
//! Everything here is pure computation over `alloc` collections: closed-form
//! singlet statistics and the tetrahedral hidden-variable density
//! ([`correlation`]), the marginal-preserving density search
//! ([`distsolver`]), the three-column logbook simulator ([`experiment`]),
//! frame reconstruction from pairwise statistics ([`reconstruct`]) and the
//! geodesic engine of the rotating spin-model metric ([`geodesic`]).
//!
//! Randomness is always passed in explicitly as an [`rand::Rng`], so every
//! run is reproducible from its seed.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod correlation;
pub mod distsolver;
pub mod experiment;
pub mod geodesic;
pub mod reconstruct;
pub mod sphere;

pub use correlation::{CosineTriple, Outcome, OutcomePair, SameFlag};
pub use distsolver::{DensityGrid, MoveSpec, ResidualReport};
pub use experiment::{CorrelationTable, Model, OutcomeRecord, Post, PostConfig};
pub use geodesic::{GeodesicState, OrbitClass, OrbitConstants, OrbitKind};
pub use reconstruct::{CrossGram, Embedding, Law};
