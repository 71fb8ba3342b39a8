//! Persistent random walks on the integers whose turning probability depends
//! on the length of the current run.
//!
//! A walk takes unit steps up or down. After `n` consecutive steps in
//! direction `l` it changes direction with probability `alpha(l, n)` and keeps
//! going with probability `1 - alpha(l, n)`. Every walk here starts with a
//! down-step, so the first run is a descent.
//!
//! The crate provides:
//!
//! * [`transitions`]: model families for `alpha` and their admissibility
//!   checks,
//! * [`tails`]: run-length tail probabilities `T(n)`, truncated and exact
//!   means, inverse-CDF sampling of run lengths,
//! * [`classifier`]: recurrence/transience classification through drift and
//!   Erickson-type series,
//! * [`simulator`]: seeded trajectory and skeleton simulation, monotone
//!   coupling, context-tree grafting,
//! * [`oracle`]: exact small-horizon distributions by dynamic programming,
//! * [`perturb`]: deterministic perturbations, random environments and
//!   lacunary constructions,
//! * [`cli`]: the command-line front end (the `combwalk` binary is a thin
//!   wrapper around it).
//!
//! Everything randomized is reproducible: a master seed plus replica index
//! determine independent per-purpose streams.

pub mod asymptotics;
pub mod classifier;
pub mod cli;
pub mod error;
pub mod oracle;
pub mod perturb;
pub mod primes;
pub mod rngutil;
pub mod simulator;
pub mod tails;
pub mod transitions;

pub use error::{Error, Result};
pub use transitions::{Direction, ModelSpec, TransitionModel};
