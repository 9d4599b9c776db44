//! Rank-based "choose the leader" particle dynamics and its kinetic limit.
//!
//! The model: N particles drift freely; at Poisson times a random follower
//! copies the velocity of a leader chosen with probability depending only on
//! the leader's proximity rank, weighted by a kernel `K` on [0,1]. As
//! N → ∞ the one-particle law solves a Boltzmann-type equation whose
//! collision kernel is evaluated at the partial mass `M_rho(x, |x'-x|)` —
//! a spatial nonlocality in place of the classical velocity one.
//!
//! Crate layout:
//! - [`kernel`]: kernel families, discrete rank weights, rank sampling;
//! - [`rank`]: proximity ranks, leader selection, the binomial rank oracle;
//! - [`sim`]: the event-driven N-particle process and its diagnostics;
//! - [`bernstein`]: Bernstein polynomials and the 1/N expansion checks;
//! - [`kinetic`]: the nonlocal kinetic solver on the periodic line;
//! - [`compare`]: particle-to-kinetic convergence measurements.

pub mod bernstein;
pub mod compare;
pub mod error;
pub mod kernel;
pub mod kinetic;
pub mod rank;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use kernel::{DiscreteKernelTable, EvalOrder, RankKernel};
pub use rank::{Metric, Point};
