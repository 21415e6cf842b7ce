//! Recovering unknown pure states from detector density matrices that are
//! convex mixtures of them.
//!
//! A candidate `rho_f = sum_j w_j rho_j` with `sum_j w_j = 1` is pure exactly
//! when `F(w) = ||rho_f^2 - rho_f||_F^2` vanishes. Two solvers minimize `F`:
//! damped Newton over real weights ([`newton`]) and simulated annealing over
//! `w_j = +-1` after mapping `F` to a spin Hamiltonian ([`ising`],
//! [`anneal`]). Small spin instances can be solved exactly by enumeration.

pub mod anneal;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod ising;
pub mod newton;
pub mod quantum;
pub mod record;
pub mod rng;
pub mod scenario;
pub mod statement;

pub use error::{Error, Result};
pub use quantum::{DensityMatrix, PureState};
pub use scenario::Scenario;
