//! Numerics for energy and entropy along random evolutions: free-energy decay
//! of finite Markov chains, Boltzmann entropy along the central limit theorem,
//! free-probability moment identities, and Metropolis-adjusted Langevin
//! sampling of confined particle gases with singular pair repulsion.

pub mod clt;
pub mod error;
pub mod free;
pub mod gas;
pub mod markov;
pub mod measures;
pub mod quadrature;

pub use error::{LabError, Result};
