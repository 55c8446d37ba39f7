//! Model-based clustering for mixed continuous/ordinal/censored/missing data
//! with simultaneous variable selection, fit by collapsed MCMC over a
//! Dirichlet-process mixture.

pub mod conjugate;
pub mod data;
pub mod error;
pub mod kernels;
pub mod marginal;
pub mod mcmc;
pub mod rng;
pub mod state;
pub mod sim;
pub mod summary;

pub use error::{Error, Result};
pub use rng::RngStream;
