//! Ising–Hüsler–Reiss Lévy processes: model parametrizations, increment
//! simulation, orthant-conditioned variogram estimation, graph learning and
//! Ising asymmetry estimation.

pub mod eglearn;
pub mod error;
pub mod graph;
pub mod hr;
pub mod io;
pub mod ising;
pub mod ising_fit;
pub mod levy;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod study;
pub mod variogram;

pub use error::{Error, Result};
