//! Quadripartite restricted Boltzmann machines and the tooling around them:
//! block Gibbs sampling, exact and annealed partition-function estimates,
//! maximum-likelihood training, the binary/spin mapping used to program an
//! annealer, a virtual annealer backend with its HTTP protocol, and
//! effective-temperature calibration.

pub mod annealer;
pub mod calibration;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod ising;
pub mod layout;
pub mod rbm;
pub mod rng;
pub mod trainer;
pub mod zestimate;

pub use error::{Error, Result};
pub use gibbs::{block_gibbs_step, sample, ChainInit, SampleBatch, SampleRequest, SampleSource};
pub use layout::{Partition, PartitionLayout, PartitionSet, PAIRS};
pub use rbm::{Parameters, QuadState, QuadripartiteRBM};
