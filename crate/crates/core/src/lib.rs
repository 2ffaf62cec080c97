//! Simulation of infinitely divisible Markov-chain partial sums and their
//! stable/Mittag-Leffler scaling limits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chains;
pub mod error;
pub mod idproc;
pub mod limits;
pub mod mlfrac;
pub mod momentbounds;
pub mod rng;
pub mod series;
pub mod stable;
pub mod stats;

pub use error::{Error, Result};
