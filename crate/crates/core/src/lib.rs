//! Vectorised and parallel likelihood-free and likelihood-based Bayesian
//! samplers: ABC rejection, adaptive SMC, weakly informative prior checks
//! and BEGE asset-return models.

// `!(x > 0.0)` is used on purpose to reject NaN along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod abc;
pub mod bege;
pub mod bench;
pub mod blocked;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod rng;
pub mod smc;
pub mod stats;
pub mod tb;
pub mod toggle;
pub mod weak_info;

pub use blocked::{BlockWidth, BlockedBuffer};
pub use error::{Error, Result};
pub use exec::Workers;
pub use rng::RngStream;
