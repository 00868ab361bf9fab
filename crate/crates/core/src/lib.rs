//! Online diagonal Gaussian mixture over unit-norm prototypes, with collapse
//! diagnostics, a small self-supervised training simulator and analysis
//! exports.

pub mod analysis;
pub mod collapse;
pub mod config;
pub mod error;
pub mod io;
pub mod mixture;
pub mod rng;
pub mod sim;
pub mod stream;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
