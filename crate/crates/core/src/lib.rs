//! Certified computations for coded shift spaces.
//!
//! Numbers are enclosed in exact rational intervals ([`rint::RatInterval`]).
//! The crate computes the entropy `h = log lambda*` from the characteristic
//! equation, the Vere-Jones parameter `kappa`, cylinder probabilities of the
//! measure of maximal entropy, and finitely supported approximations of that
//! measure in the Wasserstein-1 metric.

pub mod error;
pub mod families;
pub mod gmeasure;
pub mod rint;
pub mod spectral;
pub mod symbolic;
pub mod verejones;

pub use error::{Error, Result};

/// Global cap on retry doublings, read from `CODEDSHIFT_BUDGET`.
pub fn budget() -> u32 {
    std::env::var("CODEDSHIFT_BUDGET").ok().and_then(|v| v.trim().parse().ok()).unwrap_or(24)
}
