//! Computable core of the elliptic quantum group E(tau, hbar; sl_N).

pub mod error;
pub mod repr;
pub mod rmatrix;
pub mod eweights;
pub mod tableaux;
pub mod kring;
pub mod cartan;
pub mod cli;
pub mod theta;
pub mod transfer;

pub use error::{Error, Result};
pub use theta::{AffineShift, EllipticParams, C64};
