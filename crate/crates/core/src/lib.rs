//! Active-RIS over-the-air beamforming.
//!
//! The crate covers the channel model ([`model`]), a dense complex SDP solver
//! with Gaussian randomization ([`sdp`]), the multi-user downlink pipeline
//! with its zero-forcing baseline ([`mu`]) and receive index modulation with
//! its detectors ([`im`]).

// `!(x > 0.0)` style checks deliberately treat NaN as invalid.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod im;
pub mod linalg;
pub mod model;
pub mod mu;
pub mod sdp;
pub mod stats;

pub use error::{Error, Result};
