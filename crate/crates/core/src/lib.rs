//! Conditional-GAN trace augmentation for profiling side-channel attacks.
//!
//! The crate simulates leaky AES S-box traces, trains a conditional GAN on a
//! small labelled profiling set, generates labelled synthetic traces, and
//! measures with guessing entropy how much they improve a profiling attack.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision types the pipeline and CLI use.

pub mod cgan;
pub mod error;
pub mod io;
pub mod leakage;
pub mod neural;
pub mod pipeline;
pub mod profiling;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod trace;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use trace::{LabelScheme, Trace, TraceSet};

pub type TraceSet64 = TraceSet<f64>;
pub type TraceSet32 = TraceSet<f32>;
pub type Network64 = neural::Network<f64>;
pub type Network32 = neural::Network<f32>;
