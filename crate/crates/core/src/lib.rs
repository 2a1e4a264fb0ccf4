//! Verification laboratory for DT-operators.
//!
//! Two engines live here. The exact engine ([`dgauss`]) evaluates the
//! 𝒟-valued expectation and the trace of words in a pair of 𝒟-free upper
//! triangular operators with piecewise-polynomial diagonal insertions, over
//! exact rationals. The Monte Carlo engine ([`ensembles`]) samples the finite
//! matrix models `Z_n = D_n + c T_n` and estimates the same quantities.
//! [`fisher`] and [`spectral`] build the free Fisher information, entropy
//! dimension, and eigenspace machinery on top of them, and [`cli`] wires it
//! all into reproducible, report-emitting runs.

pub mod cli;
pub mod dgauss;
pub mod ensembles;
pub mod error;
pub mod fisher;
pub mod ncpart;
pub mod rational;
pub mod spectral;

pub use error::{Error, Result};
pub use rational::Rational;
