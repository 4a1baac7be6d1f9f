//! Laser-method value bounds for powers of the Coppersmith-Winograd tensor.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor_core`] holds explicit 0/1 trilinear forms, the CW family and the
//!   symbolic graded view of its tensor powers.
//! * [`distributions`] holds distributions on block supports and the derived
//!   entropy quantities.
//! * [`solver`] holds the marginal-constrained entropy programs and the
//!   heuristics that pick a distribution to analyse.
//! * [`laser_engine`] composes them into certified value bounds and the
//!   exponent bisection.
//! * [`construction_sim`] runs the randomized constructions at small scale.

pub mod certify;
pub mod construction_sim;
pub mod distributions;
pub mod error;
pub mod laser_engine;
pub mod numeric;
pub mod solver;
pub mod tensor_core;

pub use error::{Error, Result};
