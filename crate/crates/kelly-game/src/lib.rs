//! Simulator and analysis toolkit for the repeated proportional-allocation
//! (Kelly) auction: `n` agents submit bids from closed intervals, a divisible
//! resource is split in proportion to bids against a reserve `delta`, and each
//! agent pays for its own bid.
//!
//! The crate is organized around the stage game ([`game`]), concavity
//! diagnostics that certify equilibrium uniqueness ([`sdsc`]), equilibrium
//! solvers and contraction estimates ([`equilibrium`]), first-order and
//! best-response learning loops ([`dynamics`]), and post-run measurement
//! ([`metrics`]).

// `!(x > 0.0)`-style validation is deliberate throughout: it rejects NaN
// together with the wrong sign, which the `x <= 0.0` rewrite would let pass.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod metrics;
mod numeric;
pub mod sdsc;

pub use error::{GameError, Result};
pub use game::{AgentSpec, BidProfile, GameSpec, GradientBound, PaymentSpec, ScalarFn, UtilitySpec};
