//! Exact joint admission control and discrete-phase multicast beamforming
//! for integrated sensing and communication.
//!
//! The nonconvex problem is rewritten as a MILP ([`reform`]) and solved to
//! proven optimality by an embedded branch-and-bound ([`bnb`]) on top of a
//! bounded-variable simplex ([`lp`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these checks

pub mod baselines;
pub mod bnb;
pub mod channel;
pub mod cli;
pub mod error;
pub mod instance;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod mps;
pub mod reform;

pub use error::{Error, Result};
pub use instance::{ProblemInstance, Solution};
pub use model::MilpModel;
