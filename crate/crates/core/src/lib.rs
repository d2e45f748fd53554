//! Key-rate analysis for sending-or-not-sending twin-field QKD with two-way
//! error rejection (random-pairing BFER, odd-parity sifting and actively
//! odd-parity pairing), including finite-key bounds, a Monte Carlo oracle and
//! a density-matrix verifier for the phase-error iteration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod chernoff;
pub mod decoy;
pub mod error;
pub mod exec;
pub mod mathcore;
pub mod mcsim;
pub mod optimizer;
pub mod pipeline;
pub mod postproc;
pub mod presets;
pub mod qubitmodel;

pub use error::{Error, Result};
pub use exec::Execution;
