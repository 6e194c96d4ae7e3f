//! Bilateral control-based imitation learning for velocity-commanded robots.
//!
//! The crate simulates a master/slave pair of velocity-servoed arms, realizes
//! four-channel bilateral control by converting torque references into velocity
//! commands through a virtual mass-damper, collects teleoperated mopping
//! demonstrations, trains an LSTM to predict the master from the slave, and
//! runs the slave autonomously with the network standing in for the master.

pub mod autoop;
pub mod config;
pub mod control;
pub mod dataset;
pub mod learn;
pub mod demo;
pub mod error;
pub mod log;
pub mod parallel;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
