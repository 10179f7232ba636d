//! Mobility support for white-space networks: CFO estimation, spectrum
//! databases, subcarrier assignment, base station discovery, subcarrier
//! alignment and a discrete-event simulator that ties them together.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod assignment;
pub mod baseband;
pub mod cfo;
pub mod discovery;
pub mod energy;
pub mod geo;
pub mod runner;
pub mod scenario;
pub mod sim;
pub mod spectrum;
pub mod units;
