//! Discrete-event simulation of mobile nodes over white-space base stations.

pub mod csma;
pub mod events;
pub mod link;
pub mod mobility;
pub mod pep;
pub mod phy;
pub mod report;
pub mod world;

pub use report::MetricsReport;
pub use world::{run, run_with_fidelity, SimError};
