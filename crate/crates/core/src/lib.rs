//! Energy model and discrete-event simulator for preamble-sampling MAC
//! protocols in a single-hop star: B-MAC, X-MAC and LA-MAC.
//!
//! * [`params`] validated radio, timing and scenario parameters
//! * [`analytic`] closed-form expected energy per backlog size
//! * [`simkernel`] and [`protocols`] the event-driven simulator
//! * [`metrics`] energy, latency and delivery from simulation traces
//! * [`harness`] sweeps, CSV output and config files

pub mod analytic;
pub mod harness;
pub mod metrics;
pub mod params;
pub mod protocols;
pub mod simkernel;
