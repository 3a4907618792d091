//! Modelling and analysis toolkit for RIS-aided terahertz links.
//!
//! The crate covers fluctuating two-ray (FTR) fading, THz propagation and
//! pointing-error gains, a Mellin-Barnes engine for Fox H and Meijer G
//! functions, outage and capacity analytics, swarm-based RIS phase
//! optimization, Monte-Carlo oracles and distribution fitting.

pub mod cli;
pub mod config;
pub mod error;
pub mod fitkit;
pub mod foxh;
pub mod ftr;
pub mod montecarlo;
pub mod perf_metrics;
pub mod quad;
pub mod ris_sio;
pub mod specfun;
pub mod thz_channel;

pub use error::{Error, Result};
