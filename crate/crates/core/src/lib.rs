//! Link-level simulator for URLLC downlink link adaptation.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`] generates tapped-delay-line Rayleigh fading and per-RB SNR.
//! * [`phy`] holds the MCS ladder, the logistic BLER family, EESM and TB sizing.
//! * [`cqi_reporting`] turns per-RB SNR into delayed per-subband CQI reports.
//! * [`link_adapt`] keeps the CQI history and produces conservative CQI estimates
//!   from the worst degradation seen over an observation window.
//! * [`scheduler`] allocates RBs per mini-slot with a maximal-TB search and a
//!   deadline-driven MCS 0 fallback.
//! * [`engine`] is the deterministic discrete-event loop that ties it together.
//! * [`config`] and [`sweep`] cover configuration files and CSV parameter sweeps.

pub mod channel;
pub mod config;
pub mod cqi_reporting;
pub mod engine;
mod error;
pub mod link_adapt;
pub mod phy;
pub mod scheduler;
pub mod sweep;

pub use config::{ConfigError, Policy, SimConfig};
pub use engine::{run, Metrics};
pub use error::{Error, Result};
