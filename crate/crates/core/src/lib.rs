//! Behavioral simulator for a programmable transimpedance amplifier (PTIA)
//! glucose-sensing readout: current conveyor, gm-boosted programmable
//! transconductor, I-V converter with transconductance feedback, and a
//! bandgap-referenced potentiostat.
//!
//! Modules:
//! - [`chain`]: closed-form gains and the large-signal feedback solver
//! - [`control`]: select-word decoder and gain index
//! - [`noise`]: thermal-noise PSD and band integration
//! - [`distortion`]: sinusoidal drive and THD
//! - [`variation`]: Monte Carlo mismatch and PVT corner tables
//! - [`calibration`]: measurement ingestion and concentration curves

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod chain;
pub mod control;
pub mod distortion;
pub mod error;
pub mod noise;
pub mod plot;
pub mod profile;
pub mod stats;
pub mod variation;

pub use error::{Error, ErrorKind, Result};
pub use profile::Profile;
