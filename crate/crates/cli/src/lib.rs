//! Command-line harness for the fan-noise modem: encode payloads into RPM
//! schedules and recordings, decode recordings, print blade-pass tables and
//! run seeded BER sweeps.

pub mod commands;
pub mod config;
pub mod error;
pub mod schedule;
pub mod sweep;

pub use config::{DemodOverrides, ExperimentConfig, PRESETS};
pub use error::{CliError, Result};
pub use sweep::{ber_sweep, Axis, Link, SweepPoint, SweepReport, TrialRecord};
