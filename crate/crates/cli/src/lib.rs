//! Experiment harness over the core library: a flat key=value configuration
//! format, byte-exact PGM/PPM/CSV emission, and five reproducible commands
//! (`tau-table`, `sample`, `sweep`, `ablate`, `temporal`).
//!
//! Every command is a pure function of (configuration, seeds): re-running
//! one writes byte-identical files, for any worker count. Wall-clock
//! timings are printed to stdout and never written into output files.

pub mod commands;
pub mod config;
pub mod output;

use ug_core::error::Error;

/// Process exit code for a failed run: 3 for numeric failures detected
/// mid-computation (non-finite values, failed self-checks), 2 for
/// configuration and environment errors.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonFinite(_) | Error::NonFiniteState { .. } | Error::NumericCheck(_) => 3,
        _ => 2,
    }
}
