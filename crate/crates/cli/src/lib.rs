//! Std companion to vesselaudit-core: file formats, the cohort generator's
//! disk layout, report artifacts, and the audit pipeline. Everything here
//! exists so the core crate can stay free of paths, files, and threads.

pub mod audit;
pub mod checkpoint;
pub mod cohortgen;
pub mod config;
pub mod manifest_io;
pub mod netpbm;
pub mod plan;
pub mod reports;
pub mod svg;

use std::fmt;

/// Split of failures into the two exit codes the binary promises: 2 for
/// anything wrong with what the user asked for (flags, config files, plan
/// files, manifest contents), 1 for failures while doing the work (missing
/// images, unwritable output, training errors).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> CliError {
        CliError::Usage(msg.to_string())
    }

    pub fn runtime(msg: impl fmt::Display) -> CliError {
        CliError::Runtime(msg.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}
