//! Command-line toolkit around `drill-core`: train/eval/ablate/bands/
//! bench/params over a declarative config file.

use std::fmt;

pub mod bench;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod report;
pub mod trainer;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Core(drill_core::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<drill_core::Error> for CliError {
    fn from(e: drill_core::Error) -> Self {
        CliError::Core(e)
    }
}
