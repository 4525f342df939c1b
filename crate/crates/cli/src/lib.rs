//! Command-line front end: experiment configs, command dispatch and run manifests.

pub mod commands;
pub mod config;
pub mod manifest;

pub const EXIT_USAGE: u8 = 64;
pub const EXIT_MODULE: u8 = 65;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or inconsistent inputs.
    Usage(String),
    Module(liouville::error::Error),
}

impl From<liouville::error::Error> for CliError {
    fn from(e: liouville::error::Error) -> Self {
        CliError::Module(e)
    }
}
