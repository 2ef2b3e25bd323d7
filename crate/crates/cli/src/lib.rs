//! Command line and file formats for the `cvmdi` key-rate library.
//!
//! Each subcommand resolves its flags into a [`config::RunConfig`], runs
//! the library with grid points or trials spread over the rayon pool and
//! renders the result as CSV or JSON. Every output embeds the resolved
//! configuration, so a file can be regenerated with `--from-metadata`.

// `!(x > 0.0)` rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod output;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

/// Runs a configuration and renders the output document.
pub fn execute(config: &RunConfig) -> CliResult<String> {
    let out = commands::run(config)?;
    output::render(config, &out)
}
