//! File formats, configuration and the command-line operations for
//! [`codinet_core`]: config parsing, checkpoints, path logs, dataset loading
//! and the train / eval / analyze / sweep commands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod datasets;
mod error;
pub mod pathlog;

pub use error::{exit, CliError};
