//! Std companion to `mars-core`: file formats, run configuration, the
//! episode runner, an HTTP model backend and the `mars` command line.

pub mod backend;
pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod fixtures;
pub mod jsonl;
pub mod report;

pub use commands::{cmd_ablate, cmd_ablate_checks, cmd_dump_kb, cmd_run, cmd_score, DumpFormat, Outcome};
pub use config::{load_config, parse_config, Binding, Bindings, Overrides, RunConfig};
pub use error::{CliError, ConfigError, FileError, TraceError};
