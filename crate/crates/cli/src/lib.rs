//! The `ccgan` command line: configuration handling, the seven subcommands
//! and their exit codes.

use std::path::{Path, PathBuf};

use ccgan_autograd::TensorError;
use ccgan_core::Error;

pub mod args;
pub mod commands;
pub mod conditions;

/// Relative output paths are placed under this directory when it is set.
pub const OUTPUT_ROOT_ENV: &str = "CCGAN_OUTPUT_ROOT";

/// Process exit codes. Usage errors reported by the argument parser also
/// exit with [`exit::CONFIG`].
pub mod exit {
    pub const CONFIG: u8 = 2;
    pub const DATA: u8 = 3;
    pub const NUMERIC: u8 = 4;
    pub const IO: u8 = 5;
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::ConfigParse { .. } => exit::CONFIG,
        Error::Tensor(TensorError::NonFinite { .. }) => exit::NUMERIC,
        Error::Tensor(_) => exit::CONFIG,
        Error::Data { .. }
        | Error::Idx { .. }
        | Error::CheckpointHeader(_)
        | Error::CheckpointVersion { .. }
        | Error::CheckpointPayload(_) => exit::DATA,
        Error::NonFiniteLoss { .. } | Error::Training(_) => exit::NUMERIC,
        Error::Io { .. } => exit::IO,
    }
}

/// `path` under the output root, if one is set and `path` is relative.
pub fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() && path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

pub fn run(cli: args::Cli) -> Result<(), Error> {
    use args::Command;
    match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::Interpolate(a) => commands::interpolate(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::PretrainEmbedder(a) => commands::pretrain(&a),
        Command::Ingest(a) => commands::ingest(&a),
    }
}
