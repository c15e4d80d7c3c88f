//! Command-line harness around `ternlut-core`: the TNF container, raw float
//! tensors, and the `quantize`, `verify`, `bench`, `analyze` and `gemm`
//! subcommands.

pub mod commands;
pub mod error;
pub mod raw;
pub mod tnf;

pub use error::{CliError, CliResult};
