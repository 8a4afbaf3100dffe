//! Command-line frontend for the twoseal toolkit: configuration, the
//! end-to-end pipeline and one function per subcommand.

pub mod commands;
pub mod config;
pub mod errors;
pub mod pipeline;

pub use config::RunConfig;
pub use errors::{exit_code, ConfigError};
pub use pipeline::{run_pipeline, PipelineOutput, RunReport};
