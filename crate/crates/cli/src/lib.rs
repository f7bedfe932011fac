//! Scenario runner for `subq-core`: TOML scenarios in, CSV/JSON artifacts and
//! an invariant checklist out.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod suite;

pub use commands::{run, Command, Outcome};
pub use config::ScenarioConfig;
pub use error::CliError;
