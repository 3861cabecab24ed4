//! Batch front-end: JSON configuration in, CSV/JSON artifacts and a check
//! report out.

pub mod config;
pub mod io;
pub mod report;
pub mod run;

pub use config::{parse_config, parse_str, Mode, RunConfig};
pub use report::Report;
pub use run::{run, Outcome, RunError};
