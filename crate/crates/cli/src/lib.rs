//! Sweep driver behind the `vpaw` command-line tool.

pub mod config;
pub mod summary;
pub mod sweep;

pub use config::{Method, SweepSpec};
pub use summary::{summarize, Summary};
pub use sweep::{run_sweep, write_csv, SweepRow};
