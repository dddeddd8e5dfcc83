//! File formats, checkpoint directories and the `sqlgen` command line on
//! top of `sqlgen-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod files;
pub mod sql_text;
