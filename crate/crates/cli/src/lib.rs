//! Config loading, command dispatch and report serialization for `haarlab`.

pub mod commands;
pub mod config;
pub mod report;
