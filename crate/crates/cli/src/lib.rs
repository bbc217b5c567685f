//! Configuration, reports, projections and benchmarks for the `reach` binary.

pub mod bench;
pub mod config;
pub mod project;
pub mod report;
pub mod run;
pub mod systems;
