//! Experiment runner for the `idsim` toolkit: declarative configs in,
//! CSV tables, summaries and SVG plots out.

pub mod config;
pub mod experiments;
pub mod plot;
pub mod report;
pub mod runner;
pub mod schema;
