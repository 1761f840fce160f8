//! Harness library behind the `npuscope` binary; the integration tests drive
//! the same code paths the CLI does.

pub mod commands;
pub mod config;
pub mod fsio;
pub mod pipeline;
pub mod reports;
