//! File formats, corpus handling, the parallel benchmark harness and the
//! `npmle` command line on top of [`npmle_core`].

pub mod bench;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod ingest;
pub mod prior;

pub use error::{AppError, AppResult};
