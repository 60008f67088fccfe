//! Std companion to `sckg-core`: providers, cassettes, storage, the mining
//! loop, exports, the HTTP API and the command line.

pub mod api;
pub mod cassette;
pub mod cli;
pub mod clock;
pub mod config;
pub mod db;
pub mod docstore;
pub mod export;
pub mod fetch;
pub mod labeling;
pub mod llm;
pub mod metrics;
pub mod mock;
pub mod orchestrator;
pub mod providers;
pub mod queries;
pub mod search;
pub mod seeds;
pub mod text;

#[cfg(test)]
mod testutil;
