#![no_std]
//! Core model and algorithms for mining supply chain knowledge graphs.
//!
//! This crate has no I/O. Fetching, storage, providers and the command line
//! live in the `sckg` crate; everything here works on values passed in,
//! including timestamps.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analytics;
pub mod extraction;
pub mod graph;
pub mod harvest;
pub mod kb;
pub mod mining;
pub mod model;
pub mod normalize;
pub mod provider;
pub mod resolution;
pub mod similarity;
pub mod snapshot;
pub mod verify;

pub use kb::{Applied, KbError, KnowledgeBase, Mutation};
