//! Scoring core for free-form membership-inference audits of vision-language
//! models: corpus schema, title matching, the backend query contract, a
//! deterministic mock model, the detectors and the detection statistics.
//!
//! `no_std` with `alloc`; file IO, networking and the CLI live in
//! `disco-audit`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
pub mod detectors;
pub mod matcher;
pub mod mock;
pub mod prompts;
pub mod query;
pub mod stats;
