//! IO, backends, file formats and orchestration around `disco-core`.

pub mod cache;
pub mod caption;
pub mod config;
pub mod gateway;
pub mod http;
pub mod images;
pub mod manifest;
pub mod predlog;
pub mod regression;
pub mod report;
pub mod run;
pub mod synth;
pub mod tsv;
