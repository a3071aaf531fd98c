//! Library side of the `pipeline` binary: configuration loading with
//! profiles, the synthetic corpus generator, and resumable stage
//! orchestration over the analysis crate.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod synth;
