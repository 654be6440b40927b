//! File formats, experiment pipelines and the command line around `camel_core`.

pub mod cli;
pub mod dataio;
pub mod manifest;
pub mod pipeline;

pub use camel_core;
