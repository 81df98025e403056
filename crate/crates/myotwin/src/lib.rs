//! File formats, reports, sweeps and the live server built on `myotwin-core`.

pub mod config;
pub mod manifest;
pub mod recording;
pub mod report;
pub mod server;
pub mod sweep;
pub mod weights;
