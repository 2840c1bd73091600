//! File formats, run manifests and the command line for `dmkit-core`.

pub mod cli;
pub mod io;
pub mod manifest;
