//! File formats, experiment drivers and the command-line tool built on
//! `frugalsense-core`.

pub mod cli;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod svg;
