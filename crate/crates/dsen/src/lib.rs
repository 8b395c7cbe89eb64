//! Filesystem formats and the command-line front end for the `dsen-core`
//! embedding network: dataset directories, binary model checkpoints, run
//! manifests, and the `dsen` binary's subcommands.

pub mod checkpoint;
pub mod cli;
pub mod dataset_io;
pub mod error;
pub mod manifest;
