//! Command-line front end for `dopt-core`: argument handling, JSON
//! artifacts and the cross-checking `verify` command.

pub mod cli;
pub mod json;
pub mod verify;
