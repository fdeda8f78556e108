//! Configuration, command dispatch and verification suites for the
//! `chemowave` binary.

pub mod config;
pub mod run;
pub mod verify;
