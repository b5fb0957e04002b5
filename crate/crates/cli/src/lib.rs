//! Front end for the `nlpsi` toolkit: resolved configs, command bodies and
//! manifest replay. The binary is a thin wrapper over [`args::run_from`].

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
