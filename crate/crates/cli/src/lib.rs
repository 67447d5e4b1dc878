//! Command-line front end for the audit platform.

pub mod client;
pub mod commands;
pub mod http;
pub mod launcher;
