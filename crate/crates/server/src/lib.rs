//! HTTP service and operator CLI on top of `phonolearn-core`.

pub mod api;
pub mod cli;
