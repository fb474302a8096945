//! Command-line tool and local HTTP service over `mogfit-core`.

pub mod cli;
pub mod handlers;
pub mod service;
