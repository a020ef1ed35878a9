//! Human-alignment evaluation toolkit for robot error-handling messages.

pub mod cache;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod ermodels;
pub mod evalrunner;
pub mod exec;
pub mod http;
pub mod sentiment;
pub mod session;
pub mod stats;
pub mod textnorm;
