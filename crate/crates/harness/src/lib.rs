//! Std companion to `guirl-core`: file formats, policy wire protocol,
//! judge transport, layered configuration and the parallel rollout runner.

pub mod commands;
pub mod config;
pub mod imaging;
pub mod judge;
pub mod plot;
pub mod rundir;
pub mod runner;
pub mod scripts;
pub mod store;
pub mod wire;
