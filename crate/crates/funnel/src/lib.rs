//! The StreamFunnel server process: configuration, the live engine, the
//! HTTP/WebSocket surface, the spectator load harness and log replay.

pub mod config;
pub mod engine;
pub mod loadsim;
pub mod metrics;
pub mod replay;
pub mod server;

pub use config::Config;
pub use server::{start, RunningServer};
