//! Std side of the simulator: scene files, mesh export, the network server
//! and client, episode logs and the evaluation harness.

pub mod client;
pub mod eval;
pub mod eventlog;
pub mod mesh_export;
pub mod protocol;
pub mod scene_json;
pub mod server;
pub mod session;

pub use seeksim_core as core;
