//! Deterministic simulation core for desk-scale semantic object search.
//!
//! Procedurally generated office worlds, fixed-timestep agent physics with
//! PD-controlled discrete actions, a column raycast renderer producing
//! depth / semantic / instance images, perception noise models, the episode
//! and scoring machinery, and baseline policies.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, networking and
//! the command line live in the `seeksim` crate.

#![no_std]

extern crate alloc;

pub mod agents;
pub mod geom;
pub mod kinematics;
pub mod math;
pub mod perception;
pub mod sensors;
pub mod sim;
pub mod seeds;
pub mod task;
pub mod world;

pub use geom::{Aabb, Vec2};
