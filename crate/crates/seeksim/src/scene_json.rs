//! Scene files.
//!
//! A scene is one JSON object with the keys `bounds`, `rooms`, `obstacles`,
//! `spawn_points` and `scene_seed`. Points are `[x, y]` pairs in meters,
//! `bounds` is `{"min": [x, y], "max": [x, y]}`, rooms carry a `polygon` and a
//! `room_type`, obstacles carry `polygon`, `class` (class id 0 to 10),
//! `instance_id` and `height`. Polygons are counter-clockwise.

use seeksim_core::world::WorldMap;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
#[error("scene json: {path}: {message}")]
pub struct SceneJsonError {
    /// JSON path of the offending value, `.` for the document itself.
    pub path: String,
    pub message: String,
}

pub fn scene_to_json(world: &WorldMap) -> String {
    serde_json::to_string_pretty(world).expect("scenes always serialize")
}

pub fn scene_from_json(text: &str) -> Result<WorldMap, SceneJsonError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let map: WorldMap = serde_path_to_error::deserialize(de).map_err(|e| SceneJsonError {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    Ok(map)
}

/// Hex SHA-256 of the scene's canonical JSON.
pub fn scene_digest(world: &WorldMap) -> String {
    hex::encode(Sha256::digest(scene_to_json(world).as_bytes()))
}
