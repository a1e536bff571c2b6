//! Semantic office worlds: types, procedural generation, validation and mesh
//! construction.

mod gen;
mod index;
mod mesh;
mod validate;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, Vec2};

pub use gen::{canonical_scene, generate_scene, GenParams, GenerationError, EVALUATION_SCENES, TRAINING_SCENES};
pub use index::{RayHit, WorldIndex};
pub use mesh::{build_mesh, MeshFace, MeshVertex, SceneMesh};
pub use validate::{validate_scene, Violation, CONNECTIVITY_CELL};

/// Ceiling elevation, also the extrusion height of walls and doors.
pub const CEILING_HEIGHT: f64 = 2.5;

/// The eleven segmentation classes. Ids are stable and double as palette indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
#[repr(u8)]
pub enum SemanticClass {
    Floor = 0,
    Ceiling = 1,
    Wall = 2,
    Monitor = 3,
    Door = 4,
    Table = 5,
    Chair = 6,
    Storage = 7,
    Couch = 8,
    Clutter = 9,
    Target = 10,
}

pub const CLASS_COUNT: usize = 11;

impl SemanticClass {
    pub const ALL: [SemanticClass; CLASS_COUNT] = [
        SemanticClass::Floor,
        SemanticClass::Ceiling,
        SemanticClass::Wall,
        SemanticClass::Monitor,
        SemanticClass::Door,
        SemanticClass::Table,
        SemanticClass::Chair,
        SemanticClass::Storage,
        SemanticClass::Couch,
        SemanticClass::Clutter,
        SemanticClass::Target,
    ];

    #[inline]
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::Floor => "floor",
            SemanticClass::Ceiling => "ceiling",
            SemanticClass::Wall => "wall",
            SemanticClass::Monitor => "monitor",
            SemanticClass::Door => "door",
            SemanticClass::Table => "table",
            SemanticClass::Chair => "chair",
            SemanticClass::Storage => "storage",
            SemanticClass::Couch => "couch",
            SemanticClass::Clutter => "clutter",
            SemanticClass::Target => "target",
        }
    }

    /// Fixed class palette.
    pub fn color(self) -> [u8; 3] {
        PALETTE[self as usize]
    }

    /// Default top-of-extrusion height in meters.
    pub fn default_height(self) -> f64 {
        match self {
            SemanticClass::Wall | SemanticClass::Door => 2.5,
            SemanticClass::Storage => 2.0,
            SemanticClass::Table => 0.75,
            SemanticClass::Chair | SemanticClass::Couch => 0.9,
            SemanticClass::Monitor => 1.2,
            SemanticClass::Clutter => 0.5,
            SemanticClass::Target => TARGET_HEIGHT,
            SemanticClass::Floor => 0.0,
            SemanticClass::Ceiling => CEILING_HEIGHT,
        }
    }

    /// Bottom of the extrusion. Monitors sit on table tops.
    pub fn base_height(self) -> f64 {
        match self {
            SemanticClass::Monitor => SemanticClass::Table.default_height(),
            _ => 0.0,
        }
    }

    /// Classes allowed as scene obstacles.
    pub fn is_obstacle_class(self) -> bool {
        !matches!(self, SemanticClass::Floor | SemanticClass::Ceiling | SemanticClass::Target)
    }
}

impl TryFrom<u8> for SemanticClass {
    type Error = String;
    fn try_from(id: u8) -> Result<Self, String> {
        SemanticClass::from_id(id).ok_or_else(|| alloc::format!("semantic class id {id} out of range 0..=10"))
    }
}

impl From<SemanticClass> for u8 {
    fn from(c: SemanticClass) -> u8 {
        c as u8
    }
}

impl fmt::Display for SemanticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const PALETTE: [[u8; 3]; CLASS_COUNT] = [
    [139, 119, 101], // floor
    [224, 224, 224], // ceiling
    [176, 176, 200], // wall
    [40, 40, 48],    // monitor
    [160, 82, 45],   // door
    [205, 160, 60],  // table
    [60, 120, 205],  // chair
    [95, 160, 95],   // storage
    [180, 60, 120],  // couch
    [240, 140, 40],  // clutter
    [230, 20, 20],   // target
];

/// Side length of the rendered target marker.
pub const TARGET_SIZE: f64 = 0.2;
/// Height of the rendered target marker.
pub const TARGET_HEIGHT: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomType {
    Office,
    Hallway,
    Conference,
    Storage,
    Bathroom,
}

impl RoomType {
    pub fn name(self) -> &'static str {
        match self {
            RoomType::Office => "office",
            RoomType::Hallway => "hallway",
            RoomType::Conference => "conference",
            RoomType::Storage => "storage",
            RoomType::Bathroom => "bathroom",
        }
    }
}

impl fmt::Display for RoomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub polygon: Vec<Vec2>,
    pub room_type: RoomType,
}

/// An extruded footprint with a semantic label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    /// Counter-clockwise footprint in meters.
    pub polygon: Vec<Vec2>,
    pub class: SemanticClass,
    pub instance_id: u16,
    /// Top of the extrusion in meters.
    pub height: f64,
}

impl Obstacle {
    pub fn new(polygon: Vec<Vec2>, class: SemanticClass, instance_id: u16) -> Self {
        Obstacle { polygon, class, instance_id, height: class.default_height() }
    }

    pub fn base(&self) -> f64 {
        self.class.base_height()
    }
}

/// A complete static scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldMap {
    pub bounds: Aabb,
    pub rooms: Vec<Room>,
    pub obstacles: Vec<Obstacle>,
    pub spawn_points: Vec<Vec2>,
    pub scene_seed: u64,
}

impl WorldMap {
    /// A world with only its bounds.
    pub fn empty(bounds: Aabb) -> Self {
        WorldMap { bounds, rooms: Vec::new(), obstacles: Vec::new(), spawn_points: Vec::new(), scene_seed: 0 }
    }

    pub fn offices(&self) -> impl Iterator<Item = (usize, &Room)> {
        self.rooms.iter().enumerate().filter(|(_, r)| r.room_type == RoomType::Office)
    }

    /// Index of the first room containing `p`.
    pub fn room_at(&self, p: Vec2) -> Option<usize> {
        self.rooms.iter().position(|r| crate::geom::point_in_polygon(p, &r.polygon))
    }

    pub fn max_instance_id(&self) -> u16 {
        self.obstacles.iter().map(|o| o.instance_id).max().unwrap_or(0)
    }
}
