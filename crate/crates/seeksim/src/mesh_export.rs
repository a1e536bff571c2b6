//! PLY and OBJ export of the extruded scene, in the simulation frame
//! (x, y planar, z up, meters).

use std::fmt::Write as _;
use std::str::FromStr;

use seeksim_core::world::{build_mesh, SceneMesh, SemanticClass, WorldMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Ply,
    Obj,
}

#[derive(Debug, thiserror::Error)]
#[error("unsupported mesh format {0:?} (expected ply or obj)")]
pub struct UnsupportedFormat(pub String);

impl FromStr for MeshFormat {
    type Err = UnsupportedFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ply" => Ok(MeshFormat::Ply),
            "obj" => Ok(MeshFormat::Obj),
            _ => Err(UnsupportedFormat(s.to_string())),
        }
    }
}

impl MeshFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MeshFormat::Ply => "ply",
            MeshFormat::Obj => "obj",
        }
    }
}

pub fn export_mesh(world: &WorldMap, format: MeshFormat) -> Vec<u8> {
    let mesh = build_mesh(world);
    match format {
        MeshFormat::Ply => write_ply(&mesh),
        MeshFormat::Obj => write_obj(&mesh, "classes.mtl").into_bytes(),
    }
}

/// Binary little-endian PLY. Vertices carry x, y, z (float), the class
/// palette color, the class id and the instance id; faces carry the same
/// class and instance.
pub fn write_ply(mesh: &SceneMesh) -> Vec<u8> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         property uchar class\nproperty ushort instance\n\
         element face {}\nproperty list uchar int vertex_indices\n\
         property uchar class\nproperty ushort instance\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    )
    .into_bytes();
    for v in &mesh.vertices {
        for c in v.position {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        out.extend_from_slice(&v.class.color());
        out.push(v.class.id());
        out.extend_from_slice(&v.instance.to_le_bytes());
    }
    for f in &mesh.faces {
        out.push(u8::try_from(f.indices.len()).expect("faces have fewer than 256 corners"));
        for &i in &f.indices {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
        out.push(f.class.id());
        out.extend_from_slice(&f.instance.to_le_bytes());
    }
    out
}

/// Wavefront OBJ with one group per instance and one material per class.
/// Instance 0 is the floor and ceiling.
pub fn write_obj(mesh: &SceneMesh, mtllib: &str) -> String {
    let mut s = format!("mtllib {mtllib}\n");
    for v in &mesh.vertices {
        let [x, y, z] = v.position;
        writeln!(s, "v {x} {y} {z}").unwrap();
    }
    let mut order: Vec<usize> = (0..mesh.faces.len()).collect();
    order.sort_by_key(|&i| mesh.faces[i].instance);
    let (mut group, mut material) = (None, None);
    for i in order {
        let f = &mesh.faces[i];
        if group != Some(f.instance) {
            writeln!(s, "g instance_{}", f.instance).unwrap();
            group = Some(f.instance);
            material = None;
        }
        if material != Some(f.class) {
            writeln!(s, "usemtl {}", f.class.name()).unwrap();
            material = Some(f.class);
        }
        s.push('f');
        for &k in &f.indices {
            write!(s, " {}", k + 1).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Material library naming each class after its palette color.
pub fn class_materials() -> String {
    let mut s = String::new();
    for c in SemanticClass::ALL {
        let [r, g, b] = c.color().map(|v| v as f64 / 255.0);
        writeln!(s, "newmtl {}\nKd {r:.6} {g:.6} {b:.6}\n", c.name()).unwrap();
    }
    s
}
