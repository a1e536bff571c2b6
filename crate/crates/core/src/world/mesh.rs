use alloc::vec::Vec;

use crate::world::{SemanticClass, WorldMap, CEILING_HEIGHT};

/// Mesh vertex in the simulation frame (x, y planar, z up).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshVertex {
    pub position: [f64; 3],
    pub class: SemanticClass,
    /// 0 for floor and ceiling.
    pub instance: u16,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshFace {
    /// Vertex indices, counter-clockwise seen from outside.
    pub indices: Vec<u32>,
    pub class: SemanticClass,
    pub instance: u16,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SceneMesh {
    pub vertices: Vec<MeshVertex>,
    pub faces: Vec<MeshFace>,
}

impl SceneMesh {
    /// Total area of faces of `class`, measured in the horizontal plane.
    pub fn horizontal_area(&self, class: SemanticClass) -> f64 {
        self.faces
            .iter()
            .filter(|f| f.class == class)
            .map(|f| {
                let n = f.indices.len();
                let mut acc = 0.0;
                for i in 0..n {
                    let p = self.vertices[f.indices[i] as usize].position;
                    let q = self.vertices[f.indices[(i + 1) % n] as usize].position;
                    acc += p[0] * q[1] - p[1] * q[0];
                }
                (acc * 0.5).abs()
            })
            .sum()
    }
}

/// Extrudes every obstacle between its base and top and adds a floor quad at
/// z = 0 and a ceiling quad at the ceiling height, both spanning the bounds.
pub fn build_mesh(world: &WorldMap) -> SceneMesh {
    let mut mesh = SceneMesh::default();
    let corners = world.bounds.corners();

    let floor0 = mesh.vertices.len() as u32;
    for c in corners {
        mesh.vertices.push(MeshVertex { position: [c.x, c.y, 0.0], class: SemanticClass::Floor, instance: 0 });
    }
    mesh.faces.push(MeshFace {
        indices: (floor0..floor0 + 4).collect(),
        class: SemanticClass::Floor,
        instance: 0,
    });

    let ceil0 = mesh.vertices.len() as u32;
    for c in corners {
        mesh.vertices.push(MeshVertex {
            position: [c.x, c.y, CEILING_HEIGHT],
            class: SemanticClass::Ceiling,
            instance: 0,
        });
    }
    // Faces down into the room.
    mesh.faces.push(MeshFace {
        indices: (ceil0..ceil0 + 4).rev().collect(),
        class: SemanticClass::Ceiling,
        instance: 0,
    });

    for o in &world.obstacles {
        let n = o.polygon.len() as u32;
        let bottom = mesh.vertices.len() as u32;
        let (base, top) = (o.base(), o.height);
        for p in &o.polygon {
            mesh.vertices.push(MeshVertex { position: [p.x, p.y, base], class: o.class, instance: o.instance_id });
        }
        for p in &o.polygon {
            mesh.vertices.push(MeshVertex { position: [p.x, p.y, top], class: o.class, instance: o.instance_id });
        }
        let top0 = bottom + n;
        for i in 0..n {
            let j = (i + 1) % n;
            mesh.faces.push(MeshFace {
                indices: alloc::vec![bottom + i, bottom + j, top0 + j, top0 + i],
                class: o.class,
                instance: o.instance_id,
            });
        }
        mesh.faces.push(MeshFace { indices: (top0..top0 + n).collect(), class: o.class, instance: o.instance_id });
        mesh.faces.push(MeshFace {
            indices: (bottom..bottom + n).rev().collect(),
            class: o.class,
            instance: o.instance_id,
        });
    }
    mesh
}
