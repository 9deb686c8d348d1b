//! Conforming triangulations of polygonal domains.
//!
//! Triangles are stored counterclockwise. Construction goes through
//! [`Mesh::new`], which reorients clockwise input, checks index ranges and
//! conformity, and extracts the boundary edges. A mesh is immutable after
//! construction.

mod io;

pub use io::{load_mesh, write_node_ele, write_vtk, MeshFormat};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BoundingBox {
    pub fn lengths(&self) -> [f64; 2] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1]]
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// Area and constant P1 basis gradients of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    /// `grads[i]` is the gradient of the barycentric coordinate of local vertex `i`.
    pub grads: [[f64; 2]; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
    bbox: BoundingBox,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh {
    /// Builds a mesh from raw vertex and triangle lists.
    ///
    /// Clockwise triangles are reoriented. Fails on out-of-range indices,
    /// degenerate triangles and non-conforming configurations.
    pub fn new(vertices: Vec<[f64; 2]>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(Error::Validation("mesh has no vertices or no triangles".into()));
        }
        let nv = vertices.len();
        for (e, tri) in triangles.iter_mut().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v >= nv) {
                return Err(Error::Validation(format!(
                    "triangle {e} references vertex {bad}, but the mesh has {nv} vertices"
                )));
            }
            if !vertices[tri[0]]
                .iter()
                .chain(&vertices[tri[1]])
                .chain(&vertices[tri[2]])
                .all(|x| x.is_finite())
            {
                return Err(Error::Validation(format!(
                    "triangle {e} has a non-finite vertex coordinate"
                )));
            }
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }

        let scale = {
            let mut min = [f64::INFINITY; 2];
            let mut max = [f64::NEG_INFINITY; 2];
            for v in &vertices {
                for k in 0..2 {
                    min[k] = min[k].min(v[k]);
                    max[k] = max[k].max(v[k]);
                }
            }
            BoundingBox { min, max }
        };
        let diam2 = {
            let l = scale.lengths();
            l[0] * l[0] + l[1] * l[1]
        };
        for (e, tri) in triangles.iter().enumerate() {
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if a <= 1e-14 * diam2 {
                return Err(Error::Validation(format!("triangle {e} is degenerate (area {a:e})")));
            }
        }

        let boundary_edges = check_conformity(&vertices, &triangles)?;

        // bbox over referenced vertices only
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for tri in &triangles {
            for &v in tri {
                for k in 0..2 {
                    min[k] = min[k].min(vertices[v][k]);
                    max[k] = max[k].max(vertices[v][k]);
                }
            }
        }

        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            bbox: BoundingBox { min, max },
        })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Boundary edges, each directed counterclockwise with respect to the
    /// triangle that owns it.
    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Area and basis gradients of triangle `e`.
    ///
    /// # Panics
    /// If `e` is out of range.
    pub fn element_geometry(&self, e: usize) -> ElementGeometry {
        let [i0, i1, i2] = self.triangles[e];
        let (p0, p1, p2) = (self.vertices[i0], self.vertices[i1], self.vertices[i2]);
        let twice = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let inv = 1.0 / twice;
        ElementGeometry {
            area: 0.5 * twice,
            grads: [
                [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
                [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
                [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
            ],
        }
    }

    /// Sum of the triangle areas.
    pub fn area(&self) -> f64 {
        (0..self.num_triangles())
            .map(|e| self.element_geometry(e).area)
            .sum()
    }

    /// Area enclosed by the boundary, via the shoelace formula over the
    /// oriented boundary edges. Equals [`Mesh::area`] for a conforming mesh.
    pub fn boundary_area(&self) -> f64 {
        0.5 * self
            .boundary_edges
            .iter()
            .map(|&[a, b]| {
                let (p, q) = (self.vertices[a], self.vertices[b]);
                p[0] * q[1] - q[0] * p[1]
            })
            .sum::<f64>()
    }

    /// Number of triangles incident to each vertex.
    pub fn vertex_valence(&self) -> Vec<usize> {
        let mut count = vec![0; self.num_vertices()];
        for tri in &self.triangles {
            for &v in tri {
                count[v] += 1;
            }
        }
        count
    }
}

/// Checks conformity and returns the oriented boundary edges.
///
/// Every undirected edge must belong to one or two triangles; a shared edge
/// must be traversed in opposite directions (triangles on opposite sides);
/// and no vertex may lie inside a boundary edge (hanging node).
fn check_conformity(vertices: &[[f64; 2]], triangles: &[[usize; 3]]) -> Result<Vec<[usize; 2]>> {
    // key: sorted pair; value: (triangle, directed edge)
    let mut edges: HashMap<(usize, usize), Vec<(usize, [usize; 2])>> = HashMap::new();
    let mut seen: HashMap<[usize; 3], usize> = HashMap::new();
    for (e, tri) in triangles.iter().enumerate() {
        let mut key = *tri;
        key.sort_unstable();
        if let Some(&other) = seen.get(&key) {
            return Err(Error::Validation(format!(
                "triangles {other} and {e} are duplicates"
            )));
        }
        seen.insert(key, e);
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            edges
                .entry((a.min(b), a.max(b)))
                .or_default()
                .push((e, [a, b]));
        }
    }

    let mut boundary = Vec::new();
    let mut keys: Vec<_> = edges.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let owners = &edges[&key];
        match owners.as_slice() {
            [(_, dir)] => boundary.push((owners[0].0, *dir)),
            [(e1, d1), (e2, d2)] => {
                if d1 == d2 {
                    return Err(Error::Validation(format!(
                        "triangles {e1} and {e2} overlap across edge ({}, {})",
                        key.0, key.1
                    )));
                }
            }
            _ => {
                return Err(Error::Validation(format!(
                    "triangles {} and {} share edge ({}, {}) with {} other triangle(s)",
                    owners[0].0,
                    owners[1].0,
                    key.0,
                    key.1,
                    owners.len() - 2
                )));
            }
        }
    }

    // hanging nodes: a vertex strictly inside a boundary edge
    let mut owner_of_vertex = vec![usize::MAX; vertices.len()];
    for (e, tri) in triangles.iter().enumerate() {
        for &v in tri {
            if owner_of_vertex[v] == usize::MAX {
                owner_of_vertex[v] = e;
            }
        }
    }
    for &(e, [a, b]) in &boundary {
        let (p, q) = (vertices[a], vertices[b]);
        let d = [q[0] - p[0], q[1] - p[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        for (v, x) in vertices.iter().enumerate() {
            if v == a || v == b || owner_of_vertex[v] == usize::MAX {
                continue;
            }
            let r = [x[0] - p[0], x[1] - p[1]];
            let t = (r[0] * d[0] + r[1] * d[1]) / len2;
            if t <= 1e-12 || t >= 1.0 - 1e-12 {
                continue;
            }
            let cross = r[0] * d[1] - r[1] * d[0];
            if cross.abs() <= 1e-12 * len2 {
                return Err(Error::Validation(format!(
                    "triangles {e} and {} are non-conforming: vertex {v} hangs on edge ({a}, {b})",
                    owner_of_vertex[v]
                )));
            }
        }
    }

    Ok(boundary.into_iter().map(|(_, d)| d).collect())
}

/// Structured triangulation of the rectangle `[0, lx] x [0, ly]`.
///
/// Vertices are numbered row by row; every cell is split along its
/// lower-left to upper-right diagonal.
pub fn generate_rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!(
            "cell counts must be positive, got nx = {nx}, ny = {ny}"
        )));
    }
    if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "side lengths must be positive, got {lx} x {ly}"
        )));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Mesh::new(vertices, triangles)
}

/// Structured triangulation of the unit square; see [`generate_rectangle`].
pub fn generate_unit_square(nx: usize, ny: usize) -> Result<Mesh> {
    generate_rectangle(1.0, 1.0, nx, ny)
}
