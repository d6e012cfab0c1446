//! Triangle mesh container with derived adjacency.
//!
//! A [`Mesh`] owns its rest vertex positions and counter-clockwise faces. On
//! construction it derives the undirected edge set (with rest lengths and
//! incident faces), the face pairs sharing an interior edge, and sorted
//! one-rings. Nothing is mutable afterwards, so a mesh can be shared freely
//! between threads.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Undirected edge `v[0] < v[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge<T: Real> {
    pub v: [usize; 2],
    pub rest_length: T,
    /// One face for a boundary edge, two for an interior edge.
    pub faces: Vec<usize>,
}

impl<T: Real> Edge<T> {
    pub fn is_boundary(&self) -> bool {
        self.faces.len() == 1
    }
}

/// Two faces sharing the interior edge `edge`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FacePair {
    pub faces: [usize; 2],
    pub edge: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh<T: Real> {
    vertices: Vec<Vector3<T>>,
    faces: Vec<[usize; 3]>,
    edges: Vec<Edge<T>>,
    edge_lookup: HashMap<(usize, usize), usize>,
    face_pairs: Vec<FacePair>,
    rings: Vec<Vec<usize>>,
}

#[inline]
fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl<T: Real> Mesh<T> {
    /// Builds a mesh and its adjacency.
    ///
    /// Fails on out-of-range or repeated face indices, edges shared by more
    /// than two faces, and coincident edge endpoints. Zero-area faces with
    /// distinct, non-coincident corners are accepted here; operations that
    /// need a face's area report them.
    pub fn new(vertices: Vec<Vector3<T>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= n {
                    return Err(Error::FaceIndexOutOfRange {
                        face: fi,
                        index: i,
                        vertex_count: n,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::RepeatedFaceIndex { face: fi });
            }
        }

        let mut edges: Vec<Edge<T>> = Vec::with_capacity(faces.len() * 3 / 2 + 3);
        let mut edge_lookup = HashMap::with_capacity(faces.len() * 2);
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = key(f[k], f[(k + 1) % 3]);
                match edge_lookup.get(&(a, b)) {
                    Some(&ei) => {
                        let e: &mut Edge<T> = &mut edges[ei];
                        if e.faces.len() >= 2 {
                            return Err(Error::NonManifoldEdge { a, b });
                        }
                        e.faces.push(fi);
                    }
                    None => {
                        let rest_length = (vertices[b] - vertices[a]).norm();
                        if !(rest_length > T::zero()) {
                            return Err(Error::ZeroLengthEdge { a, b });
                        }
                        edge_lookup.insert((a, b), edges.len());
                        edges.push(Edge {
                            v: [a, b],
                            rest_length,
                            faces: vec![fi],
                        });
                    }
                }
            }
        }

        let face_pairs = edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.faces.len() == 2)
            .map(|(ei, e)| FacePair {
                faces: [e.faces[0], e.faces[1]],
                edge: ei,
            })
            .collect();

        let mut rings = vec![Vec::new(); n];
        for e in &edges {
            rings[e.v[0]].push(e.v[1]);
            rings[e.v[1]].push(e.v[0]);
        }
        for r in &mut rings {
            r.sort_unstable();
        }

        Ok(Self {
            vertices,
            faces,
            edges,
            edge_lookup,
            face_pairs,
            rings,
        })
    }

    pub fn vertices(&self) -> &[Vector3<T>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    /// Pairs of faces sharing an interior edge.
    pub fn face_pairs(&self) -> &[FacePair] {
        &self.face_pairs
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Index into [`Mesh::edges`] of the undirected edge `(a, b)`.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&key(a, b)).copied()
    }

    /// Vertices sharing an edge with `v`, ascending.
    pub fn one_ring(&self, v: usize) -> Result<&[usize]> {
        self.rings
            .get(v)
            .map(Vec::as_slice)
            .ok_or(Error::VertexOutOfRange {
                index: v,
                vertex_count: self.vertices.len(),
            })
    }

    pub(crate) fn rings(&self) -> &[Vec<usize>] {
        &self.rings
    }

    /// Diagonal length of the axis-aligned bounding box of the rest positions.
    pub fn bbox_diagonal(&self) -> T {
        bbox_diagonal(&self.vertices)
    }

    /// Checks that `positions` can stand in for this mesh's vertices.
    pub fn check_field_len(&self, what: &'static str, len: usize) -> Result<()> {
        if len != self.vertices.len() {
            return Err(Error::SizeMismatch {
                what,
                expected: self.vertices.len(),
                actual: len,
            });
        }
        Ok(())
    }

    /// Unit face normals at `positions`, right-handed in the face winding.
    pub fn face_normals(&self, positions: &[Vector3<T>]) -> Result<Vec<Vector3<T>>> {
        self.check_field_len("positions", positions.len())?;
        self.faces
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let c = triangle_cross(positions, f);
                let len = c.norm();
                let scale = (positions[f[1]] - positions[f[0]]).norm()
                    * (positions[f[2]] - positions[f[0]]).norm();
                if !(len > T::default_epsilon() * scale) {
                    return Err(Error::DegenerateFace { face: fi });
                }
                Ok(c / len)
            })
            .collect()
    }

    /// Same connectivity, new positions. Used to read deformed frames.
    pub fn same_connectivity(&self, other: &Mesh<T>) -> bool {
        self.matches_connectivity(other.vertices.len(), &other.faces)
    }

    pub fn matches_connectivity(&self, vertex_count: usize, faces: &[[usize; 3]]) -> bool {
        self.vertices.len() == vertex_count && self.faces == faces
    }
}

/// `(b - a) x (c - a)` for face `[a, b, c]`.
#[inline]
pub(crate) fn triangle_cross<T: Real>(p: &[Vector3<T>], f: &[usize; 3]) -> Vector3<T> {
    (p[f[1]] - p[f[0]]).cross(&(p[f[2]] - p[f[0]]))
}

pub fn bbox_diagonal<T: Real>(points: &[Vector3<T>]) -> T {
    let Some(first) = points.first() else {
        return T::zero();
    };
    let (mut lo, mut hi) = (*first, *first);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}
