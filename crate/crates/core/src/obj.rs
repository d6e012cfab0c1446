//! Minimal Wavefront OBJ reader/writer: `v x y z` and `f i j k ...` records.
//!
//! Face indices are 1-based and may carry `/vt/vn` suffixes, which are
//! ignored; negative (relative) indices are resolved against the vertices
//! read so far. Polygons are fan-triangulated around their first corner.
//! Output uses fixed 6-decimal coordinates so identical inputs give
//! identical bytes.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::scalar::{lit, to_f64, Real};

/// Raw OBJ contents: positions and triangles, not yet validated as a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjGeometry<T: Real> {
    pub positions: Vec<Vector3<T>>,
    pub faces: Vec<[usize; 3]>,
    face_lines: Vec<usize>,
}

impl<T: Real> ObjGeometry<T> {
    pub fn into_mesh(self) -> Result<Mesh<T>> {
        let face_lines = self.face_lines;
        Mesh::new(self.positions, self.faces).map_err(|e| match e {
            Error::RepeatedFaceIndex { face } => Error::Parse {
                line: face_lines[face],
                message: "face repeats a vertex".into(),
            },
            other => other,
        })
    }
}

pub fn load_obj<T: Real>(path: impl AsRef<Path>) -> Result<Mesh<T>> {
    load_obj_geometry(path)?.into_mesh()
}

pub fn read_obj<T: Real, R: Read>(reader: R) -> Result<Mesh<T>> {
    read_obj_geometry(reader)?.into_mesh()
}

pub fn load_obj_geometry<T: Real>(path: impl AsRef<Path>) -> Result<ObjGeometry<T>> {
    let file = std::fs::File::open(path)?;
    read_obj_geometry(BufReader::new(file))
}

pub fn read_obj_geometry<T: Real, R: Read>(reader: R) -> Result<ObjGeometry<T>> {
    let mut vertices: Vec<Vector3<T>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    // source line of every triangle, for error messages
    let mut face_lines: Vec<usize> = Vec::new();

    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = lineno + 1;
        let line = line.split('#').next().unwrap_or("");
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0f64; 3];
                for c in &mut xyz {
                    let tok = tokens.next().ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: "vertex record needs three coordinates".into(),
                    })?;
                    *c = tok.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("invalid coordinate `{tok}`"),
                    })?;
                }
                vertices.push(Vector3::new(lit(xyz[0]), lit(xyz[1]), lit(xyz[2])));
            }
            Some("f") => {
                let mut poly = Vec::with_capacity(4);
                for tok in tokens {
                    let idx = tok.split('/').next().unwrap_or("");
                    let i: i64 = idx.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("invalid face index `{tok}`"),
                    })?;
                    let resolved = match i {
                        0 => {
                            return Err(Error::Parse {
                                line: line_no,
                                message: "face indices are 1-based".into(),
                            })
                        }
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = (-i) as usize;
                            if back > vertices.len() {
                                return Err(Error::Parse {
                                    line: line_no,
                                    message: format!("relative index {i} precedes the first vertex"),
                                });
                            }
                            vertices.len() - back
                        }
                    };
                    poly.push(resolved);
                }
                if poly.len() < 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "face needs at least three vertices".into(),
                    });
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                    face_lines.push(line_no);
                }
            }
            _ => {}
        }
    }

    if vertices.is_empty() || faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    for (fi, f) in faces.iter().enumerate() {
        if let Some(&index) = f.iter().find(|&&i| i >= vertices.len()) {
            return Err(Error::FaceIndexOutOfRange {
                face: fi,
                index,
                vertex_count: vertices.len(),
            });
        }
    }
    Ok(ObjGeometry {
        positions: vertices,
        faces,
        face_lines,
    })
}

/// Serializes `positions` with the connectivity of `faces`.
pub fn obj_string<T: Real>(positions: &[Vector3<T>], faces: &[[usize; 3]]) -> String {
    let mut out = String::with_capacity(positions.len() * 40 + faces.len() * 20);
    for p in positions {
        let _ = writeln!(
            out,
            "v {:.6} {:.6} {:.6}",
            clean(to_f64(p.x)),
            clean(to_f64(p.y)),
            clean(to_f64(p.z))
        );
    }
    for f in faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

// Values that print as zero are written as +0 (never `-0.000000`).
fn clean(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        x
    }
}

pub fn write_obj<T: Real>(path: impl AsRef<Path>, positions: &[Vector3<T>], faces: &[[usize; 3]]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(obj_string(positions, faces).as_bytes())?;
    Ok(())
}
