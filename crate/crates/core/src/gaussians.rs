//! Flat Gaussians bound to mesh faces by barycentric coordinates.
//!
//! Centers follow the deformed vertices through their barycentric weights,
//! rotations pick up the barycentric log-blend of the corner rotations
//! (applied on the left) and scalings are multiplied by the blended corner
//! shear. Appearance payloads are carried along untouched.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{triangle_cross, Mesh};
use crate::rotation::{quat_from_matrix, rotation_log_blend};
use crate::scalar::{lit, Real};

/// Gaussian counts per face with a defined barycentric pattern.
pub const SUPPORTED_PER_FACE: [usize; 4] = [1, 3, 4, 6];

/// Ratio of the flat axis to the in-plane axes at binding time.
pub const FLATNESS: f64 = 1e-3;

/// Smallest scaling component kept after a shear update.
pub const MIN_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGaussian<T: Real> {
    pub face: usize,
    pub barycentric: [T; 3],
    pub rotation: UnitQuaternion<T>,
    pub scaling: Vector3<T>,
    pub payload: Vec<u8>,
}

/// RGBA `(0.5, 0.5, 0.5, 1.0)` as little-endian f32.
pub fn default_payload() -> Vec<u8> {
    [0.5f32, 0.5, 0.5, 1.0].iter().flat_map(|c| c.to_le_bytes()).collect()
}

/// Gaussians of one mesh, `per_face` of them on every face in face order.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGaussianSet<T: Real> {
    per_face: usize,
    gaussians: Vec<SurfaceGaussian<T>>,
    faces: Vec<[usize; 3]>,
    vertex_count: usize,
}

fn barycentric_pattern(per_face: usize) -> Result<Vec<[f64; 3]>> {
    let (third, big, small) = (1.0 / 3.0, 2.0 / 3.0, 1.0 / 6.0);
    let (edge, inner) = (1.0 / 6.0, 5.0 / 12.0);
    let corners = [[big, small, small], [small, big, small], [small, small, big]];
    let edges = [[edge, inner, inner], [inner, edge, inner], [inner, inner, edge]];
    let mut out = Vec::with_capacity(per_face);
    match per_face {
        1 => out.push([third; 3]),
        3 => out.extend(corners),
        4 => {
            out.push([third; 3]);
            out.extend(corners);
        }
        6 => {
            out.extend(corners);
            out.extend(edges);
        }
        other => return Err(Error::UnsupportedGaussianCount(other)),
    }
    Ok(out)
}

/// Barycentric triple whose components sum to exactly one in `T`, the last
/// one completing the first two.
fn exact_triple<T: Real>(b: [f64; 3]) -> [T; 3] {
    let (a, m) = (lit::<T>(b[0]), lit::<T>(b[1]));
    [a, m, T::one() - (a + m)]
}

/// Rotation whose local x-axis is the face normal, with the first edge as
/// local y.
fn face_frame<T: Real>(p: &[Vector3<T>], f: &[usize; 3]) -> UnitQuaternion<T> {
    let n = triangle_cross(p, f).normalize();
    let e1 = (p[f[1]] - p[f[0]]).normalize();
    let e1 = (e1 - n * n.dot(&e1)).normalize();
    let m = Matrix3::from_columns(&[n, e1, n.cross(&e1)]);
    quat_from_matrix(&m)
}

fn circumradius<T: Real>(p: &[Vector3<T>], f: &[usize; 3]) -> T {
    let a = (p[f[1]] - p[f[0]]).norm();
    let b = (p[f[2]] - p[f[1]]).norm();
    let c = (p[f[0]] - p[f[2]]).norm();
    let twice_area = triangle_cross(p, f).norm();
    a * b * c / (twice_area * lit::<T>(2.0))
}

/// Attaches `per_face` flat Gaussians to every face.
pub fn bind_gaussians<T: Real>(mesh: &Mesh<T>, per_face: usize) -> Result<SurfaceGaussianSet<T>> {
    let pattern = barycentric_pattern(per_face)?;
    let p = mesh.vertices();
    mesh.face_normals(p)?;
    let mut gaussians = Vec::with_capacity(pattern.len() * mesh.face_count());
    for (fi, f) in mesh.faces().iter().enumerate() {
        let rotation = face_frame(p, f);
        let ell = circumradius(p, f) * lit::<T>(0.5);
        let scaling = Vector3::new(ell * lit::<T>(FLATNESS), ell, ell);
        for &b in &pattern {
            gaussians.push(SurfaceGaussian {
                face: fi,
                barycentric: exact_triple(b),
                rotation,
                scaling,
                payload: default_payload(),
            });
        }
    }
    Ok(SurfaceGaussianSet {
        per_face,
        gaussians,
        faces: mesh.faces().to_vec(),
        vertex_count: mesh.vertex_count(),
    })
}

/// Result of a scaling update.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingUpdate<T: Real> {
    pub scalings: Vec<Vector3<T>>,
    /// Gaussians with at least one component raised to [`MIN_SCALE`].
    pub clamped: usize,
}

impl<T: Real> SurfaceGaussianSet<T> {
    /// Rebuilds a set from stored Gaussians, checking them against `mesh`.
    pub fn from_parts(mesh: &Mesh<T>, per_face: usize, gaussians: Vec<SurfaceGaussian<T>>) -> Result<Self> {
        barycentric_pattern(per_face)?;
        if gaussians.len() != per_face * mesh.face_count() {
            return Err(Error::SizeMismatch {
                what: "gaussians",
                expected: per_face * mesh.face_count(),
                actual: gaussians.len(),
            });
        }
        let mut per = vec![0usize; mesh.face_count()];
        for (i, g) in gaussians.iter().enumerate() {
            let Some(count) = per.get_mut(g.face) else {
                return Err(Error::Format(format!("gaussian {i}: face {} out of range", g.face)));
            };
            *count += 1;
            let sum = g.barycentric[0] + g.barycentric[1] + g.barycentric[2];
            if g.barycentric.iter().any(|&b| b < T::zero()) || (sum - T::one()).abs() > lit(1e-12) {
                return Err(Error::Format(format!("gaussian {i}: invalid barycentric coordinates")));
            }
            if (g.rotation.quaternion().norm() - T::one()).abs() > lit(1e-9) {
                return Err(Error::Format(format!("gaussian {i}: rotation is not a unit quaternion")));
            }
            if g.scaling.iter().any(|&s| !(s > T::zero())) {
                return Err(Error::Format(format!("gaussian {i}: non-positive scaling")));
            }
        }
        if let Some(f) = per.iter().position(|&c| c != per_face) {
            return Err(Error::Format(format!("face {f} has {} gaussians, expected {per_face}", per[f])));
        }
        Ok(Self {
            per_face,
            gaussians,
            faces: mesh.faces().to_vec(),
            vertex_count: mesh.vertex_count(),
        })
    }

    pub fn per_face(&self) -> usize {
        self.per_face
    }

    pub fn gaussians(&self) -> &[SurfaceGaussian<T>] {
        &self.gaussians
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    fn corners(&self, g: &SurfaceGaussian<T>) -> [usize; 3] {
        self.faces[g.face]
    }

    fn check(&self, what: &'static str, len: usize) -> Result<()> {
        if len != self.vertex_count {
            return Err(Error::SizeMismatch {
                what,
                expected: self.vertex_count,
                actual: len,
            });
        }
        Ok(())
    }

    /// Centers at the given vertex positions (rest positions give the bound
    /// centers).
    pub fn centers(&self, positions: &[Vector3<T>]) -> Result<Vec<Vector3<T>>> {
        self.check("positions", positions.len())?;
        Ok(self
            .gaussians
            .par_iter()
            .map(|g| {
                let [a, b, c] = self.corners(g);
                let [pa, pb, pc] = g.barycentric;
                positions[a] * pa + positions[b] * pb + positions[c] * pc
            })
            .collect())
    }

    /// Rotation increments `exp(sum pi_i log R_i)` per Gaussian.
    pub fn rotation_increments(&self, rotations: &[Matrix3<T>]) -> Result<Vec<UnitQuaternion<T>>> {
        self.check("vertex rotations", rotations.len())?;
        self.gaussians
            .par_iter()
            .map(|g| {
                let [a, b, c] = self.corners(g);
                let blend = rotation_log_blend(&g.barycentric, &[rotations[a], rotations[b], rotations[c]])?;
                Ok(quat_from_matrix(&blend))
            })
            .collect()
    }

    /// `normalize(dq * q)` per Gaussian.
    pub fn deform_rotations(&self, rotations: &[Matrix3<T>]) -> Result<Vec<UnitQuaternion<T>>> {
        let dq = self.rotation_increments(rotations)?;
        Ok(self
            .gaussians
            .iter()
            .zip(dq)
            .map(|(g, dq)| {
                let q: Quaternion<T> = dq.quaternion() * g.rotation.quaternion();
                UnitQuaternion::from_quaternion(q)
            })
            .collect())
    }

    /// `(sum pi_i S_i) s` per Gaussian, components at or below zero raised
    /// to [`MIN_SCALE`].
    pub fn deform_scalings(&self, shears: &[Matrix3<T>]) -> Result<ScalingUpdate<T>> {
        self.check("vertex shears", shears.len())?;
        let floor = lit::<T>(MIN_SCALE);
        let raw: Vec<(Vector3<T>, bool)> = self
            .gaussians
            .par_iter()
            .map(|g| {
                let [a, b, c] = self.corners(g);
                let [pa, pb, pc] = g.barycentric;
                let ds = shears[a] * pa + shears[b] * pb + shears[c] * pc;
                let mut s = ds * g.scaling;
                let mut hit = false;
                for x in s.iter_mut() {
                    if !(*x > T::zero()) {
                        *x = floor;
                        hit = true;
                    }
                }
                (s, hit)
            })
            .collect();
        let clamped = raw.iter().filter(|(_, hit)| *hit).count();
        if clamped > 0 {
            log::warn!("{clamped} gaussian scalings had non-positive components, clamped to {MIN_SCALE}");
        }
        Ok(ScalingUpdate {
            scalings: raw.into_iter().map(|(s, _)| s).collect(),
            clamped,
        })
    }

    /// Deformed copy of the set: barycentrics and payloads are kept, the
    /// rotations and scalings replaced. Returns the copy and the deformed
    /// centers.
    pub fn deform(
        &self,
        positions: &[Vector3<T>],
        rotations: &[Matrix3<T>],
        shears: &[Matrix3<T>],
    ) -> Result<(Self, Vec<Vector3<T>>)> {
        let centers = self.centers(positions)?;
        let quats = self.deform_rotations(rotations)?;
        let scales = self.deform_scalings(shears)?.scalings;
        let gaussians = self
            .gaussians
            .iter()
            .zip(quats.into_iter().zip(scales))
            .map(|(g, (rotation, scaling))| SurfaceGaussian {
                rotation,
                scaling,
                ..g.clone()
            })
            .collect();
        Ok((Self { gaussians, ..self.clone() }, centers))
    }
}
