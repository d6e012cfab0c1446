//! ARAP and normal-consistency energies with exact position gradients.
//!
//! ```text
//! E_arap = sum_v sum_{n in ring(v)} w_vn |(x_v - x_n) - R_v (v - v_n)|^2
//! E_nc   = sum_{interior edges (f, g)} (1 - n_f . n_g)
//! ```
//!
//! `w_vn` are cotangent weights of the rest mesh, kept signed. Every directed
//! edge is visited once from each endpoint, with that endpoint's rotation.
//!
//! Gradients are assembled by gathering per vertex (no scattered writes), and
//! values are summed serially in vertex/face order, so results do not depend
//! on the thread count.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::cotangent::cotangent_weights;
use crate::error::{Error, Result};
use crate::mesh::{triangle_cross, Mesh};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport<T: Real> {
    pub value: T,
    /// `dE/dx_v` per vertex.
    pub gradient: Vec<Vector3<T>>,
}

/// ARAP energy of one rest mesh, with its cotangent weights cached.
#[derive(Debug, Clone)]
pub struct ArapEnergy<T: Real> {
    rest: Vec<Vector3<T>>,
    rings: Vec<Vec<usize>>,
    ring_weights: Vec<Vec<T>>,
}

impl<T: Real> ArapEnergy<T> {
    pub fn new(mesh: &Mesh<T>) -> Result<Self> {
        let cot = cotangent_weights(mesh)?;
        let rings = mesh.rings().to_vec();
        let ring_weights = rings
            .iter()
            .enumerate()
            .map(|(v, ring)| ring.iter().map(|&n| cot.get(mesh, v, n).expect("ring neighbor shares an edge")).collect())
            .collect();
        Ok(Self {
            rest: mesh.vertices().to_vec(),
            rings,
            ring_weights,
        })
    }

    fn check(&self, deformed: &[Vector3<T>], rotations: &[Matrix3<T>]) -> Result<()> {
        for (what, len) in [("deformed positions", deformed.len()), ("vertex rotations", rotations.len())] {
            if len != self.rest.len() {
                return Err(Error::SizeMismatch {
                    what,
                    expected: self.rest.len(),
                    actual: len,
                });
            }
        }
        Ok(())
    }

    /// `(x_v - x_n) - R_v (v - v_n)`.
    #[inline]
    fn residual(&self, x: &[Vector3<T>], r: &[Matrix3<T>], v: usize, n: usize) -> Vector3<T> {
        (x[v] - x[n]) - r[v] * (self.rest[v] - self.rest[n])
    }

    /// Value and gradient with respect to the deformed positions, the
    /// rotations held fixed.
    pub fn evaluate(&self, deformed: &[Vector3<T>], rotations: &[Matrix3<T>]) -> Result<EnergyReport<T>> {
        self.check(deformed, rotations)?;
        let two = lit::<T>(2.0);
        let per_vertex: Vec<(T, Vector3<T>)> = (0..self.rest.len())
            .into_par_iter()
            .map(|v| {
                let mut value = T::zero();
                let mut grad = Vector3::zeros();
                for (&n, &w) in self.rings[v].iter().zip(&self.ring_weights[v]) {
                    let out = self.residual(deformed, rotations, v, n);
                    value += w * out.norm_squared();
                    grad += out * (two * w);
                    // the same edge seen from n, where x_v enters with a minus sign
                    let back = self.residual(deformed, rotations, n, v);
                    grad -= back * (two * w);
                }
                (value, grad)
            })
            .collect();
        let value = per_vertex.iter().fold(T::zero(), |acc, (e, _)| acc + *e);
        Ok(EnergyReport {
            value,
            gradient: per_vertex.into_iter().map(|(_, g)| g).collect(),
        })
    }

    /// `dE/dR_v` per vertex, as full 3x3 matrices, at fixed positions.
    pub fn rotation_gradient(&self, deformed: &[Vector3<T>], rotations: &[Matrix3<T>]) -> Result<Vec<Matrix3<T>>> {
        self.check(deformed, rotations)?;
        let two = lit::<T>(2.0);
        Ok((0..self.rest.len())
            .into_par_iter()
            .map(|v| {
                self.rings[v]
                    .iter()
                    .zip(&self.ring_weights[v])
                    .fold(Matrix3::zeros(), |acc, (&n, &w)| {
                        let out = self.residual(deformed, rotations, v, n);
                        acc - out * (self.rest[v] - self.rest[n]).transpose() * (two * w)
                    })
            })
            .collect())
    }
}

/// Normal consistency of one mesh's face pairs, with vertex-face incidence
/// cached.
#[derive(Debug, Clone)]
pub struct NormalConsistency {
    faces: Vec<[usize; 3]>,
    pairs: Vec<[usize; 2]>,
    vertex_faces: Vec<Vec<(usize, usize)>>,
}

impl NormalConsistency {
    pub fn new<T: Real>(mesh: &Mesh<T>) -> Self {
        let mut vertex_faces = vec![Vec::new(); mesh.vertex_count()];
        for (fi, f) in mesh.faces().iter().enumerate() {
            for (corner, &v) in f.iter().enumerate() {
                vertex_faces[v].push((fi, corner));
            }
        }
        Self {
            faces: mesh.faces().to_vec(),
            pairs: mesh.face_pairs().iter().map(|p| p.faces).collect(),
            vertex_faces,
        }
    }

    pub fn interior_edge_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn evaluate<T: Real>(&self, deformed: &[Vector3<T>]) -> Result<EnergyReport<T>> {
        if deformed.len() != self.vertex_faces.len() {
            return Err(Error::SizeMismatch {
                what: "deformed positions",
                expected: self.vertex_faces.len(),
                actual: deformed.len(),
            });
        }
        let crosses: Vec<(Vector3<T>, T)> = self
            .faces
            .par_iter()
            .enumerate()
            .map(|(fi, f)| {
                let c = triangle_cross(deformed, f);
                let len = c.norm();
                let scale = (deformed[f[1]] - deformed[f[0]]).norm() * (deformed[f[2]] - deformed[f[0]]).norm();
                if !(len > T::default_epsilon() * scale) {
                    return Err(Error::DegenerateFace { face: fi });
                }
                Ok((c, len))
            })
            .collect::<Result<_>>()?;
        let normal = |f: usize| crosses[f].0 / crosses[f].1;

        let mut value = T::zero();
        let mut d_normal = vec![Vector3::<T>::zeros(); self.faces.len()];
        for &[f, g] in &self.pairs {
            let (nf, ng) = (normal(f), normal(g));
            value += T::one() - nf.dot(&ng);
            d_normal[f] -= ng;
            d_normal[g] -= nf;
        }

        // dE/d(cross) = (I - n n^T) dE/dn / |c|
        let d_cross: Vec<Vector3<T>> = crosses
            .iter()
            .zip(&d_normal)
            .map(|((c, len), dn)| {
                let n = c / *len;
                (dn - n * n.dot(dn)) / *len
            })
            .collect();

        let gradient = (0..deformed.len())
            .into_par_iter()
            .map(|v| {
                self.vertex_faces[v].iter().fold(Vector3::zeros(), |acc, &(fi, corner)| {
                    let f = &self.faces[fi];
                    let e1 = deformed[f[1]] - deformed[f[0]];
                    let e2 = deformed[f[2]] - deformed[f[0]];
                    let g = &d_cross[fi];
                    let g1 = e2.cross(g);
                    let g2 = g.cross(&e1);
                    acc + match corner {
                        0 => -(g1 + g2),
                        1 => g1,
                        _ => g2,
                    }
                })
            })
            .collect();
        Ok(EnergyReport { value, gradient })
    }
}

/// One-shot ARAP evaluation; see [`ArapEnergy`] for repeated use.
pub fn arap_energy<T: Real>(mesh: &Mesh<T>, deformed: &[Vector3<T>], rotations: &[Matrix3<T>]) -> Result<EnergyReport<T>> {
    ArapEnergy::new(mesh)?.evaluate(deformed, rotations)
}

/// One-shot normal consistency; see [`NormalConsistency`] for repeated use.
pub fn normal_consistency<T: Real>(mesh: &Mesh<T>, deformed: &[Vector3<T>]) -> Result<EnergyReport<T>> {
    NormalConsistency::new(mesh).evaluate(deformed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;
    use crate::rotation::exp_so3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn jitter(points: &[Vector3<f64>], amount: f64, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
        points
            .iter()
            .map(|p| p + Vector3::from_fn(|_, _| (rng.random::<f64>() - 0.5) * amount))
            .collect()
    }

    /// Two triangles sharing edge 0-1 along x, the second lifted so the
    /// normals meet at `angle`.
    fn hinge(angle: f64) -> (Mesh<f64>, Vec<Vector3<f64>>) {
        let flat = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.5, 1.0, 0.0),
            Vector3::new(0.5, -1.0, 0.0),
        ];
        let m = Mesh::new(flat, vec![[0, 1, 2], [1, 0, 3]]).unwrap();
        let mut folded = m.vertices().to_vec();
        folded[3] = Vector3::new(0.5, -angle.cos(), angle.sin());
        (m, folded)
    }

    #[test]
    fn arap_zero_cases() {
        let m = primitives::uv_sphere::<f64>(10, 7, 1.0);
        let id = vec![Matrix3::identity(); m.vertex_count()];
        assert!(arap_energy(&m, m.vertices(), &id).unwrap().value.abs() < 1e-15);

        let r = exp_so3(&Vector3::new(0.3, -0.7, 1.1));
        let t = Vector3::new(2.0, -1.0, 0.5);
        let moved: Vec<_> = m.vertices().iter().map(|v| r * v + t).collect();
        let rep = arap_energy(&m, &moved, &vec![r; m.vertex_count()]).unwrap();
        assert!(rep.value.abs() < 1e-10);
        assert!(rep.gradient.iter().all(|g| g.amax() < 1e-10));
    }

    #[test]
    fn arap_scaled_copy_matches_edge_enumeration() {
        let m = primitives::uv_sphere::<f64>(10, 7, 1.0);
        let doubled: Vec<_> = m.vertices().iter().map(|v| v * 2.0).collect();
        let got = arap_energy(&m, &doubled, &vec![Matrix3::identity(); m.vertex_count()]).unwrap().value;
        let cot = cotangent_weights(&m).unwrap();
        let mut expected = 0.0;
        for (e, w) in m.edges().iter().zip(cot.per_edge()) {
            let d = m.vertices()[e.v[0]] - m.vertices()[e.v[1]];
            // both directions
            expected += 2.0 * w * d.norm_squared();
        }
        assert!((got - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn nc_hinge_values() {
        for (angle, expected) in [(PI / 2.0, 1.0), (PI / 3.0, 0.5), (0.0, 0.0)] {
            let (m, folded) = hinge(angle);
            let v = normal_consistency(&m, &folded).unwrap().value;
            assert!((v - expected).abs() < 1e-14, "{angle}: {v}");
        }
    }

    #[test]
    fn nc_planar_is_zero() {
        let m = primitives::grid::<f64>(5, 4, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let moved: Vec<_> = m
            .vertices()
            .iter()
            .map(|v| v + Vector3::new(rng.random::<f64>() * 0.05, rng.random::<f64>() * 0.05, 0.0))
            .collect();
        let rep = normal_consistency(&m, &moved).unwrap();
        assert!(rep.value.abs() < 1e-15);
    }

    fn check_gradient(f: impl Fn(&[Vector3<f64>]) -> EnergyReport<f64>, x: &[Vector3<f64>], rng: &mut ChaCha8Rng) {
        let h = 1e-5 * crate::mesh::bbox_diagonal(x);
        let base = f(x);
        for _ in 0..60 {
            let (v, k) = (rng.random_range(0..x.len()), rng.random_range(0..3));
            let mut p = x.to_vec();
            p[v][k] += h;
            let up = f(&p).value;
            p[v][k] -= 2.0 * h;
            let down = f(&p).value;
            let fd = (up - down) / (2.0 * h);
            let a = base.gradient[v][k];
            assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6) < 1e-4, "v{v} k{k}: {a} vs {fd}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = primitives::uv_sphere::<f64>(10, 7, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = jitter(m.vertices(), 0.2, &mut rng);
        let rots: Vec<_> = (0..m.vertex_count())
            .map(|_| exp_so3(&Vector3::from_fn(|_, _| rng.random::<f64>() - 0.5)))
            .collect();
        let arap = ArapEnergy::new(&m).unwrap();
        check_gradient(|p| arap.evaluate(p, &rots).unwrap(), &x, &mut rng);
        let nc = NormalConsistency::new(&m);
        check_gradient(|p| nc.evaluate(p).unwrap(), &x, &mut rng);
    }

    #[test]
    fn rotation_gradient_matches_finite_differences() {
        let m = primitives::uv_sphere::<f64>(8, 5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = jitter(m.vertices(), 0.2, &mut rng);
        let rots: Vec<_> = (0..m.vertex_count()).map(|_| Matrix3::from_fn(|_, _| rng.random::<f64>())).collect();
        let arap = ArapEnergy::new(&m).unwrap();
        let g = arap.rotation_gradient(&x, &rots).unwrap();
        let h = 1e-6;
        for v in [0, 5, 17] {
            for (i, j) in [(0, 0), (1, 2), (2, 1)] {
                let mut r = rots.clone();
                r[v][(i, j)] += h;
                let up = arap.evaluate(&x, &r).unwrap().value;
                r[v][(i, j)] -= 2.0 * h;
                let down = arap.evaluate(&x, &r).unwrap().value;
                let fd = (up - down) / (2.0 * h);
                assert!((g[v][(i, j)] - fd).abs() < 1e-6 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rigid_invariance() {
        let m = primitives::uv_sphere::<f64>(10, 7, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = jitter(m.vertices(), 0.2, &mut rng);
        let rots: Vec<_> = (0..m.vertex_count())
            .map(|_| exp_so3(&Vector3::from_fn(|_, _| rng.random::<f64>() - 0.5)))
            .collect();
        let g = exp_so3(&Vector3::new(1.0, 2.0, -0.5));
        let t = Vector3::new(3.0, 0.0, -1.0);
        let gx: Vec<_> = x.iter().map(|p| g * p + t).collect();
        let gr: Vec<_> = rots.iter().map(|r| g * r).collect();
        let a = arap_energy(&m, &x, &rots).unwrap().value;
        assert!((arap_energy(&m, &gx, &gr).unwrap().value - a).abs() < 1e-10);
        let n = normal_consistency(&m, &x).unwrap().value;
        assert!((normal_consistency(&m, &gx).unwrap().value - n).abs() < 1e-10);
    }

    #[test]
    fn nc_bounds_and_degenerate_face() {
        let m = primitives::uv_sphere::<f64>(10, 7, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = jitter(m.vertices(), 1.0, &mut rng);
        let nc = NormalConsistency::new(&m);
        let v = nc.evaluate(&x).unwrap().value;
        assert!(v >= 0.0 && v <= 2.0 * nc.interior_edge_count() as f64);

        let (hm, mut folded) = hinge(0.5);
        folded[2] = folded[0];
        assert!(matches!(normal_consistency(&hm, &folded), Err(Error::DegenerateFace { face: 0 })));
        assert!(normal_consistency(&hm, &folded[..3]).is_err());
    }

    #[test]
    fn parallel_matches_serial() {
        let m = primitives::uv_sphere::<f64>(16, 12, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = jitter(m.vertices(), 0.1, &mut rng);
        let rots = vec![exp_so3(&Vector3::new(0.1, 0.2, 0.3)); m.vertex_count()];
        let arap = ArapEnergy::new(&m).unwrap();
        let nc = NormalConsistency::new(&m);
        let par = (arap.evaluate(&x, &rots).unwrap(), nc.evaluate(&x).unwrap());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ser = pool.install(|| (arap.evaluate(&x, &rots).unwrap(), nc.evaluate(&x).unwrap()));
        assert_eq!(par, ser);
    }
}
