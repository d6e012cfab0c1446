//! Cotangent edge weights on the rest geometry.
//!
//! `w(a, b) = 1/2 * sum over faces incident to (a, b) of cot(angle opposite
//! the edge)`. Weights are not clamped: obtuse configurations give negative
//! values.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::scalar::{lit, Real};

/// Symmetric per-edge weights, indexed like [`Mesh::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentWeights<T: Real> {
    per_edge: Vec<T>,
}

impl<T: Real> CotangentWeights<T> {
    pub fn per_edge(&self) -> &[T] {
        &self.per_edge
    }

    /// Weight of the directed edge `a -> b` (equal to `b -> a`).
    pub fn get(&self, mesh: &Mesh<T>, a: usize, b: usize) -> Option<T> {
        mesh.edge_index(a, b).map(|e| self.per_edge[e])
    }
}

/// Cotangent of the angle at `o` in the triangle `(o, a, b)`.
pub(crate) fn cot_at<T: Real>(o: &Vector3<T>, a: &Vector3<T>, b: &Vector3<T>) -> Option<T> {
    let u = a - o;
    let w = b - o;
    let cross = u.cross(&w).norm();
    if !(cross > T::default_epsilon() * u.norm() * w.norm()) {
        return None;
    }
    Some(u.dot(&w) / cross)
}

pub fn cotangent_weights<T: Real>(mesh: &Mesh<T>) -> Result<CotangentWeights<T>> {
    let p = mesh.vertices();
    let half = lit::<T>(0.5);
    let per_edge = mesh
        .edges()
        .iter()
        .map(|e| {
            let mut sum = T::zero();
            for &fi in &e.faces {
                let f = mesh.faces()[fi];
                let o = f
                    .iter()
                    .copied()
                    .find(|&v| v != e.v[0] && v != e.v[1])
                    .expect("face contains its edge");
                sum += cot_at(&p[o], &p[e.v[0]], &p[e.v[1]]).ok_or(Error::DegenerateFace { face: fi })?;
            }
            Ok(half * sum)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CotangentWeights { per_edge })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Angle at `o` from arc-cosine of the normalized dot product; a
    /// different route from the dot/cross ratio used above.
    fn oracle_cot(o: Vector3<f64>, a: Vector3<f64>, b: Vector3<f64>) -> f64 {
        let u = (a - o).normalize();
        let w = (b - o).normalize();
        let angle = u.dot(&w).clamp(-1.0, 1.0).acos();
        angle.cos() / angle.sin()
    }

    #[test]
    fn equilateral_pair() {
        let h = 3f64.sqrt() / 2.0;
        let m = Mesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.5, h, 0.0),
                Vector3::new(0.5, -h, 0.0),
            ],
            vec![[0, 1, 2], [1, 0, 3]],
        )
        .unwrap();
        let w = cotangent_weights(&m).unwrap();
        let expected = 0.5
            * (oracle_cot(m.vertices()[2], m.vertices()[0], m.vertices()[1])
                + oracle_cot(m.vertices()[3], m.vertices()[0], m.vertices()[1]));
        let got = w.get(&m, 0, 1).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn right_angle_boundary_edge_is_zero() {
        // right isoceles triangle, 90 degrees at vertex 0, opposite edge (1, 2)
        let m = Mesh::<f64>::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let w = cotangent_weights(&m).unwrap();
        assert!(w.get(&m, 1, 2).unwrap().abs() < 1e-15);
        assert!((w.get(&m, 1, 2).unwrap() - 0.5 * oracle_cot(m.vertices()[0], m.vertices()[1], m.vertices()[2])).abs() < 1e-15);
        // legs: 45 degrees opposite, cot = 1
        assert!((w.get(&m, 0, 1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn symmetric_and_matches_oracle_on_sphere() {
        let m = crate::primitives::uv_sphere::<f64>(9, 6, 1.3);
        let w = cotangent_weights(&m).unwrap();
        for e in m.edges() {
            let (a, b) = (e.v[0], e.v[1]);
            assert_eq!(w.get(&m, a, b), w.get(&m, b, a));
            let mut expected = 0.0;
            for &fi in &e.faces {
                let f = m.faces()[fi];
                let o = *f.iter().find(|&&v| v != a && v != b).unwrap();
                expected += 0.5 * oracle_cot(m.vertices()[o], m.vertices()[a], m.vertices()[b]);
            }
            assert!((w.get(&m, a, b).unwrap() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn obtuse_weights_stay_negative() {
        let m = Mesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(2.0, 0.0, 0.0),
                Vector3::new(1.0, 0.1, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let w = cotangent_weights(&m).unwrap();
        assert!(w.get(&m, 0, 1).unwrap() < 0.0);
    }

    #[test]
    fn zero_area_face_is_named() {
        let m = Mesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
                Vector3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 3, 1]],
        )
        .unwrap();
        assert!(matches!(
            cotangent_weights(&m),
            Err(Error::DegenerateFace { face: 1 })
        ));
    }
}
