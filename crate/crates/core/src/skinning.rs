//! Linear blend, dual-quaternion and adaptive hybrid skinning driven by
//! per-node transforms.
//!
//! A node transform carries a rotation `R`, a symmetric shear `S`, a
//! translation `t` and a rigid strength `eta in [0, 1]`. The shear is damped
//! toward identity by `eta`:
//!
//! ```text
//! S_eff = (1 - eta) S + eta I
//! ```
//!
//! * LBS blends the affine maps `x -> R S_eff x + t`.
//! * DQS blends the rigid parts `(R, t)` as unit dual quaternions.
//! * AHS interpolates the two with the vertex's blended strength
//!   `eta_v = sum w eta`, and also reports a blended rotation
//!   `R_v = exp(sum w log R)` and shear `S_v = sum w S_eff`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::dual_quat::{dq_blend, DualQuaternion};
use crate::error::{Error, Result};
use crate::graph::DeformationGraph;
use crate::mesh::Mesh;
use crate::rotation::{exp_so3, log_so3_clamped};
use crate::scalar::{lit, Real};

pub type VertexField3<T> = Vec<Vector3<T>>;
pub type VertexFieldMat<T> = Vec<Matrix3<T>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SkinningMode {
    Lbs,
    Dqs,
    #[default]
    Ahs,
}

impl fmt::Display for SkinningMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkinningMode::Lbs => "lbs",
            SkinningMode::Dqs => "dqs",
            SkinningMode::Ahs => "ahs",
        })
    }
}

impl FromStr for SkinningMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lbs" => Ok(SkinningMode::Lbs),
            "dqs" => Ok(SkinningMode::Dqs),
            "ahs" => Ok(SkinningMode::Ahs),
            other => Err(Error::InvalidArgument(format!("unknown skinning mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeTransform<T: Real> {
    pub rotation: Matrix3<T>,
    pub shear: Matrix3<T>,
    pub translation: Vector3<T>,
    pub rigid_strength: T,
}

impl<T: Real> NodeTransform<T> {
    pub fn identity() -> Self {
        Self::rigid(Matrix3::identity(), Vector3::zeros())
    }

    /// Rigid motion with identity shear and `eta = 1`.
    pub fn rigid(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            shear: Matrix3::identity(),
            translation,
            rigid_strength: T::one(),
        }
    }

    pub fn with_rigid_strength(mut self, eta: T) -> Self {
        self.rigid_strength = eta;
        self
    }

    pub fn with_shear(mut self, shear: Matrix3<T>) -> Self {
        self.shear = shear;
        self
    }

    /// `R S_eff`.
    pub fn deformation_matrix(&self) -> Matrix3<T> {
        self.rotation * effective_shear(&self.shear, self.rigid_strength)
    }

    /// Composes the global rigid motion `x -> g_rot x + g_trans` after this
    /// transform.
    pub fn premultiply(&self, g_rot: &Matrix3<T>, g_trans: &Vector3<T>) -> Self {
        Self {
            rotation: g_rot * self.rotation,
            shear: self.shear,
            translation: g_rot * self.translation + g_trans,
            rigid_strength: self.rigid_strength,
        }
    }

    /// Checks orthonormality (1e-9), `det R = +1`, shear symmetry (1e-12)
    /// and `eta in [0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        if (r.transpose() * r - Matrix3::identity()).amax() > lit(1e-9) || (r.determinant() - T::one()).abs() > lit(1e-9) {
            return Err(Error::InvalidArgument("node rotation is not a proper rotation".into()));
        }
        if (self.shear - self.shear.transpose()).amax() > lit(1e-12) {
            return Err(Error::InvalidArgument("node shear is not symmetric".into()));
        }
        if !(self.rigid_strength >= T::zero() && self.rigid_strength <= T::one()) {
            return Err(Error::InvalidArgument("rigid strength outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// `(1 - eta) S + eta I`.
pub fn effective_shear<T: Real>(shear: &Matrix3<T>, eta: T) -> Matrix3<T> {
    shear * (T::one() - eta) + Matrix3::identity() * eta
}

/// Position of a node after its own transform: `R S_eff p + t`.
pub fn deform_node<T: Real>(p: &Vector3<T>, transform: &NodeTransform<T>) -> Vector3<T> {
    transform.deformation_matrix() * p + transform.translation
}

/// Deformed vertex with the local frame quantities used downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexDeformation<T: Real> {
    pub position: Vector3<T>,
    pub rotation: Matrix3<T>,
    pub shear: Matrix3<T>,
    pub rigid_strength: T,
}

/// Per-node quantities shared by every vertex the node influences.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PreparedNode<T: Real> {
    pub deformation: Matrix3<T>,
    pub effective_shear: Matrix3<T>,
    pub translation: Vector3<T>,
    pub eta: T,
    pub dq: DualQuaternion<T>,
    pub log_rotation: Vector3<T>,
}

impl<T: Real> PreparedNode<T> {
    pub fn new(t: &NodeTransform<T>) -> Self {
        let effective_shear = effective_shear(&t.shear, t.rigid_strength);
        Self {
            deformation: t.rotation * effective_shear,
            effective_shear,
            translation: t.translation,
            eta: t.rigid_strength,
            dq: DualQuaternion::from_rigid(&t.rotation, &t.translation),
            log_rotation: log_so3_clamped(&t.rotation),
        }
    }
}

/// Pivot for hemisphere alignment: largest weight, then lowest node id.
pub(crate) fn pivot_position<T: Real>(neighbors: &[usize], weights: &[T]) -> usize {
    let mut best = 0;
    for i in 1..weights.len() {
        if weights[i] > weights[best] || (weights[i] == weights[best] && neighbors[i] < neighbors[best]) {
            best = i;
        }
    }
    best
}

fn lbs_prepared<T: Real>(v: &Vector3<T>, weights: &[T], nodes: &[&PreparedNode<T>]) -> Vector3<T> {
    weights
        .iter()
        .zip(nodes)
        .fold(Vector3::zeros(), |acc, (&w, n)| acc + (n.deformation * v + n.translation) * w)
}

fn dqs_prepared<T: Real>(v: &Vector3<T>, neighbors: &[usize], weights: &[T], nodes: &[&PreparedNode<T>]) -> Result<Vector3<T>> {
    let items: Vec<_> = nodes.iter().map(|n| n.dq).collect();
    let blended = dq_blend(weights, &items, pivot_position(neighbors, weights))?;
    Ok(blended.apply(v))
}

fn ahs_prepared<T: Real>(
    v: &Vector3<T>,
    neighbors: &[usize],
    weights: &[T],
    nodes: &[&PreparedNode<T>],
    mode: SkinningMode,
) -> Result<VertexDeformation<T>> {
    let eta_v = weights.iter().zip(nodes).fold(T::zero(), |acc, (&w, n)| acc + w * n.eta);
    let position = match mode {
        SkinningMode::Lbs => lbs_prepared(v, weights, nodes),
        SkinningMode::Dqs => dqs_prepared(v, neighbors, weights, nodes)?,
        SkinningMode::Ahs => {
            let lbs = lbs_prepared(v, weights, nodes);
            let dqs = dqs_prepared(v, neighbors, weights, nodes)?;
            lbs * (T::one() - eta_v) + dqs * eta_v
        }
    };
    let rho = weights.iter().zip(nodes).fold(Vector3::zeros(), |acc, (&w, n)| acc + n.log_rotation * w);
    let shear = weights.iter().zip(nodes).fold(Matrix3::zeros(), |acc, (&w, n)| acc + n.effective_shear * w);
    Ok(VertexDeformation {
        position,
        rotation: exp_so3(&rho),
        shear,
        rigid_strength: eta_v,
    })
}

fn gather<'a, T: Real>(neighbors: &[usize], transforms: &'a [NodeTransform<T>]) -> Result<Vec<&'a NodeTransform<T>>> {
    neighbors
        .iter()
        .map(|&id| {
            transforms
                .get(id)
                .ok_or_else(|| Error::InvalidArgument(format!("node {id} has no transform ({} given)", transforms.len())))
        })
        .collect()
}

fn prepare_for<T: Real>(neighbors: &[usize], weights: &[T], transforms: &[NodeTransform<T>]) -> Result<Vec<PreparedNode<T>>> {
    if neighbors.len() != weights.len() || neighbors.is_empty() {
        return Err(Error::SizeMismatch {
            what: "neighbor weights",
            expected: neighbors.len(),
            actual: weights.len(),
        });
    }
    Ok(gather(neighbors, transforms)?.into_iter().map(PreparedNode::new).collect())
}

/// `sum_p w_p (R_p S_eff,p v + t_p)`.
pub fn lbs_vertex<T: Real>(v: &Vector3<T>, neighbors: &[usize], weights: &[T], transforms: &[NodeTransform<T>]) -> Result<Vector3<T>> {
    let prepared = prepare_for(neighbors, weights, transforms)?;
    let refs: Vec<_> = prepared.iter().collect();
    Ok(lbs_prepared(v, weights, &refs))
}

/// Blended unit dual quaternion of the neighbors' `(R_p, t_p)` applied to `v`.
pub fn dqs_vertex<T: Real>(v: &Vector3<T>, neighbors: &[usize], weights: &[T], transforms: &[NodeTransform<T>]) -> Result<Vector3<T>> {
    let prepared = prepare_for(neighbors, weights, transforms)?;
    let refs: Vec<_> = prepared.iter().collect();
    dqs_prepared(v, neighbors, weights, &refs)
}

/// Adaptive hybrid skinning of one vertex.
pub fn ahs_vertex<T: Real>(
    v: &Vector3<T>,
    neighbors: &[usize],
    weights: &[T],
    transforms: &[NodeTransform<T>],
) -> Result<VertexDeformation<T>> {
    let prepared = prepare_for(neighbors, weights, transforms)?;
    let refs: Vec<_> = prepared.iter().collect();
    ahs_prepared(v, neighbors, weights, &refs, SkinningMode::Ahs)
}

/// Result of skinning a whole mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformedMesh<T: Real> {
    pub positions: VertexField3<T>,
    pub rotations: VertexFieldMat<T>,
    pub shears: VertexFieldMat<T>,
    pub rigid_strength: Vec<T>,
}

/// Skins every vertex with `mode`. `R_v`, `S_v` and `eta_v` are blended the
/// same way in all modes; only the positions differ.
pub fn deform_mesh<T: Real>(
    mesh: &Mesh<T>,
    graph: &DeformationGraph<T>,
    transforms: &[NodeTransform<T>],
    mode: SkinningMode,
) -> Result<DeformedMesh<T>> {
    mesh.check_field_len("deformation graph", graph.vertex_count())?;
    if transforms.len() != graph.node_count() {
        return Err(Error::SizeMismatch {
            what: "node transforms",
            expected: graph.node_count(),
            actual: transforms.len(),
        });
    }
    for t in transforms {
        t.validate()?;
    }
    let prepared: Vec<_> = transforms.iter().map(PreparedNode::new).collect();
    let per_vertex: Vec<VertexDeformation<T>> = (0..mesh.vertex_count())
        .into_par_iter()
        .map(|v| {
            let (ids, ws) = graph.influence(v);
            let nodes: Vec<_> = ids.iter().map(|&id| &prepared[id]).collect();
            ahs_prepared(&mesh.vertices()[v], ids, ws, &nodes, mode)
        })
        .collect::<Result<_>>()?;

    let mut out = DeformedMesh {
        positions: Vec::with_capacity(per_vertex.len()),
        rotations: Vec::with_capacity(per_vertex.len()),
        shears: Vec::with_capacity(per_vertex.len()),
        rigid_strength: Vec::with_capacity(per_vertex.len()),
    };
    for d in per_vertex {
        out.positions.push(d.position);
        out.rotations.push(d.rotation);
        out.shears.push(d.shear);
        out.rigid_strength.push(d.rigid_strength);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, sample_control_nodes, Metric};
    use crate::primitives;
    use crate::rotation::exp_so3;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rot(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
        Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
    }

    fn candy(eta: f64) -> Vec<NodeTransform<f64>> {
        vec![
            NodeTransform::identity().with_rigid_strength(eta),
            NodeTransform::rigid(rot(Vector3::x(), PI), Vector3::zeros()).with_rigid_strength(eta),
        ]
    }

    fn random_transform(rng: &mut ChaCha8Rng) -> NodeTransform<f64> {
        let r = exp_so3(&Vector3::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0));
        let a = Matrix3::from_fn(|_, _| rng.random::<f64>() * 0.4 - 0.2);
        NodeTransform {
            rotation: r,
            shear: Matrix3::identity() + (a + a.transpose()) * 0.5,
            translation: Vector3::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0),
            rigid_strength: rng.random::<f64>(),
        }
    }

    #[test]
    fn effective_shear_examples() {
        let s = Matrix3::new(2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5);
        assert_eq!(effective_shear(&s, 1.0), Matrix3::identity());
        assert_eq!(effective_shear(&s, 0.0), s);
        let d = effective_shear(&(Matrix3::identity() * 2.0), 0.5);
        assert_eq!(d, Matrix3::identity() * 1.5);
    }

    #[test]
    fn deform_node_examples() {
        let p = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(deform_node(&p, &NodeTransform::identity()), p);
        let t = Vector3::new(0.5, -1.0, 2.0);
        assert_eq!(deform_node(&p, &NodeTransform::rigid(Matrix3::identity(), t)), p + t);
        let q = deform_node(&p, &NodeTransform::rigid(rot(Vector3::z(), PI / 2.0), Vector3::zeros()));
        assert!((q - Vector3::new(0.0, 1.0, 0.0)).amax() < 1e-15);
    }

    #[test]
    fn identity_and_uniform_rigid() {
        let v = Vector3::new(0.3, -0.2, 0.9);
        let ids = [0, 1, 2];
        let ws = [0.5, 0.3, 0.2];
        let ident = vec![NodeTransform::identity(); 3];
        assert!((lbs_vertex(&v, &ids, &ws, &ident).unwrap() - v).amax() < 1e-15);
        assert!((dqs_vertex(&v, &ids, &ws, &ident).unwrap() - v).amax() < 1e-15);

        let r = rot(Vector3::new(1.0, 2.0, 3.0), 0.7);
        let t = Vector3::new(1.0, -2.0, 0.5);
        let uniform = vec![NodeTransform::rigid(r, t); 3];
        let expected = r * v + t;
        assert!((lbs_vertex(&v, &ids, &ws, &uniform).unwrap() - expected).amax() < 1e-14);
        assert!((dqs_vertex(&v, &ids, &ws, &uniform).unwrap() - expected).amax() < 1e-14);
        assert!((ahs_vertex(&v, &ids, &ws, &uniform).unwrap().position - expected).amax() < 1e-14);
    }

    #[test]
    fn candy_wrapper() {
        let v = Vector3::new(0.0, 1.0, 0.0);
        let (ids, ws) = ([0, 1], [0.5, 0.5]);
        let lbs = lbs_vertex(&v, &ids, &ws, &candy(0.5)).unwrap();
        assert!(lbs.amax() < 1e-15, "LBS collapses onto the twist axis: {lbs:?}");
        let dqs = dqs_vertex(&v, &ids, &ws, &candy(0.5)).unwrap();
        assert!((dqs - Vector3::new(0.0, 0.0, 1.0)).amax() < 1e-15);
        let ahs = ahs_vertex(&v, &ids, &ws, &candy(0.5)).unwrap();
        assert!((ahs.position - Vector3::new(0.0, 0.0, 0.5)).amax() < 1e-15);
    }

    #[test]
    fn ahs_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let mut ts: Vec<_> = (0..4).map(|_| random_transform(&mut rng)).collect();
            let v = Vector3::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0);
            let ids = [0, 1, 2, 3];
            let mut ws: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let s: f64 = ws.iter().sum();
            ws.iter_mut().for_each(|w| *w /= s);

            ts.iter_mut().for_each(|t| t.rigid_strength = 0.0);
            let a = ahs_vertex(&v, &ids, &ws, &ts).unwrap();
            assert!((a.position - lbs_vertex(&v, &ids, &ws, &ts).unwrap()).amax() < 1e-12);

            ts.iter_mut().for_each(|t| t.rigid_strength = 1.0);
            let a = ahs_vertex(&v, &ids, &ws, &ts).unwrap();
            assert!((a.position - dqs_vertex(&v, &ids, &ws, &ts).unwrap()).amax() < 1e-12);
            assert!((a.shear - Matrix3::identity()).amax() < 1e-12);
        }
    }

    #[test]
    fn eta_v_is_convex_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..200 {
            let ts: Vec<_> = (0..4).map(|_| random_transform(&mut rng)).collect();
            let ws = [0.1, 0.2, 0.3, 0.4];
            let a = ahs_vertex(&Vector3::zeros(), &[0, 1, 2, 3], &ws, &ts).unwrap();
            let lo = ts.iter().map(|t| t.rigid_strength).fold(f64::INFINITY, f64::min);
            let hi = ts.iter().map(|t| t.rigid_strength).fold(f64::NEG_INFINITY, f64::max);
            assert!(a.rigid_strength >= lo - 1e-15 && a.rigid_strength <= hi + 1e-15);
        }
    }

    #[test]
    fn rigid_equivariance_of_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let ts: Vec<_> = (0..4).map(|_| random_transform(&mut rng)).collect();
            let g_rot = exp_so3(&Vector3::from_fn(|_, _| rng.random::<f64>() * 4.0 - 2.0));
            let g_t = Vector3::from_fn(|_, _| rng.random::<f64>() * 4.0 - 2.0);
            let moved: Vec<_> = ts.iter().map(|t| t.premultiply(&g_rot, &g_t)).collect();
            let v = Vector3::from_fn(|_, _| rng.random::<f64>() * 2.0 - 1.0);
            let (ids, ws) = ([0, 1, 2, 3], [0.4, 0.3, 0.2, 0.1]);
            let g = |x: Vector3<f64>| g_rot * x + g_t;
            assert!((lbs_vertex(&v, &ids, &ws, &moved).unwrap() - g(lbs_vertex(&v, &ids, &ws, &ts).unwrap())).amax() < 1e-9);
            assert!((dqs_vertex(&v, &ids, &ws, &moved).unwrap() - g(dqs_vertex(&v, &ids, &ws, &ts).unwrap())).amax() < 1e-9);
            assert!(
                (ahs_vertex(&v, &ids, &ws, &moved).unwrap().position - g(ahs_vertex(&v, &ids, &ws, &ts).unwrap().position)).amax()
                    < 1e-9
            );
        }
    }

    #[test]
    fn pivot_uses_node_id_on_ties() {
        assert_eq!(pivot_position(&[5, 2, 9], &[0.25, 0.5, 0.5]), 1);
        assert_eq!(pivot_position(&[7, 3], &[0.5, 0.5]), 1);
    }

    #[test]
    fn mesh_batch_matches_vertex_loop() {
        let m = primitives::uv_sphere::<f64>(12, 8, 1.0);
        let nodes = sample_control_nodes(&m, 16, 0).unwrap();
        let g = build_graph(&m, &nodes, 4, Metric::Geodesic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let ts: Vec<_> = (0..16).map(|_| random_transform(&mut rng)).collect();
        for mode in [SkinningMode::Lbs, SkinningMode::Dqs, SkinningMode::Ahs] {
            let d = deform_mesh(&m, &g, &ts, mode).unwrap();
            for v in 0..m.vertex_count() {
                let (ids, ws) = g.influence(v);
                let p = &m.vertices()[v];
                let expected = match mode {
                    SkinningMode::Lbs => lbs_vertex(p, ids, ws, &ts).unwrap(),
                    SkinningMode::Dqs => dqs_vertex(p, ids, ws, &ts).unwrap(),
                    SkinningMode::Ahs => ahs_vertex(p, ids, ws, &ts).unwrap().position,
                };
                assert_eq!(d.positions[v], expected);
                let full = ahs_vertex(p, ids, ws, &ts).unwrap();
                assert_eq!(d.rotations[v], full.rotation);
                assert_eq!(d.shears[v], full.shear);
                assert_eq!(d.rigid_strength[v], full.rigid_strength);
            }
        }
    }

    #[test]
    fn mesh_identity_and_rigid() {
        let m = primitives::uv_sphere::<f64>(10, 6, 1.0);
        let nodes = sample_control_nodes(&m, 8, 0).unwrap();
        let g = build_graph(&m, &nodes, 4, Metric::Geodesic).unwrap();
        let d = deform_mesh(&m, &g, &vec![NodeTransform::identity(); 8], SkinningMode::Ahs).unwrap();
        for (a, b) in d.positions.iter().zip(m.vertices()) {
            assert!((a - b).amax() < 1e-14);
        }
        assert!(d.rotations.iter().all(|r| (r - Matrix3::identity()).amax() < 1e-15));
        assert!(d.shears.iter().all(|s| (s - Matrix3::identity()).amax() < 1e-15));

        let r = rot(Vector3::new(-1.0, 0.5, 0.2), 1.1);
        let t = Vector3::new(0.3, 0.0, -0.7);
        for mode in [SkinningMode::Lbs, SkinningMode::Dqs, SkinningMode::Ahs] {
            let d = deform_mesh(&m, &g, &vec![NodeTransform::rigid(r, t).with_rigid_strength(0.3); 8], mode).unwrap();
            for (a, b) in d.positions.iter().zip(m.vertices()) {
                assert!((a - (r * b + t)).amax() < 1e-13);
            }
        }
    }

    #[test]
    fn mesh_errors() {
        let m = primitives::uv_sphere::<f64>(10, 6, 1.0);
        let nodes = sample_control_nodes(&m, 8, 0).unwrap();
        let g = build_graph(&m, &nodes, 4, Metric::Geodesic).unwrap();
        assert!(matches!(
            deform_mesh(&m, &g, &vec![NodeTransform::identity(); 7], SkinningMode::Ahs),
            Err(Error::SizeMismatch { expected: 8, actual: 7, .. })
        ));
        let mut bad = vec![NodeTransform::identity(); 8];
        bad[3].rigid_strength = 1.5;
        assert!(deform_mesh(&m, &g, &bad, SkinningMode::Lbs).is_err());
        assert!("xyz".parse::<SkinningMode>().is_err());
        assert_eq!("dqs".parse::<SkinningMode>().unwrap(), SkinningMode::Dqs);
    }

    #[test]
    fn f32_skinning_runs() {
        let m = primitives::uv_sphere::<f32>(10, 6, 1.0);
        let nodes = sample_control_nodes(&m, 8, 0).unwrap();
        let g = build_graph(&m, &nodes, 4, Metric::Geodesic).unwrap();
        let d = deform_mesh(&m, &g, &vec![NodeTransform::identity(); 8], SkinningMode::Ahs).unwrap();
        for (a, b) in d.positions.iter().zip(m.vertices()) {
            assert!((a - b).amax() < 1e-5);
        }
    }
}
