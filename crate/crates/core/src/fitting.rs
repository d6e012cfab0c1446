//! Per-frame recovery of node transforms from target vertex positions.
//!
//! Each node carries 13 free parameters: a rotation vector, the six upper
//! entries of a symmetric shear, a translation and the logit of its rigid
//! strength. The objective is
//!
//! ```text
//! F = mean_v |x_v - y_v|^2 + lambda_arap E_arap(x, R) + lambda_nc E_nc(x)
//! ```
//!
//! with `x` skinned from the parameters and `R_v = exp(sum w_p r_p)`. Its
//! gradient is propagated by hand through the skinning equations, including
//! the dual-quaternion normalization, and minimized with a backtracking (Armijo)
//! line search along L-BFGS or steepest-descent directions.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix3, Quaternion, Vector3, Vector4};
use rayon::prelude::*;

use crate::energy::{ArapEnergy, NormalConsistency};
use crate::error::{Error, Result};
use crate::graph::DeformationGraph;
use crate::mesh::Mesh;
use crate::rotation::{exp_so3, exp_so3_jacobian, log_so3, quat_from_rotvec, quat_from_rotvec_jacobian};
use crate::scalar::{lit, logistic, logit, to_f64, Real};
use crate::skinning::{effective_shear, pivot_position, NodeTransform, SkinningMode};

pub const PARAMS_PER_NODE: usize = 13;

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-30;
const LBFGS_MEMORY: usize = 10;
const LM_INITIAL_DAMPING: f64 = 1e-3;
const LM_MIN_DAMPING: f64 = 1e-15;
const LM_MAX_DAMPING: f64 = 1e15;

/// Search direction of the line search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Descent {
    /// Steepest descent; the step carries over between iterations, doubled
    /// after each success.
    Gradient,
    /// Limited-memory BFGS direction tried at unit step, falling back to
    /// steepest descent when it is not a descent direction.
    #[default]
    Lbfgs,
    /// Damped Gauss-Newton step on the data term, solved densely. Suited to
    /// a few hundred nodes; regularizer curvature is left to the line search.
    LevenbergMarquardt,
}

impl fmt::Display for Descent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Descent::Gradient => "gradient",
            Descent::Lbfgs => "lbfgs",
            Descent::LevenbergMarquardt => "lm",
        })
    }
}

impl FromStr for Descent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(Descent::Gradient),
            "lbfgs" => Ok(Descent::Lbfgs),
            "lm" => Ok(Descent::LevenbergMarquardt),
            other => Err(Error::InvalidArgument(format!("unknown descent `{other}`"))),
        }
    }
}

/// Decoded parameters of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeParams<T: Real> {
    pub rotvec: Vector3<T>,
    /// `[xx, xy, xz, yy, yz, zz]`.
    pub shear6: [T; 6],
    pub translation: Vector3<T>,
    pub eta_logit: T,
}

impl<T: Real> NodeParams<T> {
    pub fn identity() -> Self {
        Self {
            rotvec: Vector3::zeros(),
            shear6: [T::one(), T::zero(), T::zero(), T::one(), T::zero(), T::one()],
            translation: Vector3::zeros(),
            eta_logit: T::zero(),
        }
    }

    pub fn shear(&self) -> Matrix3<T> {
        let [xx, xy, xz, yy, yz, zz] = self.shear6;
        Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
    }

    pub fn eta(&self) -> T {
        logistic(self.eta_logit)
    }

    pub fn to_transform(&self) -> NodeTransform<T> {
        NodeTransform {
            rotation: exp_so3(&self.rotvec),
            shear: self.shear(),
            translation: self.translation,
            rigid_strength: self.eta(),
        }
    }

    /// Inverse of [`to_transform`](Self::to_transform) up to the logit
    /// clamp; the shear is symmetrized.
    pub fn from_transform(t: &NodeTransform<T>) -> Self {
        let s = (t.shear + t.shear.transpose()) * lit::<T>(0.5);
        Self {
            rotvec: log_so3(&t.rotation),
            shear6: [s[(0, 0)], s[(0, 1)], s[(0, 2)], s[(1, 1)], s[(1, 2)], s[(2, 2)]],
            translation: t.translation,
            eta_logit: logit(t.rigid_strength),
        }
    }

    fn write(&self, out: &mut [T]) {
        out[0..3].copy_from_slice(self.rotvec.as_slice());
        out[3..9].copy_from_slice(&self.shear6);
        out[9..12].copy_from_slice(self.translation.as_slice());
        out[12] = self.eta_logit;
    }

    fn read(p: &[T]) -> Self {
        Self {
            rotvec: Vector3::new(p[0], p[1], p[2]),
            shear6: [p[3], p[4], p[5], p[6], p[7], p[8]],
            translation: Vector3::new(p[9], p[10], p[11]),
            eta_logit: p[12],
        }
    }
}

/// Flat parameter table, 13 values per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameParams<T: Real> {
    values: Vec<T>,
}

impl<T: Real> FrameParams<T> {
    pub fn identity(node_count: usize) -> Self {
        Self::from_nodes(&vec![NodeParams::identity(); node_count])
    }

    pub fn from_nodes(nodes: &[NodeParams<T>]) -> Self {
        let mut values = vec![T::zero(); nodes.len() * PARAMS_PER_NODE];
        for (n, chunk) in nodes.iter().zip(values.chunks_exact_mut(PARAMS_PER_NODE)) {
            n.write(chunk);
        }
        Self { values }
    }

    pub fn from_transforms(transforms: &[NodeTransform<T>]) -> Self {
        let nodes: Vec<_> = transforms.iter().map(NodeParams::from_transform).collect();
        Self::from_nodes(&nodes)
    }

    pub fn from_vec(values: Vec<T>) -> Result<Self> {
        if values.len() % PARAMS_PER_NODE != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} parameters is not a multiple of {PARAMS_PER_NODE}",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / PARAMS_PER_NODE
    }

    pub fn node(&self, p: usize) -> NodeParams<T> {
        NodeParams::read(&self.values[p * PARAMS_PER_NODE..(p + 1) * PARAMS_PER_NODE])
    }

    pub fn nodes(&self) -> Vec<NodeParams<T>> {
        (0..self.node_count()).map(|p| self.node(p)).collect()
    }

    pub fn set_node(&mut self, p: usize, node: &NodeParams<T>) {
        node.write(&mut self.values[p * PARAMS_PER_NODE..(p + 1) * PARAMS_PER_NODE]);
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn to_transforms(&self) -> Vec<NodeTransform<T>> {
        (0..self.node_count()).map(|p| self.node(p).to_transform()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig<T: Real> {
    pub lambda_arap: T,
    pub lambda_nc: T,
    pub max_iters: usize,
    /// Initial step along the negative gradient.
    pub step_size: T,
    /// Stop once the relative objective decrease of an iteration falls
    /// below this.
    pub convergence_tol: T,
    /// Stop once the gradient norm falls to this.
    pub gradient_tol: T,
    pub mode: SkinningMode,
    pub descent: Descent,
}

impl<T: Real> Default for FitConfig<T> {
    fn default() -> Self {
        Self {
            lambda_arap: lit(5.0),
            lambda_nc: lit(10.0),
            max_iters: 500,
            step_size: lit(1e-2),
            convergence_tol: lit(1e-8),
            gradient_tol: lit(1e-12),
            mode: SkinningMode::Ahs,
            descent: Descent::Lbfgs,
        }
    }
}

impl<T: Real> FitConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |x: T| x >= T::zero() && x.is_finite();
        if !nonneg(self.lambda_arap) || !nonneg(self.lambda_nc) {
            return Err(Error::InvalidArgument("energy weights must be finite and >= 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.step_size > T::zero()) || !self.step_size.is_finite() {
            return Err(Error::InvalidArgument("step_size must be positive".into()));
        }
        if !nonneg(self.convergence_tol) || !nonneg(self.gradient_tol) {
            return Err(Error::InvalidArgument("tolerances must be >= 0".into()));
        }
        Ok(())
    }
}

/// Objective broken down by term; `total` includes the weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue<T: Real> {
    pub data: T,
    pub arap: T,
    pub nc: T,
    pub total: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry<T: Real> {
    pub iter: usize,
    pub value: ObjectiveValue<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    RelativeDecrease,
    SmallGradient,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T: Real> {
    pub params: FrameParams<T>,
    /// Entry 0 is the initial point, then one per accepted step.
    pub trace: Vec<TraceEntry<T>>,
    pub stop: StopReason,
}

impl<T: Real> FitResult<T> {
    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

/// Per-node quantities computed once per evaluation.
struct NodeState<T: Real> {
    rotvec: Vector3<T>,
    rotation: Matrix3<T>,
    rotation_jac: [Matrix3<T>; 3],
    shear: Matrix3<T>,
    shear_eff: Matrix3<T>,
    deformation: Matrix3<T>,
    translation: Vector3<T>,
    eta: T,
    quat: Quaternion<T>,
    quat_jac: nalgebra::Matrix4x3<T>,
    dual: Quaternion<T>,
}

impl<T: Real> NodeState<T> {
    fn new(p: &NodeParams<T>) -> Self {
        let rotation = exp_so3(&p.rotvec);
        let shear = p.shear();
        let eta = p.eta();
        let shear_eff = effective_shear(&shear, eta);
        let quat = quat_from_rotvec(&p.rotvec);
        let dual = Quaternion::from_parts(T::zero(), p.translation) * quat * lit::<T>(0.5);
        Self {
            rotvec: p.rotvec,
            rotation,
            rotation_jac: exp_so3_jacobian(&p.rotvec),
            shear,
            shear_eff,
            deformation: rotation * shear_eff,
            translation: p.translation,
            eta,
            quat,
            quat_jac: quat_from_rotvec_jacobian(&p.rotvec),
            dual,
        }
    }
}

/// Forward quantities of one vertex kept for the backward pass.
struct VertexState<T: Real> {
    position: Vector3<T>,
    lbs: Vector3<T>,
    dqs: Vector3<T>,
    eta: T,
    signs: Vec<T>,
    blend_real: Quaternion<T>,
    blend_dual: Quaternion<T>,
    rho: Vector3<T>,
}

/// Gradient of `g . x` with respect to the unnormalized blend `(b, b_d)` for
/// `x = [vec(b v b*) + 2 vec(b_d b*)] / |b|^2`.
fn dqs_backward<T: Real>(
    v: &Vector3<T>,
    b: &Quaternion<T>,
    bd: &Quaternion<T>,
    x: &Vector3<T>,
    g: &Vector3<T>,
) -> (Quaternion<T>, Quaternion<T>) {
    let two = lit::<T>(2.0);
    let (w, u) = (b.w, b.imag());
    let (wd, ud) = (bd.w, bd.imag());
    let h = g / b.norm_squared();
    let hx = h.dot(x);
    let gw = (v * w + u.cross(v) + ud).dot(&h) * two - hx * two * w;
    let gu = (v * u.dot(&h) + h * u.dot(v) - u * h.dot(v) + v.cross(&h) * w - h * wd + ud.cross(&h) - u * hx) * two;
    let gwd = -h.dot(&u) * two;
    let gud = (h * w + h.cross(&u)) * two;
    (Quaternion::from_parts(gw, gu), Quaternion::from_parts(gwd, gud))
}

fn matrix_dot<T: Real>(a: &Matrix3<T>, b: &Matrix3<T>) -> T {
    a.component_mul(b).sum()
}

/// Skinning objective of one mesh, deformation graph and configuration.
pub struct Objective<'a, T: Real> {
    mesh: &'a Mesh<T>,
    graph: &'a DeformationGraph<T>,
    arap: ArapEnergy<T>,
    nc: NormalConsistency,
    cfg: FitConfig<T>,
}

impl<'a, T: Real> Objective<'a, T> {
    pub fn new(mesh: &'a Mesh<T>, graph: &'a DeformationGraph<T>, cfg: &FitConfig<T>) -> Result<Self> {
        cfg.validate()?;
        mesh.check_field_len("deformation graph", graph.vertex_count())?;
        Ok(Self {
            mesh,
            graph,
            arap: ArapEnergy::new(mesh)?,
            nc: NormalConsistency::new(mesh),
            cfg: *cfg,
        })
    }

    pub fn config(&self) -> &FitConfig<T> {
        &self.cfg
    }

    fn check(&self, params: &FrameParams<T>, targets: &[Vector3<T>]) -> Result<()> {
        if params.node_count() != self.graph.node_count() {
            return Err(Error::SizeMismatch {
                what: "node parameters",
                expected: self.graph.node_count(),
                actual: params.node_count(),
            });
        }
        self.mesh.check_field_len("targets", targets.len())
    }

    fn forward(&self, nodes: &[NodeState<T>]) -> Result<Vec<VertexState<T>>> {
        let mode = self.cfg.mode;
        (0..self.mesh.vertex_count())
            .into_par_iter()
            .map(|v| {
                let p = &self.mesh.vertices()[v];
                let (ids, ws) = self.graph.influence(v);
                let mut lbs = Vector3::zeros();
                let mut eta = T::zero();
                let mut rho = Vector3::zeros();
                for (&id, &w) in ids.iter().zip(ws) {
                    let n = &nodes[id];
                    lbs += (n.deformation * p + n.translation) * w;
                    eta += n.eta * w;
                    rho += n.rotvec * w;
                }
                let zero = Quaternion::new(T::zero(), T::zero(), T::zero(), T::zero());
                let (mut blend_real, mut blend_dual, mut dqs) = (zero, zero, Vector3::zeros());
                let mut signs = Vec::new();
                if mode != SkinningMode::Lbs {
                    let pivot = nodes[ids[pivot_position(ids, ws)]].quat;
                    for (&id, &w) in ids.iter().zip(ws) {
                        let n = &nodes[id];
                        let s = if n.quat.coords.dot(&pivot.coords) < T::zero() { -T::one() } else { T::one() };
                        signs.push(s);
                        blend_real += n.quat * (w * s);
                        blend_dual += n.dual * (w * s);
                    }
                    let n2 = blend_real.norm_squared();
                    if !(n2.sqrt() >= lit::<T>(crate::dual_quat::MIN_BLEND_NORM)) {
                        return Err(Error::AntipodalBlend);
                    }
                    let pq = Quaternion::from_parts(T::zero(), *p);
                    let conj = blend_real.conjugate();
                    dqs = ((blend_real * pq * conj).imag() + (blend_dual * conj).imag() * lit::<T>(2.0)) / n2;
                }
                let position = match mode {
                    SkinningMode::Lbs => lbs,
                    SkinningMode::Dqs => dqs,
                    SkinningMode::Ahs => lbs * (T::one() - eta) + dqs * eta,
                };
                Ok(VertexState {
                    position,
                    lbs,
                    dqs,
                    eta,
                    signs,
                    blend_real,
                    blend_dual,
                    rho,
                })
            })
            .collect()
    }

    fn node_states(&self, params: &FrameParams<T>) -> Vec<NodeState<T>> {
        params.nodes().iter().map(NodeState::new).collect()
    }

    fn energies(
        &self,
        verts: &[VertexState<T>],
        targets: &[Vector3<T>],
        need_gradient: bool,
    ) -> Result<(ObjectiveValue<T>, Vec<Vector3<T>>, Vec<Matrix3<T>>)> {
        let positions: Vec<_> = verts.iter().map(|s| s.position).collect();
        let count = lit::<T>(positions.len() as f64);
        let data = positions
            .iter()
            .zip(targets)
            .fold(T::zero(), |acc, (x, y)| acc + (x - y).norm_squared())
            / count;
        let use_arap = self.cfg.lambda_arap > T::zero();
        let use_nc = self.cfg.lambda_nc > T::zero();
        let rotations: Vec<_> = if use_arap { verts.iter().map(|s| exp_so3(&s.rho)).collect() } else { Vec::new() };
        let arap = if use_arap { Some(self.arap.evaluate(&positions, &rotations)?) } else { None };
        let nc = if use_nc { Some(self.nc.evaluate(&positions)?) } else { None };
        let arap_value = arap.as_ref().map_or(T::zero(), |r| r.value);
        let nc_value = nc.as_ref().map_or(T::zero(), |r| r.value);
        let value = ObjectiveValue {
            data,
            arap: arap_value,
            nc: nc_value,
            total: data + self.cfg.lambda_arap * arap_value + self.cfg.lambda_nc * nc_value,
        };
        if !value.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective is {} (data {}, arap {}, nc {})",
                to_f64(value.total),
                to_f64(data),
                to_f64(arap_value),
                to_f64(nc_value)
            )));
        }
        if !need_gradient {
            return Ok((value, Vec::new(), Vec::new()));
        }
        let two = lit::<T>(2.0);
        let mut grad_x: Vec<_> = positions.iter().zip(targets).map(|(x, y)| (x - y) * (two / count)).collect();
        if let Some(a) = &arap {
            for (g, ga) in grad_x.iter_mut().zip(&a.gradient) {
                *g += ga * self.cfg.lambda_arap;
            }
        }
        if let Some(n) = &nc {
            for (g, gn) in grad_x.iter_mut().zip(&n.gradient) {
                *g += gn * self.cfg.lambda_nc;
            }
        }
        let grad_r = if use_arap {
            self.arap
                .rotation_gradient(&positions, &rotations)?
                .into_iter()
                .map(|g| g * self.cfg.lambda_arap)
                .collect()
        } else {
            Vec::new()
        };
        Ok((value, grad_x, grad_r))
    }

    /// Objective value at `params`.
    pub fn value(&self, params: &FrameParams<T>, targets: &[Vector3<T>]) -> Result<ObjectiveValue<T>> {
        self.check(params, targets)?;
        let nodes = self.node_states(params);
        let verts = self.forward(&nodes)?;
        Ok(self.energies(&verts, targets, false)?.0)
    }

    /// Deformed positions at `params`, as the objective sees them.
    pub fn positions(&self, params: &FrameParams<T>) -> Result<Vec<Vector3<T>>> {
        if params.node_count() != self.graph.node_count() {
            return Err(Error::SizeMismatch {
                what: "node parameters",
                expected: self.graph.node_count(),
                actual: params.node_count(),
            });
        }
        let nodes = self.node_states(params);
        Ok(self.forward(&nodes)?.into_iter().map(|s| s.position).collect())
    }

    /// Backpropagates `g . x_v` (and `g_rho . rho_v` for the blended
    /// rotation vector) to the parameters of each neighbor node of `v`.
    fn vertex_backward(
        &self,
        nodes: &[NodeState<T>],
        v: usize,
        st: &VertexState<T>,
        g: &Vector3<T>,
        g_rho: &Vector3<T>,
    ) -> Vec<[T; PARAMS_PER_NODE]> {
        let mode = self.cfg.mode;
        let k = self.graph.neighbor_count();
        let p = &self.mesh.vertices()[v];
        let (ids, ws) = self.graph.influence(v);
        let g = *g;
        let (g_lbs, g_dqs, g_eta_v) = match mode {
            SkinningMode::Lbs => (g, Vector3::zeros(), T::zero()),
            SkinningMode::Dqs => (Vector3::zeros(), g, T::zero()),
            SkinningMode::Ahs => (g * (T::one() - st.eta), g * st.eta, g.dot(&(st.dqs - st.lbs))),
        };
        let (g_real, g_dual) = if mode == SkinningMode::Lbs {
            let zero = Quaternion::new(T::zero(), T::zero(), T::zero(), T::zero());
            (zero, zero)
        } else {
            dqs_backward(p, &st.blend_real, &st.blend_dual, &st.dqs, &g_dqs)
        };

        let mut out = Vec::with_capacity(k);
        for (j, (&id, &w)) in ids.iter().zip(ws).enumerate() {
            let n = &nodes[id];
            let mut c = [T::zero(); PARAMS_PER_NODE];
            let mut g_rot = g_rho * w;
            let mut g_eta = g_eta_v * w;
            let mut g_t = g_lbs * w;

            // LBS: w (R S_eff p + t)
            let g_a = g_lbs * p.transpose() * w;
            let g_r_mat = g_a * n.shear_eff.transpose();
            let g_s_eff = n.rotation.transpose() * g_a;
            for i in 0..3 {
                g_rot[i] += matrix_dot(&g_r_mat, &n.rotation_jac[i]);
            }
            let g_s = g_s_eff * (T::one() - n.eta);
            g_eta += matrix_dot(&g_s_eff, &(Matrix3::identity() - n.shear));

            // DQS: blend of sign-aligned (q, 1/2 (0, t) q)
            if mode != SkinningMode::Lbs {
                let s = st.signs[j] * w;
                let (gq_blend, gd) = (g_real * s, g_dual * s);
                let (qw, qv) = (n.quat.w, n.quat.imag());
                let (gdw, gdv) = (gd.w, gd.imag());
                let half = lit::<T>(0.5);
                g_t += (qv * -gdw + gdv * qw + qv.cross(&gdv)) * half;
                let gq = Vector4::new(
                    gq_blend.w + gdv.dot(&n.translation) * half,
                    T::zero(),
                    T::zero(),
                    T::zero(),
                );
                let gqv = gq_blend.imag() + (n.translation * -gdw + gdv.cross(&n.translation)) * half;
                let gq = Vector4::new(gq[0], gqv.x, gqv.y, gqv.z);
                g_rot += n.quat_jac.transpose() * gq;
            }

            c[0] = g_rot.x;
            c[1] = g_rot.y;
            c[2] = g_rot.z;
            c[3] = g_s[(0, 0)];
            c[4] = g_s[(0, 1)] + g_s[(1, 0)];
            c[5] = g_s[(0, 2)] + g_s[(2, 0)];
            c[6] = g_s[(1, 1)];
            c[7] = g_s[(1, 2)] + g_s[(2, 1)];
            c[8] = g_s[(2, 2)];
            c[9] = g_t.x;
            c[10] = g_t.y;
            c[11] = g_t.z;
            c[12] = g_eta * n.eta * (T::one() - n.eta);
            out.push(c);
        }
        out
    }

    /// Sums per (vertex, neighbor) parameter contributions into node slots,
    /// in vertex order.
    fn scatter(&self, per_vertex: &[Vec<[T; PARAMS_PER_NODE]>]) -> Vec<T> {
        let mut out = vec![T::zero(); self.graph.node_count() * PARAMS_PER_NODE];
        for (v, per) in per_vertex.iter().enumerate() {
            let (ids, _) = self.graph.influence(v);
            for (&id, c) in ids.iter().zip(per) {
                for (dst, &src) in out[id * PARAMS_PER_NODE..(id + 1) * PARAMS_PER_NODE].iter_mut().zip(c) {
                    *dst += src;
                }
            }
        }
        out
    }

    /// Gauss-Newton matrix `(2 / n) J^T J` of the data term, `J` being the
    /// Jacobian of all deformed positions with respect to the parameters.
    pub fn data_normal_matrix(&self, params: &FrameParams<T>) -> Result<DMatrix<T>> {
        if params.node_count() != self.graph.node_count() {
            return Err(Error::SizeMismatch {
                what: "frame parameters",
                expected: self.graph.node_count(),
                actual: params.node_count(),
            });
        }
        let nodes = self.node_states(params);
        let verts = self.forward(&nodes)?;
        let rows: Vec<[Vec<[T; PARAMS_PER_NODE]>; 3]> = (0..verts.len())
            .into_par_iter()
            .map(|v| {
                [0, 1, 2].map(|axis| {
                    let mut e = Vector3::zeros();
                    e[axis] = T::one();
                    self.vertex_backward(&nodes, v, &verts[v], &e, &Vector3::zeros())
                })
            })
            .collect();
        let n = params.as_slice().len();
        let scale = lit::<T>(2.0) / lit::<T>(verts.len() as f64);
        let mut h = DMatrix::zeros(n, n);
        for (v, per_axis) in rows.iter().enumerate() {
            let (ids, _) = self.graph.influence(v);
            for row in per_axis {
                for (&a, ca) in ids.iter().zip(row) {
                    for (&b, cb) in ids.iter().zip(row) {
                        for (i, &x) in ca.iter().enumerate() {
                            if x == T::zero() {
                                continue;
                            }
                            for (j, &y) in cb.iter().enumerate() {
                                h[(a * PARAMS_PER_NODE + i, b * PARAMS_PER_NODE + j)] += scale * x * y;
                            }
                        }
                    }
                }
            }
        }
        Ok(h)
    }

    /// Objective value and its gradient with respect to every parameter.
    pub fn value_and_gradient(&self, params: &FrameParams<T>, targets: &[Vector3<T>]) -> Result<(ObjectiveValue<T>, Vec<T>)> {
        self.check(params, targets)?;
        let nodes = self.node_states(params);
        let verts = self.forward(&nodes)?;
        let (value, grad_x, grad_r) = self.energies(&verts, targets, true)?;

        // Per (vertex, neighbor) contributions to that node's parameters,
        // summed afterwards in vertex order.
        let contributions: Vec<Vec<[T; PARAMS_PER_NODE]>> = (0..verts.len())
            .into_par_iter()
            .map(|v| {
                let g_rho = if grad_r.is_empty() {
                    Vector3::zeros()
                } else {
                    let jac = exp_so3_jacobian(&verts[v].rho);
                    Vector3::from_fn(|i, _| matrix_dot(&grad_r[v], &jac[i]))
                };
                self.vertex_backward(&nodes, v, &verts[v], &grad_x[v], &g_rho)
            })
            .collect();

        Ok((value, self.scatter(&contributions)))
    }
}

/// One-shot objective value and gradient.
pub fn objective<T: Real>(
    mesh: &Mesh<T>,
    graph: &DeformationGraph<T>,
    params: &FrameParams<T>,
    targets: &[Vector3<T>],
    cfg: &FitConfig<T>,
) -> Result<(ObjectiveValue<T>, Vec<T>)> {
    Objective::new(mesh, graph, cfg)?.value_and_gradient(params, targets)
}

/// Minimizes the objective from `init` with a backtracking line search.
///
/// A step `alpha d` is accepted once it decreases the objective by at least
/// `1e-4 * alpha * |grad . d|`, halving `alpha` until then, so the trace never
/// increases. Steps that make the objective undefined (for example by
/// collapsing a face) count as rejected. See [`Descent`] for the choice of
/// `d`.
pub fn fit_frame<T: Real>(
    mesh: &Mesh<T>,
    graph: &DeformationGraph<T>,
    targets: &[Vector3<T>],
    cfg: &FitConfig<T>,
    init: &FrameParams<T>,
) -> Result<FitResult<T>> {
    let obj = Objective::new(mesh, graph, cfg)?;
    fit_with(&obj, targets, init)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Limited-memory BFGS history.
struct History<T: Real> {
    pairs: VecDeque<(Vec<T>, Vec<T>, T)>,
}

impl<T: Real> History<T> {
    fn new() -> Self {
        Self { pairs: VecDeque::with_capacity(LBFGS_MEMORY) }
    }

    fn push(&mut self, s: Vec<T>, y: Vec<T>) {
        let sy = dot(&s, &y);
        // keep the implied Hessian positive definite
        if !(sy > lit::<T>(1e-12) * dot(&s, &s).sqrt() * dot(&y, &y).sqrt()) {
            return;
        }
        if self.pairs.len() == LBFGS_MEMORY {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, T::one() / sy));
    }

    /// `-H g` by the two-loop recursion, or `None` without history.
    fn direction(&self, g: &[T]) -> Option<Vec<T>> {
        let (s_last, y_last, _) = self.pairs.back()?;
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = *rho * dot(s, &q);
            for (qi, &yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = dot(s_last, y_last) / dot(y_last, y_last);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = *rho * dot(y, &q);
            for (qi, &si) in q.iter_mut().zip(s) {
                *qi += (*a - b) * si;
            }
        }
        Some(q.into_iter().map(|x| -x).collect())
    }
}

/// Solves `(H + mu h I) d = -g` with the data term's Gauss-Newton matrix
/// `H` and its largest diagonal entry `h`, raising `mu` until the system
/// factors.
fn damped_gauss_newton<T: Real>(
    obj: &Objective<'_, T>,
    x: &FrameParams<T>,
    g: &[T],
    damping: &mut T,
) -> Result<Option<Vec<T>>> {
    let h = obj.data_normal_matrix(x)?;
    let n = g.len();
    let largest = (0..n).fold(T::zero(), |m, i| m.max(h[(i, i)]));
    let scale = if largest > T::zero() { largest } else { T::one() };
    let rhs = DVector::from_iterator(n, g.iter().map(|&gi| -gi));
    while *damping <= lit(LM_MAX_DAMPING) {
        let mut a = h.clone();
        for i in 0..n {
            a[(i, i)] += *damping * scale;
        }
        if let Some(chol) = a.cholesky() {
            let d: Vec<T> = chol.solve(&rhs).iter().copied().collect();
            return Ok(Some(d).filter(|d| dot(d, g) < T::zero()));
        }
        *damping *= lit::<T>(10.0);
    }
    Ok(None)
}

/// [`fit_frame`] with a prepared [`Objective`].
pub fn fit_with<T: Real>(obj: &Objective<'_, T>, targets: &[Vector3<T>], init: &FrameParams<T>) -> Result<FitResult<T>> {
    let cfg = *obj.config();
    let mut x = init.clone();
    let (mut f, mut g) = obj.value_and_gradient(&x, targets)?;
    let mut trace = vec![TraceEntry { iter: 0, value: f }];
    let mut step = cfg.step_size;
    let armijo = lit::<T>(ARMIJO);
    let half = lit::<T>(0.5);
    let mut history = History::new();
    let mut damping = lit::<T>(LM_INITIAL_DAMPING);
    let mut stop = StopReason::MaxIterations;

    for iter in 1..=cfg.max_iters {
        if dot(&g, &g).sqrt() <= cfg.gradient_tol {
            stop = StopReason::SmallGradient;
            break;
        }
        let quasi_newton = match cfg.descent {
            Descent::Lbfgs => history.direction(&g).filter(|d| dot(d, &g) < T::zero()),
            Descent::LevenbergMarquardt => damped_gauss_newton(obj, &x, &g, &mut damping)?,
            Descent::Gradient => None,
        };
        let steepest = quasi_newton.is_none();
        let (direction, mut alpha) = match quasi_newton {
            Some(d) => (d, T::one()),
            None => (g.iter().map(|&gi| -gi).collect::<Vec<_>>(), step),
        };
        let slope = dot(&direction, &g);
        let accepted = loop {
            let mut trial = x.clone();
            for (t, &di) in trial.as_mut_slice().iter_mut().zip(&direction) {
                *t += di * alpha;
            }
            match obj.value(&trial, targets) {
                Ok(v) if v.total <= f.total + armijo * alpha * slope => break Some(trial),
                Ok(_) => {}
                Err(e) if e.is_numerical() => {}
                Err(e) => return Err(e),
            }
            alpha *= half;
            if alpha < lit::<T>(MIN_STEP) {
                break None;
            }
        };
        let Some(next) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        if steepest {
            step = alpha * lit::<T>(2.0);
        } else if cfg.descent == Descent::LevenbergMarquardt {
            damping = if alpha == T::one() {
                (damping * lit::<T>(0.1)).max(lit(LM_MIN_DAMPING))
            } else {
                (damping * lit::<T>(10.0)).min(lit(LM_MAX_DAMPING))
            };
        }
        let (f_new, g_new) = obj.value_and_gradient(&next, targets)?;
        let decrease = if f.total.abs() > T::zero() {
            (f.total - f_new.total) / f.total.abs()
        } else {
            T::zero()
        };
        if cfg.descent == Descent::Lbfgs {
            let s_k = next.as_slice().iter().zip(x.as_slice()).map(|(&a, &b)| a - b).collect();
            let y_k = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
            history.push(s_k, y_k);
        }
        x = next;
        f = f_new;
        g = g_new;
        trace.push(TraceEntry { iter, value: f });
        if decrease < cfg.convergence_tol {
            stop = StopReason::RelativeDecrease;
            break;
        }
    }
    log::debug!("fit stopped after {} iterations ({stop:?}), objective {}", trace.len() - 1, to_f64(f.total));
    Ok(FitResult { params: x, trace, stop })
}

/// Fits frames in order, each starting from the previous frame's result
/// (the first from identity).
pub fn fit_sequence<T: Real>(
    mesh: &Mesh<T>,
    graph: &DeformationGraph<T>,
    target_frames: &[Vec<Vector3<T>>],
    cfg: &FitConfig<T>,
) -> Result<Vec<FitResult<T>>> {
    if target_frames.is_empty() {
        return Err(Error::InvalidArgument("no target frames".into()));
    }
    let obj = Objective::new(mesh, graph, cfg)?;
    let mut init = FrameParams::identity(graph.node_count());
    let mut out = Vec::with_capacity(target_frames.len());
    for (k, targets) in target_frames.iter().enumerate() {
        let res = fit_with(&obj, targets, &init)?;
        log::info!(
            "frame {k}: {} iterations, objective {:.6e}",
            res.iterations(),
            to_f64(res.trace.last().expect("trace has the initial entry").value.total)
        );
        init = res.params.clone();
        out.push(res);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, sample_control_nodes, Metric};
    use crate::primitives;
    use crate::skinning::deform_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(nodes: usize) -> (Mesh<f64>, DeformationGraph<f64>) {
        let m = primitives::uv_sphere::<f64>(8, 7, 1.0);
        let ids = sample_control_nodes(&m, nodes, 0).unwrap();
        let g = build_graph(&m, &ids, 4, Metric::Geodesic).unwrap();
        (m, g)
    }

    fn random_params(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> FrameParams<f64> {
        let mut p = FrameParams::identity(n);
        for v in p.as_mut_slice() {
            *v += (rng.random::<f64>() - 0.5) * scale;
        }
        p
    }

    #[test]
    fn params_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(5, 0.5, &mut rng);
        let q = FrameParams::from_transforms(&p.to_transforms());
        for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(FrameParams::<f64>::from_vec(vec![0.0; 14]).is_err());
        let id = NodeParams::<f64>::identity().to_transform();
        assert_eq!(id.shear, Matrix3::identity());
        assert_eq!(id.rigid_strength, 0.5);
    }

    #[test]
    fn identity_objective_is_nc_only() {
        let (m, g) = setup(10);
        let cfg = FitConfig::default();
        let (v, _) = objective(&m, &g, &FrameParams::identity(10), m.vertices(), &cfg).unwrap();
        let nc_rest = crate::energy::normal_consistency(&m, m.vertices()).unwrap().value;
        assert!(v.data.abs() < 1e-28);
        assert!(v.arap.abs() < 1e-12);
        assert!((v.total - 10.0 * nc_rest).abs() < 1e-10);

        let t = Vector3::new(0.2, -0.1, 0.3);
        let mut p = FrameParams::identity(10);
        for i in 0..10 {
            let mut n = p.node(i);
            n.translation = t;
            p.set_node(i, &n);
        }
        let shifted: Vec<_> = m.vertices().iter().map(|x| x + t).collect();
        let (v, _) = objective(&m, &g, &p, &shifted, &cfg).unwrap();
        assert!(v.data < 1e-28 && v.arap.abs() < 1e-12);
        assert!((v.total - 10.0 * nc_rest).abs() < 1e-10);
    }

    #[test]
    fn positions_agree_with_skinning() {
        let (m, g) = setup(10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(10, 0.4, &mut rng);
        for mode in [SkinningMode::Lbs, SkinningMode::Dqs, SkinningMode::Ahs] {
            let cfg = FitConfig { mode, ..FitConfig::default() };
            let obj = Objective::new(&m, &g, &cfg).unwrap();
            let a = obj.positions(&p).unwrap();
            let b = deform_mesh(&m, &g, &p.to_transforms(), mode).unwrap().positions;
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (m, g) = setup(10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let targets: Vec<_> = m
            .vertices()
            .iter()
            .map(|v| v + Vector3::from_fn(|_, _| (rng.random::<f64>() - 0.5) * 0.1))
            .collect();
        for mode in [SkinningMode::Lbs, SkinningMode::Dqs, SkinningMode::Ahs] {
            let p = random_params(10, 0.3, &mut rng);
            let cfg = FitConfig { mode, ..FitConfig::default() };
            let obj = Objective::new(&m, &g, &cfg).unwrap();
            let (_, grad) = obj.value_and_gradient(&p, &targets).unwrap();
            let h = 1e-6;
            for i in 0..p.as_slice().len() {
                let mut q = p.clone();
                q.as_mut_slice()[i] += h;
                let up = obj.value(&q, &targets).unwrap().total;
                q.as_mut_slice()[i] -= 2.0 * h;
                let down = obj.value(&q, &targets).unwrap().total;
                let fd = (up - down) / (2.0 * h);
                let a = grad[i];
                assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6) < 1e-4, "{mode} param {i}: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn rest_targets_stay_at_identity() {
        let (m, g) = setup(10);
        let cfg = FitConfig { lambda_nc: 0.0, ..FitConfig::default() };
        let init = FrameParams::identity(10);
        let res = fit_frame(&m, &g, m.vertices(), &cfg, &init).unwrap();
        assert!(res.iterations() <= 2);
        assert_eq!(res.params, init);
    }

    #[test]
    fn trace_is_monotone() {
        let (m, g) = setup(10);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = random_params(10, 0.2, &mut rng);
        let targets = deform_mesh(&m, &g, &truth.to_transforms(), SkinningMode::Ahs).unwrap().positions;
        let cfg = FitConfig { max_iters: 60, ..FitConfig::default() };
        let res = fit_frame(&m, &g, &targets, &cfg, &FrameParams::identity(10)).unwrap();
        assert!(res.iterations() > 0);
        for w in res.trace.windows(2) {
            assert!(w[1].value.total <= w[0].value.total);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = FitConfig::<f64>::default();
        assert!(cfg.validate().is_ok());
        cfg.lambda_arap = -1.0;
        assert!(cfg.validate().is_err());
        let cfg = FitConfig::<f64> { max_iters: 0, ..FitConfig::default() };
        assert!(cfg.validate().is_err());
        let (m, g) = setup(10);
        assert!(fit_sequence(&m, &g, &[], &FitConfig::default()).is_err());
        assert!(objective(&m, &g, &FrameParams::identity(9), m.vertices(), &FitConfig::default()).is_err());
    }
}
