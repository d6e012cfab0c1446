//! File formats: deformation graphs, node-transform trajectories, Gaussian
//! sets and per-vertex rotations as JSON, objective traces as CSV.
//!
//! All of these are read and written in `f64`.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{FrameParams, NodeParams, TraceEntry};
use crate::gaussians::{SurfaceGaussian, SurfaceGaussianSet};
use crate::graph::DeformationGraph;
use crate::mesh::Mesh;
use crate::rotation::{exp_so3, log_so3};
use crate::skinning::NodeTransform;

fn to_json<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<usize>,
    metric: String,
    vertices: Vec<InfluenceRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InfluenceRecord {
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

pub fn graph_to_json(graph: &DeformationGraph<f64>) -> Result<String> {
    let vertices = (0..graph.vertex_count())
        .map(|v| {
            let (ids, ws) = graph.influence(v);
            InfluenceRecord {
                neighbors: ids.to_vec(),
                weights: ws.to_vec(),
            }
        })
        .collect();
    to_json(&GraphFile {
        nodes: graph.nodes().to_vec(),
        metric: graph.metric().to_string(),
        vertices,
    })
}

pub fn graph_from_json(text: &str) -> Result<DeformationGraph<f64>> {
    let file: GraphFile = serde_json::from_str(text)?;
    let k = file.vertices.first().map_or(0, |r| r.neighbors.len());
    if file.vertices.iter().any(|r| r.neighbors.len() != k || r.weights.len() != k) {
        return Err(Error::Format("graph vertices list differing neighbor counts".into()));
    }
    let neighbors = file.vertices.iter().flat_map(|r| r.neighbors.iter().copied()).collect();
    let weights = file.vertices.iter().flat_map(|r| r.weights.iter().copied()).collect();
    DeformationGraph::from_parts(file.nodes, file.metric.parse()?, k, neighbors, weights)
}

pub fn save_graph(path: &Path, graph: &DeformationGraph<f64>) -> Result<()> {
    Ok(fs::write(path, graph_to_json(graph)?)?)
}

/// Loads a graph and checks it against `mesh`.
pub fn load_graph(path: &Path, mesh: &Mesh<f64>) -> Result<DeformationGraph<f64>> {
    let graph = graph_from_json(&fs::read_to_string(path)?)?;
    mesh.check_field_len("graph vertices", graph.vertex_count())?;
    if let Some(&bad) = graph.nodes().iter().find(|&&n| n >= mesh.vertex_count()) {
        return Err(Error::VertexOutOfRange {
            index: bad,
            vertex_count: mesh.vertex_count(),
        });
    }
    Ok(graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct NodeRecord {
    rotvec: [f64; 3],
    shear6: [f64; 6],
    translation: [f64; 3],
    eta: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameRecord {
    time: f64,
    nodes: Vec<NodeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryFile {
    frames: Vec<FrameRecord>,
}

/// One frame of node transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFrame {
    pub time: f64,
    pub transforms: Vec<NodeTransform<f64>>,
}

/// Node transforms over time. Rotations are stored as rotation vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub frames: Vec<TrajectoryFrame>,
}

impl Trajectory {
    /// A single frame at time 0 with every node at identity.
    pub fn identity(node_count: usize) -> Self {
        Self {
            frames: vec![TrajectoryFrame {
                time: 0.0,
                transforms: vec![NodeTransform::identity(); node_count],
            }],
        }
    }

    /// Frames `k` at time `k` from fitted parameters.
    pub fn from_params(params: &[FrameParams<f64>]) -> Self {
        Self {
            frames: params
                .iter()
                .enumerate()
                .map(|(k, p)| TrajectoryFrame {
                    time: k as f64,
                    transforms: p.to_transforms(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let frames = self
            .frames
            .iter()
            .map(|f| FrameRecord {
                time: f.time,
                nodes: f
                    .transforms
                    .iter()
                    .map(|t| {
                        let p = NodeParams::from_transform(t);
                        NodeRecord {
                            rotvec: p.rotvec.into(),
                            shear6: p.shear6,
                            translation: t.translation.into(),
                            eta: t.rigid_strength,
                        }
                    })
                    .collect(),
            })
            .collect();
        to_json(&TrajectoryFile { frames })
    }

    /// Parses and validates every node transform.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: TrajectoryFile = serde_json::from_str(text)?;
        let frames = file
            .frames
            .into_iter()
            .enumerate()
            .map(|(k, f)| {
                let transforms = f
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(p, n)| {
                        let [xx, xy, xz, yy, yz, zz] = n.shear6;
                        let t = NodeTransform {
                            rotation: exp_so3(&Vector3::from(n.rotvec)),
                            shear: Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz),
                            translation: Vector3::from(n.translation),
                            rigid_strength: n.eta,
                        };
                        if !n.rotvec.iter().chain(&n.shear6).chain(&n.translation).all(|x| x.is_finite()) {
                            return Err(Error::Format(format!("frame {k} node {p}: non-finite value")));
                        }
                        t.validate().map_err(|e| Error::Format(format!("frame {k} node {p}: {e}")))?;
                        Ok(t)
                    })
                    .collect::<Result<_>>()?;
                Ok(TrajectoryFrame { time: f.time, transforms })
            })
            .collect::<Result<_>>()?;
        Ok(Self { frames })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GaussianRecord {
    face: usize,
    bary: [f64; 3],
    /// `[w, x, y, z]`
    quat: [f64; 4],
    scale: [f64; 3],
    payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GaussianFile {
    per_face: usize,
    gaussians: Vec<GaussianRecord>,
}

/// Serializes a Gaussian set, optionally with world-space centers.
pub fn gaussians_to_json(set: &SurfaceGaussianSet<f64>, centers: Option<&[Vector3<f64>]>) -> Result<String> {
    if let Some(c) = centers {
        if c.len() != set.len() {
            return Err(Error::SizeMismatch {
                what: "gaussian centers",
                expected: set.len(),
                actual: c.len(),
            });
        }
    }
    let gaussians = set
        .gaussians()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let q = g.rotation.quaternion();
            GaussianRecord {
                face: g.face,
                bary: g.barycentric,
                quat: [q.w, q.i, q.j, q.k],
                scale: g.scaling.into(),
                payload: BASE64.encode(&g.payload),
                center: centers.map(|c| c[i].into()),
            }
        })
        .collect();
    to_json(&GaussianFile {
        per_face: set.per_face(),
        gaussians,
    })
}

pub fn gaussians_from_json(text: &str, mesh: &Mesh<f64>) -> Result<SurfaceGaussianSet<f64>> {
    let file: GaussianFile = serde_json::from_str(text)?;
    let gaussians = file
        .gaussians
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let [w, x, y, z] = r.quat;
            Ok(SurfaceGaussian {
                face: r.face,
                barycentric: r.bary,
                rotation: UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z)),
                scaling: Vector3::from(r.scale),
                payload: BASE64
                    .decode(r.payload.as_bytes())
                    .map_err(|e| Error::Format(format!("gaussian {i}: payload: {e}")))?,
            })
        })
        .collect::<Result<_>>()?;
    SurfaceGaussianSet::from_parts(mesh, file.per_face, gaussians)
}

#[derive(Debug, Serialize, Deserialize)]
struct RotationFile {
    rotvecs: Vec<[f64; 3]>,
}

/// Per-vertex rotations as `{"rotvecs": [[x, y, z], ...]}`.
pub fn rotations_to_json(rotations: &[Matrix3<f64>]) -> Result<String> {
    to_json(&RotationFile {
        rotvecs: rotations.iter().map(|r| log_so3(r).into()).collect(),
    })
}

pub fn rotations_from_json(text: &str) -> Result<Vec<Matrix3<f64>>> {
    let file: RotationFile = serde_json::from_str(text)?;
    Ok(file.rotvecs.iter().map(|r| exp_so3(&Vector3::from(*r))).collect())
}

#[derive(Debug, Serialize)]
struct TraceRow {
    iter: usize,
    data: f64,
    arap: f64,
    nc: f64,
    total: f64,
}

/// Objective trace as CSV with header `iter,data,arap,nc,total`.
pub fn trace_to_csv(trace: &[TraceEntry<f64>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in trace {
        w.serialize(TraceRow {
            iter: e.iter,
            data: e.value.data,
            arap: e.value.arap,
            nc: e.value.nc,
            total: e.value.total,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
