//! Deformation graph: control nodes on the surface and the per-vertex
//! influence of the nearest ones.
//!
//! Each vertex is bound to its `k` nearest nodes. With `d_max` the distance
//! to the `(k+1)`-th nearest node, the raw influence of a neighbor at
//! distance `d` is `(1 - d / d_max)^2`, normalized over the `k` neighbors.
//! "Nearest" is measured along the surface (graph geodesics) by default; a
//! straight-line mode is kept for comparison.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geodesic::{self, EdgeGraph};
use crate::mesh::Mesh;
use crate::scalar::{lit, Real};

pub const DEFAULT_NODE_COUNT: usize = 1024;
pub const DEFAULT_NEIGHBOR_COUNT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Geodesic,
    Euclidean,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Geodesic => "geodesic",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geodesic" => Ok(Metric::Geodesic),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationGraph<T: Real> {
    nodes: Vec<usize>,
    metric: Metric,
    neighbor_count: usize,
    /// `vertex * neighbor_count + j`
    neighbors: Vec<usize>,
    weights: Vec<T>,
}

impl<T: Real> DeformationGraph<T> {
    /// Assembles a graph from explicit influences, checking the invariants
    /// (equal list lengths, node ids in range, no duplicates, nonnegative
    /// weights summing to one).
    pub fn from_parts(
        nodes: Vec<usize>,
        metric: Metric,
        neighbor_count: usize,
        neighbors: Vec<usize>,
        weights: Vec<T>,
    ) -> Result<Self> {
        if neighbor_count == 0 {
            return Err(Error::InvalidArgument("neighbor count must be positive".into()));
        }
        if neighbors.len() != weights.len() || neighbors.len() % neighbor_count != 0 {
            return Err(Error::Format("neighbor and weight lists differ in shape".into()));
        }
        let tol = lit::<T>(1e-9);
        for (v, (ids, ws)) in neighbors
            .chunks(neighbor_count)
            .zip(weights.chunks(neighbor_count))
            .enumerate()
        {
            for (j, &id) in ids.iter().enumerate() {
                if id >= nodes.len() {
                    return Err(Error::Format(format!("vertex {v} references node {id} of {}", nodes.len())));
                }
                if ids[..j].contains(&id) {
                    return Err(Error::Format(format!("vertex {v} lists node {id} twice")));
                }
            }
            let sum = ws.iter().fold(T::zero(), |a, &w| a + w);
            if ws.iter().any(|&w| !(w >= T::zero())) || (sum - T::one()).abs() > tol {
                return Err(Error::Format(format!("vertex {v} weights are not a partition of unity")));
            }
        }
        Ok(Self {
            nodes,
            metric,
            neighbor_count,
            neighbors,
            weights,
        })
    }

    /// Vertex ids of the control nodes; node `i` sits at `nodes()[i]`.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn neighbor_count(&self) -> usize {
        self.neighbor_count
    }

    pub fn vertex_count(&self) -> usize {
        self.neighbors.len() / self.neighbor_count
    }

    /// Node ids (nearest first) and normalized weights of vertex `v`.
    pub fn influence(&self, v: usize) -> (&[usize], &[T]) {
        let r = v * self.neighbor_count..(v + 1) * self.neighbor_count;
        (&self.neighbors[r.clone()], &self.weights[r])
    }
}

/// Clamps a requested node count to what the mesh can supply.
pub fn clamp_node_count(requested: usize, vertex_count: usize) -> usize {
    if requested > vertex_count {
        log::warn!("requested {requested} control nodes but the mesh has {vertex_count} vertices; using {vertex_count}");
        vertex_count
    } else {
        requested
    }
}

/// Farthest-point sampling under the graph-geodesic metric.
///
/// Starts at `seed_vertex`; each further node is the vertex farthest from all
/// chosen ones (smallest index on ties). Only vertices reachable from the
/// seed are eligible.
pub fn sample_control_nodes<T: Real>(mesh: &Mesh<T>, n_node: usize, seed_vertex: usize) -> Result<Vec<usize>> {
    let n = mesh.vertex_count();
    if n_node == 0 || n_node > n {
        return Err(Error::NodeCount {
            requested: n_node,
            available: n,
        });
    }
    if seed_vertex >= n {
        return Err(Error::VertexOutOfRange {
            index: seed_vertex,
            vertex_count: n,
        });
    }
    let graph = EdgeGraph::from_mesh(mesh);
    let mut field = geodesic::multi_source_on_graph(&graph, &[seed_vertex])?;
    let reachable = field.distance.iter().filter(|d| d.is_finite()).count();
    if n_node > reachable {
        return Err(Error::NodeCount {
            requested: n_node,
            available: reachable,
        });
    }

    let mut chosen = vec![false; n];
    chosen[seed_vertex] = true;
    let mut nodes = Vec::with_capacity(n_node);
    nodes.push(seed_vertex);
    while nodes.len() < n_node {
        let mut best: Option<(usize, T)> = None;
        for (v, &d) in field.distance.iter().enumerate() {
            if chosen[v] || !d.is_finite() {
                continue;
            }
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((v, d));
            }
        }
        let (v, _) = best.expect("reachable vertices remain");
        chosen[v] = true;
        nodes.push(v);
        geodesic::add_source(&graph, &mut field, v);
    }
    Ok(nodes)
}

/// Raw weights `(1 - d/d_max)^2`, normalized; uniform when they all vanish.
pub fn influence_weights<T: Real>(distances: &[T], d_max: T) -> Vec<T> {
    let raw: Vec<T> = distances
        .iter()
        .map(|&d| {
            if d_max > T::zero() {
                let r = (T::one() - d / d_max).max(T::zero());
                r * r
            } else {
                T::zero()
            }
        })
        .collect();
    let sum = raw.iter().fold(T::zero(), |a, &w| a + w);
    if sum > T::zero() {
        raw.into_iter().map(|w| w / sum).collect()
    } else {
        let u = T::one() / lit::<T>(distances.len() as f64);
        vec![u; distances.len()]
    }
}

/// Keeps the `k` smallest `(distance, node)` pairs in ascending order.
struct Nearest<T> {
    k: usize,
    items: Vec<(T, usize)>,
}

impl<T: Real> Nearest<T> {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, d: T, node: usize) {
        if !d.is_finite() {
            return;
        }
        let before = |&(bd, bn): &(T, usize)| bd < d || (bd == d && bn < node);
        let pos = self.items.partition_point(before);
        if pos < self.k {
            self.items.insert(pos, (d, node));
            self.items.truncate(self.k);
        }
    }
}

/// Binds every vertex to its `n_neighbor` nearest nodes.
///
/// `nodes` are vertex ids (typically from [`sample_control_nodes`]) and must
/// be distinct; at least `n_neighbor + 1` of them must be reachable from
/// every vertex.
pub fn build_graph<T: Real>(
    mesh: &Mesh<T>,
    nodes: &[usize],
    n_neighbor: usize,
    metric: Metric,
) -> Result<DeformationGraph<T>> {
    let n = mesh.vertex_count();
    if n_neighbor == 0 {
        return Err(Error::InvalidArgument("neighbor count must be positive".into()));
    }
    if nodes.len() < n_neighbor + 1 {
        return Err(Error::TooFewNodes {
            n_neighbor,
            nodes: nodes.len(),
        });
    }
    let mut seen = vec![false; n];
    for &p in nodes {
        if p >= n {
            return Err(Error::VertexOutOfRange { index: p, vertex_count: n });
        }
        if std::mem::replace(&mut seen[p], true) {
            return Err(Error::DuplicateNode { vertex: p });
        }
    }

    let k = n_neighbor + 1;
    let mut nearest: Vec<Nearest<T>> = (0..n).map(|_| Nearest::new(k)).collect();
    match metric {
        Metric::Geodesic => {
            let graph = EdgeGraph::from_mesh(mesh);
            for (node_id, &p) in nodes.iter().enumerate() {
                let field = geodesic::multi_source_on_graph(&graph, &[p])?;
                for (v, &d) in field.distance.iter().enumerate() {
                    nearest[v].offer(d, node_id);
                }
            }
        }
        Metric::Euclidean => {
            let pos = mesh.vertices();
            for (v, list) in nearest.iter_mut().enumerate() {
                for (node_id, &p) in nodes.iter().enumerate() {
                    list.offer((pos[v] - pos[p]).norm(), node_id);
                }
            }
        }
    }

    let mut neighbors = Vec::with_capacity(n * n_neighbor);
    let mut weights = Vec::with_capacity(n * n_neighbor);
    for (v, list) in nearest.into_iter().enumerate() {
        if list.items.len() < k {
            return Err(Error::UnreachableNodes {
                vertex: v,
                reachable: list.items.len(),
                required: k,
            });
        }
        let d_max = list.items[n_neighbor].0;
        let dists: Vec<T> = list.items[..n_neighbor].iter().map(|&(d, _)| d).collect();
        neighbors.extend(list.items[..n_neighbor].iter().map(|&(_, id)| id));
        weights.extend(influence_weights(&dists, d_max));
    }
    Ok(DeformationGraph {
        nodes: nodes.to_vec(),
        metric,
        neighbor_count: n_neighbor,
        neighbors,
        weights,
    })
}
