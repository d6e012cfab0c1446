//! Graph geodesics over the mesh edge graph (Dijkstra with Euclidean edge
//! lengths).
//!
//! Distances are accumulated outward from the source, one edge at a time, so
//! the value at a vertex is the left-to-right sum of the edge lengths along
//! its shortest path. Among equal distances the smaller source index wins.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::scalar::Real;

/// Weighted undirected adjacency.
#[derive(Debug, Clone)]
pub struct EdgeGraph<T: Real> {
    adjacency: Vec<Vec<(usize, T)>>,
}

impl<T: Real> EdgeGraph<T> {
    pub fn from_mesh(mesh: &Mesh<T>) -> Self {
        let mut adjacency = vec![Vec::new(); mesh.vertex_count()];
        for e in mesh.edges() {
            adjacency[e.v[0]].push((e.v[1], e.rest_length));
            adjacency[e.v[1]].push((e.v[0], e.rest_length));
        }
        for a in &mut adjacency {
            a.sort_by_key(|&(v, _)| v);
        }
        Self { adjacency }
    }

    /// Graph from explicit `(a, b, length)` edges; lengths must be positive.
    pub fn from_edges(vertex_count: usize, edges: &[(usize, usize, T)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); vertex_count];
        for &(a, b, l) in edges {
            for v in [a, b] {
                if v >= vertex_count {
                    return Err(Error::VertexOutOfRange { index: v, vertex_count });
                }
            }
            if !(l > T::zero()) {
                return Err(Error::ZeroLengthEdge { a, b });
            }
            adjacency[a].push((b, l));
            adjacency[b].push((a, l));
        }
        for a in &mut adjacency {
            a.sort_by_key(|&(v, _)| v);
        }
        Ok(Self { adjacency })
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, T)] {
        &self.adjacency[v]
    }
}

/// Per-vertex distance to the nearest source and which source that is.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicField<T: Real> {
    /// Unreachable vertices hold `+inf`.
    pub distance: Vec<T>,
    pub nearest: Vec<Option<usize>>,
}

#[derive(Clone, Copy)]
struct Entry<T> {
    dist: T,
    source: usize,
    vertex: usize,
}

impl<T: Real> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Real> Eq for Entry<T> {}
impl<T: Real> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Entry<T> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then(other.source.cmp(&self.source))
            .then(other.vertex.cmp(&self.vertex))
    }
}

#[inline]
fn better<T: Real>(d: T, s: usize, cur_d: T, cur_s: Option<usize>) -> bool {
    d < cur_d || (d == cur_d && cur_s.is_some_and(|c| s < c))
}

/// Multi-source Dijkstra on an [`EdgeGraph`].
pub fn multi_source_on_graph<T: Real>(graph: &EdgeGraph<T>, sources: &[usize]) -> Result<GeodesicField<T>> {
    if sources.is_empty() {
        return Err(Error::EmptySources);
    }
    let n = graph.vertex_count();
    let inf = T::one() / T::zero();
    let mut field = GeodesicField {
        distance: vec![inf; n],
        nearest: vec![None; n],
    };
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if s >= n {
            return Err(Error::VertexOutOfRange { index: s, vertex_count: n });
        }
        if field.nearest[s].is_none_or(|c| s < c) {
            field.distance[s] = T::zero();
            field.nearest[s] = Some(s);
            heap.push(Entry { dist: T::zero(), source: s, vertex: s });
        }
    }
    relax_from(graph, &mut field, heap);
    Ok(field)
}

fn relax_from<T: Real>(graph: &EdgeGraph<T>, field: &mut GeodesicField<T>, mut heap: BinaryHeap<Entry<T>>) {
    while let Some(Entry { dist, source, vertex }) = heap.pop() {
        if dist != field.distance[vertex] || field.nearest[vertex] != Some(source) {
            continue;
        }
        for &(w, len) in graph.neighbors(vertex) {
            let nd = dist + len;
            if better(nd, source, field.distance[w], field.nearest[w]) {
                field.distance[w] = nd;
                field.nearest[w] = Some(source);
                heap.push(Entry { dist: nd, source, vertex: w });
            }
        }
    }
}

/// Graph-geodesic distance from the nearest of `sources` to every vertex.
pub fn multi_source_geodesic<T: Real>(mesh: &Mesh<T>, sources: &[usize]) -> Result<GeodesicField<T>> {
    multi_source_on_graph(&EdgeGraph::from_mesh(mesh), sources)
}

/// Adds `source` to an existing field, lowering distances it improves.
///
/// Equivalent to recomputing [`multi_source_on_graph`] with the enlarged source
/// set, but only touches the region the new source captures.
pub fn add_source<T: Real>(graph: &EdgeGraph<T>, field: &mut GeodesicField<T>, source: usize) {
    if !better(T::zero(), source, field.distance[source], field.nearest[source]) {
        return;
    }
    field.distance[source] = T::zero();
    field.nearest[source] = Some(source);
    let mut heap = BinaryHeap::new();
    heap.push(Entry { dist: T::zero(), source, vertex: source });
    relax_from(graph, field, heap);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> EdgeGraph<f64> {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        EdgeGraph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn path_distances() {
        let f = multi_source_on_graph(&path(4), &[0]).unwrap();
        assert_eq!(f.distance, vec![0.0, 1.0, 2.0, 3.0]);
        assert!(f.nearest.iter().all(|&s| s == Some(0)));
    }

    #[test]
    fn all_sources() {
        let f = multi_source_on_graph(&path(5), &[0, 1, 2, 3, 4]).unwrap();
        assert!(f.distance.iter().all(|&d| d == 0.0));
        assert_eq!(f.nearest, (0..5).map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn ties_go_to_smaller_source() {
        // 0 - 1 - 2 : vertex 1 equidistant from 0 and 2
        let f = multi_source_on_graph(&path(3), &[2, 0]).unwrap();
        assert_eq!(f.nearest[1], Some(0));
    }

    #[test]
    fn unreachable_is_infinite() {
        let g = EdgeGraph::<f64>::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let f = multi_source_on_graph(&g, &[0]).unwrap();
        assert!(f.distance[2].is_infinite() && f.distance[3].is_infinite());
        assert_eq!(f.nearest[3], None);
    }

    #[test]
    fn empty_sources_rejected() {
        assert!(matches!(
            multi_source_on_graph(&path(3), &[]),
            Err(Error::EmptySources)
        ));
    }

    #[test]
    fn incremental_matches_batch() {
        let m = crate::primitives::uv_sphere::<f64>(10, 7, 1.0);
        let g = EdgeGraph::from_mesh(&m);
        let sources = [17, 3, 40, 3, 0];
        let mut inc = multi_source_on_graph(&g, &sources[..1]).unwrap();
        for &s in &sources[1..] {
            add_source(&g, &mut inc, s);
        }
        let batch = multi_source_on_graph(&g, &sources).unwrap();
        assert_eq!(inc, batch);
    }
}
