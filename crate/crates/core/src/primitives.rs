//! Procedural meshes: planar grids, UV spheres, open cylinders and the
//! U-shaped strip used to compare geodesic and Euclidean neighbor selection.

use nalgebra::Vector3;

use crate::graph::DeformationGraph;
use crate::mesh::Mesh;
use crate::scalar::{lit, Real};

/// Planar grid of `nx * ny` cells in the xy-plane, `(nx+1)*(ny+1)` vertices
/// numbered row-major (`j * (nx+1) + i`). Each cell is split along its
/// `(i, j) - (i+1, j+1)` diagonal; normals point to +z.
pub fn grid<T: Real>(nx: usize, ny: usize, spacing: T) -> Mesh<T> {
    let vertices = (0..=ny)
        .flat_map(|j| {
            (0..=nx).map(move |i| Vector3::new(lit::<T>(i as f64) * spacing, lit::<T>(j as f64) * spacing, T::zero()))
        })
        .collect();
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut faces = Vec::with_capacity(nx * ny * 2);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    Mesh::new(vertices, faces).expect("grid is a valid mesh")
}

/// UV sphere centered at the origin with outward-facing triangles.
///
/// `segments` longitudes and `rings` latitude bands give
/// `2 + (rings - 1) * segments` vertices; `uv_sphere(24, 21, r)` has 482.
pub fn uv_sphere<T: Real>(segments: usize, rings: usize, radius: T) -> Mesh<T> {
    assert!(segments >= 3 && rings >= 2);
    let pi = std::f64::consts::PI;
    let mut vertices = vec![Vector3::new(T::zero(), T::zero(), radius)];
    for r in 1..rings {
        let theta = pi * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * pi * s as f64 / segments as f64;
            vertices.push(
                Vector3::new(
                    lit::<T>(theta.sin() * phi.cos()),
                    lit::<T>(theta.sin() * phi.sin()),
                    lit::<T>(theta.cos()),
                ) * radius,
            );
        }
    }
    vertices.push(Vector3::new(T::zero(), T::zero(), -radius));
    let south = vertices.len() - 1;
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + (s % segments);

    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b) = (ring(r, s), ring(r, s + 1));
            let (c, d) = (ring(r + 1, s), ring(r + 1, s + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    for s in 0..segments {
        faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    Mesh::new(vertices, faces).expect("sphere is a valid mesh")
}

/// Open cylinder of the given radius around the x-axis, spanning
/// `x in [-length/2, length/2]` with `stacks` bands of `segments` quads.
/// Vertex `k * segments + s` sits on ring `k` at angle `2 pi s / segments`
/// measured from +y toward +z.
pub fn cylinder<T: Real>(segments: usize, stacks: usize, radius: T, length: T) -> Mesh<T> {
    assert!(segments >= 3 && stacks >= 1);
    let pi = std::f64::consts::PI;
    let half = length * lit::<T>(0.5);
    let mut vertices = Vec::with_capacity((stacks + 1) * segments);
    for k in 0..=stacks {
        let x = -half + length * lit::<T>(k as f64 / stacks as f64);
        for s in 0..segments {
            let phi = 2.0 * pi * s as f64 / segments as f64;
            vertices.push(Vector3::new(x, radius * lit::<T>(phi.cos()), radius * lit::<T>(phi.sin())));
        }
    }
    let id = |k: usize, s: usize| k * segments + (s % segments);
    let mut faces = Vec::with_capacity(stacks * segments * 2);
    for k in 0..stacks {
        for s in 0..segments {
            let (a, b, c, d) = (id(k, s), id(k + 1, s), id(k + 1, s + 1), id(k, s + 1));
            faces.push([a, c, b]);
            faces.push([a, d, c]);
        }
    }
    Mesh::new(vertices, faces).expect("cylinder is a valid mesh")
}

/// Which part of a [`UStrip`] a vertex belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripRegion {
    ArmA,
    ArmB,
    /// The joining block plus the arm ends within `arm_width + gap` cells of
    /// it, where the surface path around the bend is genuinely short.
    Junction,
}

/// Two parallel arms joined at one end by a junction block, with a narrow
/// gap between the arms. Euclidean nearest neighbors jump the gap, surface
/// paths have to walk around through the junction.
#[derive(Debug, Clone)]
pub struct UStrip<T: Real> {
    pub mesh: Mesh<T>,
    pub regions: Vec<StripRegion>,
    pub gap: T,
    pub arm_length: T,
}

impl<T: Real> UStrip<T> {
    /// Number of (vertex, neighbor node) bindings that join opposite arms.
    pub fn cross_gap_assignments(&self, graph: &DeformationGraph<T>) -> usize {
        let nodes = graph.nodes();
        (0..graph.vertex_count())
            .map(|v| {
                let (ids, _) = graph.influence(v);
                ids.iter()
                    .filter(|&&id| {
                        matches!(
                            (self.regions[v], self.regions[nodes[id]]),
                            (StripRegion::ArmA, StripRegion::ArmB) | (StripRegion::ArmB, StripRegion::ArmA)
                        )
                    })
                    .count()
            })
            .sum()
    }
}

/// Builds a [`UStrip`] on a grid of `spacing`-sized cells.
///
/// Arm A occupies rows `[0, arm_width)`, arm B rows
/// `[arm_width + gap_cells, 2 * arm_width + gap_cells)`; both run along x for
/// `arm_cells` columns, followed by `junction_cells` columns spanning the full
/// height. The gap is therefore `gap_cells * spacing` wide and the arms
/// `arm_cells * spacing` long.
///
/// A pair of vertices on opposite arms (outside the junction region) is
/// close in space but far along the surface; binding one to a node on the
/// other is the "cross-gap" error geodesic neighbor selection avoids.
pub fn u_strip<T: Real>(
    arm_cells: usize,
    arm_width: usize,
    gap_cells: usize,
    junction_cells: usize,
    spacing: T,
) -> UStrip<T> {
    let nx = arm_cells + junction_cells;
    let ny = 2 * arm_width + gap_cells;
    let in_gap = |i: usize, j: usize| i < arm_cells && j >= arm_width && j < arm_width + gap_cells;
    let bend_start = arm_cells.saturating_sub(arm_width + gap_cells);

    let grid_id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut used = vec![false; (nx + 1) * (ny + 1)];
    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if in_gap(i, j) {
                continue;
            }
            let c = [grid_id(i, j), grid_id(i + 1, j), grid_id(i + 1, j + 1), grid_id(i, j + 1)];
            for &v in &c {
                used[v] = true;
            }
            cells.push(c);
        }
    }

    let mut remap = vec![usize::MAX; used.len()];
    let mut vertices = Vec::new();
    let mut regions = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let g = grid_id(i, j);
            if !used[g] {
                continue;
            }
            remap[g] = vertices.len();
            vertices.push(Vector3::new(lit::<T>(i as f64) * spacing, lit::<T>(j as f64) * spacing, T::zero()));
            regions.push(if i >= bend_start {
                StripRegion::Junction
            } else if j <= arm_width {
                StripRegion::ArmA
            } else {
                StripRegion::ArmB
            });
        }
    }
    let faces = cells
        .iter()
        .flat_map(|c| {
            let [a, b, cc, d] = c.map(|v| remap[v]);
            [[a, b, cc], [a, cc, d]]
        })
        .collect();
    UStrip {
        mesh: Mesh::new(vertices, faces).expect("strip is a valid mesh"),
        regions,
        gap: lit::<T>(gap_cells as f64) * spacing,
        arm_length: lit::<T>(arm_cells as f64) * spacing,
    }
}
