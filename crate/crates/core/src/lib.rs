//! Surface deformation with a geodesic deformation graph and adaptive hybrid
//! skinning (a per-node blend of linear and dual-quaternion skinning), flat
//! Gaussians bound to the mesh faces, ARAP and normal-consistency energies,
//! and a per-frame fitter that recovers node transforms from target
//! vertex positions.
//!
//! Everything numeric is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which is what the file formats in
//! [`io`] and the tolerances in the tests assume.

pub mod cotangent;
pub mod dual_quat;
pub mod energy;
pub mod error;
pub mod fitting;
pub mod gaussians;
pub mod geodesic;
pub mod graph;
pub mod io;
pub mod mesh;
pub mod obj;
pub mod primitives;
pub mod rotation;
pub mod scalar;
pub mod skinning;

pub use nalgebra;

pub use error::{Error, Result};
pub use graph::Metric;
pub use scalar::Real;
pub use skinning::SkinningMode;

pub type Mesh = mesh::Mesh<f64>;
pub type DeformationGraph = graph::DeformationGraph<f64>;
pub type NodeTransform = skinning::NodeTransform<f64>;
pub type DeformedMesh = skinning::DeformedMesh<f64>;
pub type SurfaceGaussian = gaussians::SurfaceGaussian<f64>;
pub type SurfaceGaussianSet = gaussians::SurfaceGaussianSet<f64>;
pub type EnergyReport = energy::EnergyReport<f64>;
pub type FitConfig = fitting::FitConfig<f64>;
pub type FrameParams = fitting::FrameParams<f64>;
pub type FitResult = fitting::FitResult<f64>;

pub type Mesh32 = mesh::Mesh<f32>;
pub type DeformationGraph32 = graph::DeformationGraph<f32>;
pub type NodeTransform32 = skinning::NodeTransform<f32>;
