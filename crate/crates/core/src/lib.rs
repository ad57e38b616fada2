//! Discrete Canham-Helfrich energies on closed triangle meshes.
//!
//! Meshes carry curvature fields sampled at vertices; energies are sums of
//! per-vertex densities weighted by mixed Voronoi areas, plus line tension on
//! phase interfaces. The optimizer minimizes these under area, volume and
//! no-overlap constraints, and the diagnostics check the analytic bounds that
//! such energies satisfy.

pub mod constraints;
pub mod curvature;
pub mod density;
pub mod diagnostics;
pub mod energy;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod optimize;
pub mod shapes;

pub use constraints::{ConstraintSet, WeightedPoints};
pub use curvature::{curvature_field, CurvatureError, CurvatureField, Tensor3};
pub use density::MaterialParams;
pub use diagnostics::{VerificationReport, VerifyConfig};
pub use energy::{EnergyReport, PhaseField};
pub use mesh::{MeshError, TriMesh};
pub use optimize::{minimize, OptimizerRun, OptimizerState, RunConfig};
