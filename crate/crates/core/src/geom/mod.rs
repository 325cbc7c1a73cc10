//! Program-to-solid compiler: sketch validation, tessellation, extrusion,
//! membership-based CSG, boundary sampling and export.

mod boolean_mesh;
mod csg;
mod export;
mod extrude;
mod mesh;
mod sample;
mod sketch;
mod tessellate;

pub use boolean_mesh::{extract_mesh, extract_mesh_with};
pub use csg::{block_mesh, compile, compile_with, point_membership, BlockSolid, CompiledSolid, Membership};
pub use export::{export, mesh_to_obj, program_to_step, ExportKind};
pub use extrude::extrude_block;
pub use mesh::{PrimitiveLabel, TriMesh};
pub use sample::{sample_solid, sample_solid_with, SolidSample, DEFAULT_POINTS};
pub use sketch::{validate_sketch, Face};
pub use tessellate::{tessellate_sketch, Triangulation2D};

/// Boundary band used by membership classification.
pub const EPS_SURF: f64 = 1e-5;

/// Distance of the two-sided probes from a candidate boundary point; twice
/// the band so that neither probe is itself classified as on-boundary.
pub const PROBE_OFFSET: f64 = 2.0 * EPS_SURF;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Deflection {
    pub linear: f64,
    pub angular: f64,
}

impl Default for Deflection {
    fn default() -> Self {
        Deflection {
            linear: 0.001,
            angular: 0.1,
        }
    }
}
