use crate::cadprog::{CurveKind, ExtrudeBlock, SketchPlane};
use crate::error::Result;
use crate::geom2d::V2;

use super::mesh::{PrimitiveLabel, TriMesh};
use super::sketch::validate_sketch;
use super::tessellate::tessellate_sketch;
use super::Deflection;

/// Builds the closed prism of one block: bottom cap on the sketch plane,
/// top cap at `depth` along the normal, side walls in between.
///
/// Face ids: caps of face `f` are `2f` (bottom) and `2f + 1` (top); walls
/// follow at `2F + c` with `c` counting curves across the block's loops.
pub fn extrude_block(b: &ExtrudeBlock, defl: Deflection) -> Result<TriMesh> {
    let faces = validate_sketch(&b.loops, defl)?;
    extrude_faces(&b.plane, b.depth, &faces, defl)
}

pub(crate) fn extrude_faces(
    plane: &SketchPlane,
    depth: f64,
    faces: &[super::sketch::Face],
    defl: Deflection,
) -> Result<TriMesh> {
    let lift = plane.normal * depth;
    let nfaces = faces.len();
    let mut mesh = TriMesh::default();
    let mut wall_id = 2 * nfaces;
    for (f, face) in faces.iter().enumerate() {
        let tri = tessellate_sketch(face, defl)?;
        let base = mesh.vertices.len();
        let np = tri.points.len();
        let world = |p: &V2| plane.to_world(*p);
        mesh.vertices.extend(tri.points.iter().map(world));
        mesh.vertices.extend(tri.points.iter().map(|p| world(p) + lift));
        for t in &tri.triangles {
            mesh.triangles.push([base + t[0], base + t[2], base + t[1]]);
            mesh.face_primitive.push(PrimitiveLabel::PlanarCap);
            mesh.face_id.push(2 * f);
            mesh.triangles.push([base + np + t[0], base + np + t[1], base + np + t[2]]);
            mesh.face_primitive.push(PrimitiveLabel::PlanarCap);
            mesh.face_id.push(2 * f + 1);
        }
        let loops = std::iter::once(&face.outer).chain(&face.holes);
        for ((ring, src), lp) in tri.rings.iter().zip(&tri.ring_curves).zip(loops) {
            let n = ring.len();
            for k in 0..n {
                let a = base + ring[k];
                let b = base + ring[(k + 1) % n];
                let label = match lp.curves[src[k]].kind() {
                    CurveKind::Line => PrimitiveLabel::PlanarSide,
                    CurveKind::Arc | CurveKind::Circle => PrimitiveLabel::CylindricalSide,
                };
                let id = wall_id + src[k];
                mesh.triangles.push([a, b, b + np]);
                mesh.triangles.push([a, b + np, a + np]);
                mesh.face_primitive.extend([label, label]);
                mesh.face_id.extend([id, id]);
            }
            wall_id += lp.curves.len();
        }
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cadprog::{BooleanOp, Loop};
    use crate::geom2d::v2;
    use std::f64::consts::PI;

    fn block(loops: Vec<Loop>, depth: f64) -> ExtrudeBlock {
        ExtrudeBlock {
            plane: SketchPlane::xy(),
            loops,
            depth,
            op: BooleanOp::New,
        }
    }

    #[test]
    fn cube() {
        let sq = Loop::polygon_from_points(&[v2(0., 0.), v2(1., 0.), v2(1., 1.), v2(0., 1.)]);
        let m = extrude_block(&block(vec![sq], 1.0), Deflection::default()).unwrap();
        assert_eq!(m.len(), 12);
        assert!((m.volume() - 1.0).abs() < 1e-12);
        assert!(m.is_closed());
    }

    #[test]
    fn cylinder() {
        let m = extrude_block(&block(vec![Loop::circle(v2(0.0, 0.0), 1.0)], 2.0), Deflection::default()).unwrap();
        assert!((m.volume() - 2.0 * PI).abs() / (2.0 * PI) < 0.01);
        assert!(m.is_closed());
        assert!(m.face_primitive.contains(&PrimitiveLabel::CylindricalSide));
    }

    #[test]
    fn l_profile() {
        let pts = [v2(0., 0.), v2(2., 0.), v2(2., 0.5), v2(0.5, 0.5), v2(0.5, 2.), v2(0., 2.)];
        let area = crate::geom2d::signed_area(&pts);
        let m = extrude_block(&block(vec![Loop::polygon_from_points(&pts)], 1.0), Deflection::default()).unwrap();
        assert!((m.volume() - area).abs() / area < 0.01);
        assert!(m.is_closed());
    }

    #[test]
    fn plate_with_hole_is_closed() {
        let sq = Loop::polygon_from_points(&[v2(0., 0.), v2(2., 0.), v2(2., 2.), v2(0., 2.)]);
        let hole = Loop::circle(v2(1.0, 1.0), 0.5).reversed();
        let m = extrude_block(&block(vec![sq, hole], 0.5), Deflection::default()).unwrap();
        assert!(m.is_closed());
        let expect = (4.0 - PI * 0.25) * 0.5;
        assert!((m.volume() - expect).abs() / expect < 0.01);
    }
}
