use crate::cadprog::{BooleanOp, CadProgram, ExtrudeBlock};
use crate::canonize::{canonical_block, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::V3;

use super::extrude::extrude_faces;
use super::mesh::TriMesh;
use super::sketch::validate_sketch;
use super::{Deflection, EPS_SURF};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Membership {
    Inside,
    Outside,
    OnBoundary,
}

impl Membership {
    fn union(self, other: Membership) -> Membership {
        use Membership::*;
        match (self, other) {
            (Inside, _) | (_, Inside) => Inside,
            (Outside, Outside) => Outside,
            _ => OnBoundary,
        }
    }

    fn difference(self, other: Membership) -> Membership {
        use Membership::*;
        match (self, other) {
            (Inside, Outside) => Inside,
            (Outside, _) | (_, Inside) => Outside,
            _ => OnBoundary,
        }
    }
}

/// Closest distance from `p` to triangle `abc`.
pub(crate) fn point_triangle_distance(p: V3, a: V3, b: V3, c: V3) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}

/// Signed solid angle subtended by triangle `abc` at `p`.
fn solid_angle(p: V3, a: V3, b: V3, c: V3) -> f64 {
    let (a, b, c) = (a - p, b - p, c - p);
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(&c));
    let den = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
    2.0 * num.atan2(den)
}

/// A closed block mesh with its boolean operation.
#[derive(Clone, Debug)]
pub struct BlockSolid {
    pub mesh: TriMesh,
    pub op: BooleanOp,
    lo: V3,
    hi: V3,
    tris: Vec<[V3; 3]>,
    tri_lo: Vec<V3>,
    tri_hi: Vec<V3>,
}

impl BlockSolid {
    pub fn new(mesh: TriMesh, op: BooleanOp) -> Result<Self> {
        if !mesh.is_closed() {
            return Err(Error::OpenMesh("block mesh has boundary edges".into()));
        }
        let (lo, hi) = mesh.bounds().expect("closed mesh has triangles");
        let tris: Vec<[V3; 3]> = (0..mesh.len()).map(|t| mesh.corners(t)).collect();
        let tri_lo = tris.iter().map(|[a, b, c]| a.inf(b).inf(c)).collect();
        let tri_hi = tris.iter().map(|[a, b, c]| a.sup(b).sup(c)).collect();
        Ok(BlockSolid { mesh, op, lo, hi, tris, tri_lo, tri_hi })
    }

    pub fn bounds(&self) -> (V3, V3) {
        (self.lo, self.hi)
    }

    /// Whether some triangle within `eps` of `p` faces the same way as `n`.
    pub fn has_parallel_face(&self, p: V3, n: V3, eps: f64) -> bool {
        let e = V3::repeat(eps);
        if (0..3).any(|k| p[k] < self.lo[k] - e[k] || p[k] > self.hi[k] + e[k]) {
            return false;
        }
        (0..self.mesh.len()).any(|t| {
            let [a, b, c] = self.mesh.corners(t);
            let av = self.mesh.area_vector(t);
            let len = av.norm();
            len > 0.0 && av.dot(&n) >= (1.0 - 1e-9) * len && point_triangle_distance(p, a, b, c) <= eps
        })
    }

    /// Winding-number classification with an `eps` boundary band.
    pub fn classify(&self, p: V3, eps: f64) -> Membership {
        let e = V3::repeat(eps);
        if p.zip_map(&(self.lo - e), |a, b| a < b).iter().any(|&x| x)
            || p.zip_map(&(self.hi + e), |a, b| a > b).iter().any(|&x| x)
        {
            return Membership::Outside;
        }
        let mut total = 0.0;
        for (t, &[a, b, c]) in self.tris.iter().enumerate() {
            let (tl, th) = (self.tri_lo[t] - e, self.tri_hi[t] + e);
            let near = (0..3).all(|k| p[k] >= tl[k] && p[k] <= th[k]);
            if near && point_triangle_distance(p, a, b, c) <= eps {
                return Membership::OnBoundary;
            }
            total += solid_angle(p, a, b, c);
        }
        if (total / (4.0 * std::f64::consts::PI)).abs() > 0.5 {
            Membership::Inside
        } else {
            Membership::Outside
        }
    }
}

/// All blocks of a program compiled to closed meshes, in program order.
#[derive(Clone, Debug)]
pub struct CompiledSolid {
    pub blocks: Vec<BlockSolid>,
}

impl CompiledSolid {
    /// Left-to-right fold of the block memberships.
    pub fn membership(&self, p: V3) -> Membership {
        self.membership_prefix(p, self.blocks.len())
    }

    pub fn membership_prefix(&self, p: V3, upto: usize) -> Membership {
        fold_membership(&self.blocks[..upto], p, EPS_SURF)
    }

    pub fn membership_with_band(&self, p: V3, eps: f64) -> Membership {
        fold_membership(&self.blocks, p, eps)
    }
}

fn fold_membership(blocks: &[BlockSolid], p: V3, eps: f64) -> Membership {
    let mut state = Membership::Outside;
    for b in blocks {
        let m = b.classify(p, eps);
        state = match b.op {
            BooleanOp::New => m,
            BooleanOp::Join => state.union(m),
            BooleanOp::Cut => state.difference(m),
        };
    }
    state
}

/// Classifies `p` against a sequence of closed block meshes.
pub fn point_membership(p: V3, blocks_prefix: &[(TriMesh, BooleanOp)]) -> Result<Membership> {
    let solids = blocks_prefix
        .iter()
        .map(|(m, op)| BlockSolid::new(m.clone(), *op))
        .collect::<Result<Vec<_>>>()?;
    Ok(fold_membership(&solids, p, EPS_SURF))
}

/// Tessellates one block in its canonical frame and loop order, so the
/// result does not depend on how the sketch was written down.
pub fn block_mesh(b: &ExtrudeBlock, defl: Deflection) -> Result<TriMesh> {
    let cb = canonical_block(b, DEFAULT_ALPHA, DEFAULT_BETA);
    let loops: Vec<_> = cb.loops.into_iter().map(|s| s.curves).collect();
    let faces = validate_sketch(&loops, defl)?;
    extrude_faces(&cb.plane, cb.depth, &faces, defl)
}

pub fn compile(p: &CadProgram, defl: Deflection) -> Result<CompiledSolid> {
    compile_with(p, defl, Execution::default())
}

pub fn compile_with(p: &CadProgram, defl: Deflection, exec: Execution) -> Result<CompiledSolid> {
    let blocks = exec
        .map(&p.blocks, |b| block_mesh(b, defl).and_then(|m| BlockSolid::new(m, b.op)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(CompiledSolid { blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cadprog::{Loop, SketchPlane};
    use crate::geom2d::v2;

    fn cube_at(x: f64, y: f64, z: f64, s: f64) -> TriMesh {
        let b = ExtrudeBlock {
            plane: SketchPlane {
                origin: V3::new(0.0, 0.0, z),
                ..SketchPlane::xy()
            },
            loops: vec![Loop::polygon_from_points(&[v2(x, y), v2(x + s, y), v2(x + s, y + s), v2(x, y + s)])],
            depth: s,
            op: BooleanOp::New,
        };
        block_mesh(&b, Deflection::default()).unwrap()
    }

    #[test]
    fn join_of_disjoint_cubes() {
        let blocks = [(cube_at(0., 0., 0., 1.), BooleanOp::New), (cube_at(3., 0., 0., 1.), BooleanOp::Join)];
        for p in [V3::new(0.5, 0.5, 0.5), V3::new(3.5, 0.5, 0.5)] {
            assert_eq!(point_membership(p, &blocks).unwrap(), Membership::Inside);
        }
        assert_eq!(point_membership(V3::new(2.0, 0.5, 0.5), &blocks).unwrap(), Membership::Outside);
    }

    #[test]
    fn cut_concentric_cube() {
        let blocks = [
            (cube_at(0., 0., 0., 3.), BooleanOp::New),
            (cube_at(1., 1., 1., 1.), BooleanOp::Cut),
        ];
        assert_eq!(point_membership(V3::new(1.5, 1.5, 1.5), &blocks).unwrap(), Membership::Outside);
        assert_eq!(point_membership(V3::new(0.5, 0.5, 0.5), &blocks).unwrap(), Membership::Inside);
    }

    #[test]
    fn tolerance_band() {
        let blocks = [(cube_at(0., 0., 0., 1.), BooleanOp::New)];
        let p = V3::new(0.5, 0.5, 1.0 + 1e-9);
        assert_eq!(point_membership(p, &blocks).unwrap(), Membership::OnBoundary);
        let q = V3::new(0.5, 0.5, 1.0 + 1e-3);
        assert_eq!(point_membership(q, &blocks).unwrap(), Membership::Outside);
    }

    #[test]
    fn open_mesh_rejected() {
        let mut m = cube_at(0., 0., 0., 1.);
        m.triangles.pop();
        m.face_primitive.pop();
        m.face_id.pop();
        assert!(matches!(
            point_membership(V3::zeros(), &[(m, BooleanOp::New)]),
            Err(Error::OpenMesh(_))
        ));
    }

    #[test]
    fn distance_oracle() {
        let (a, b, c) = (V3::zeros(), V3::x(), V3::y());
        assert!((point_triangle_distance(V3::new(0.2, 0.2, 0.5), a, b, c) - 0.5).abs() < 1e-15);
        assert!((point_triangle_distance(V3::new(2.0, 0.0, 0.0), a, b, c) - 1.0).abs() < 1e-15);
        let d = point_triangle_distance(V3::new(1.0, 1.0, 0.0), a, b, c);
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
