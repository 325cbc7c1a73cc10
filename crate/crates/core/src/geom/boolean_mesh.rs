//! Boundary mesh of the composed solid: block triangles are cut along the
//! other blocks' surfaces, fragments on the composite boundary are kept and
//! oriented outward, then everything is welded back together.

use crate::cadprog::CadProgram;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::V3;

use super::csg::compile_with;
use super::mesh::{PrimitiveLabel, TriMesh};
use super::sample::boundary_normal_with_band;
use super::Deflection;

const PLANE_EPS: f64 = 1e-10;
const WELD_TOL: f64 = 1e-9;
const MIN_AREA: f64 = 1e-12;
/// Fragments are already cut along every other surface, so they are
/// classified with a band far tighter than the sampling one.
const FRAGMENT_BAND: f64 = 1e-8;

struct Fragment {
    poly: Vec<V3>,
    normal: V3,
    label: PrimitiveLabel,
    face: usize,
}

fn poly_bounds(poly: &[V3]) -> (V3, V3) {
    poly.iter().fold((poly[0], poly[0]), |(lo, hi), p| (lo.inf(p), hi.sup(p)))
}

fn overlap(a: &(V3, V3), b: &(V3, V3), eps: f64) -> bool {
    (0..3).all(|k| a.0[k] <= b.1[k] + eps && b.0[k] <= a.1[k] + eps)
}

/// Splits a convex polygon by a plane; returns `None` when it does not
/// straddle the plane.
fn split(poly: &[V3], n: V3, d: f64) -> Option<(Vec<V3>, Vec<V3>)> {
    let s: Vec<f64> = poly.iter().map(|p| n.dot(p) - d).collect();
    if s.iter().all(|&x| x >= -PLANE_EPS) || s.iter().all(|&x| x <= PLANE_EPS) {
        return None;
    }
    let mut front = Vec::new();
    let mut back = Vec::new();
    let m = poly.len();
    for i in 0..m {
        let j = (i + 1) % m;
        let (p, q) = (poly[i], poly[j]);
        let (sp, sq) = (s[i], s[j]);
        if sp >= -PLANE_EPS {
            front.push(p);
        }
        if sp <= PLANE_EPS {
            back.push(p);
        }
        if (sp > PLANE_EPS && sq < -PLANE_EPS) || (sp < -PLANE_EPS && sq > PLANE_EPS) {
            let x = p + (q - p) * (sp / (sp - sq));
            front.push(x);
            back.push(x);
        }
    }
    if front.len() < 3 || back.len() < 3 {
        return None;
    }
    Some((front, back))
}

fn straddles(n: V3, d: f64, pts: &[V3]) -> bool {
    let mut pos = false;
    let mut neg = false;
    for p in pts {
        let s = n.dot(p) - d;
        pos |= s > PLANE_EPS;
        neg |= s < -PLANE_EPS;
    }
    pos && neg
}

fn touches(n: V3, d: f64, pts: &[V3]) -> bool {
    let s: Vec<f64> = pts.iter().map(|p| n.dot(p) - d).collect();
    !(s.iter().all(|&x| x > PLANE_EPS) || s.iter().all(|&x| x < -PLANE_EPS))
}

fn polygon_area(poly: &[V3]) -> f64 {
    let mut acc = V3::zeros();
    for i in 1..poly.len().saturating_sub(1) {
        acc += (poly[i] - poly[0]).cross(&(poly[i + 1] - poly[0]));
    }
    0.5 * acc.norm()
}

pub fn extract_mesh(p: &CadProgram, defl: Deflection) -> Result<TriMesh> {
    extract_mesh_with(p, defl, Execution::default())
}

pub fn extract_mesh_with(p: &CadProgram, defl: Deflection, exec: Execution) -> Result<TriMesh> {
    let solid = compile_with(p, defl, exec)?;
    let blocks = &solid.blocks;
    let mut face_base = Vec::with_capacity(blocks.len());
    let mut next_base = 0;
    for b in blocks {
        face_base.push(next_base);
        next_base += b.mesh.face_id.iter().max().map_or(0, |m| m + 1);
    }
    let tri_bounds: Vec<Vec<(V3, V3)>> = blocks
        .iter()
        .map(|b| (0..b.mesh.len()).map(|t| poly_bounds(&b.mesh.corners(t))).collect())
        .collect();
    let jobs: Vec<(usize, usize)> = blocks
        .iter()
        .enumerate()
        .flat_map(|(bi, b)| (0..b.mesh.len()).map(move |t| (bi, t)))
        .collect();
    let fragments: Vec<Vec<Fragment>> = exec.map(&jobs, |&(bi, t)| {
        let mesh = &blocks[bi].mesh;
        let corners = mesh.corners(t);
        let av = mesh.area_vector(t);
        if av.norm() == 0.0 {
            return Vec::new();
        }
        let normal = av.normalize();
        let plane_d = normal.dot(&corners[0]);
        let tb = tri_bounds[bi][t];
        let mut pieces = vec![corners.to_vec()];
        for (bj, other) in blocks.iter().enumerate() {
            if bj == bi || !overlap(&tb, &other.bounds(), 1e-9) {
                continue;
            }
            for u in 0..other.mesh.len() {
                if !overlap(&tb, &tri_bounds[bj][u], 1e-9) {
                    continue;
                }
                let uc = other.mesh.corners(u);
                let ua = other.mesh.area_vector(u);
                if ua.norm() == 0.0 {
                    continue;
                }
                let un = ua.normalize();
                let ud = un.dot(&uc[0]);
                if !straddles(un, ud, &corners) || !touches(normal, plane_d, &uc) {
                    continue;
                }
                let mut next = Vec::with_capacity(pieces.len() + 1);
                for piece in pieces {
                    match split(&piece, un, ud) {
                        Some((a, b)) => {
                            next.push(a);
                            next.push(b);
                        }
                        None => next.push(piece),
                    }
                }
                pieces = next;
            }
        }
        pieces
            .into_iter()
            .filter(|poly| polygon_area(poly) > MIN_AREA)
            .filter_map(|poly| {
                let c = poly.iter().sum::<V3>() / poly.len() as f64;
                let out = boundary_normal_with_band(&solid, c, normal, FRAGMENT_BAND, 2.0 * FRAGMENT_BAND)?;
                // Coincident faces of earlier blocks already cover this piece.
                if blocks[..bi].iter().any(|b| b.has_parallel_face(c, normal, WELD_TOL)) {
                    return None;
                }
                let poly = if out.dot(&normal) < 0.0 {
                    poly.into_iter().rev().collect()
                } else {
                    poly
                };
                Some(Fragment {
                    poly,
                    normal: out,
                    label: mesh.face_primitive[t],
                    face: face_base[bi] + mesh.face_id[t],
                })
            })
            .collect()
    });
    let fragments: Vec<Fragment> = fragments.into_iter().flatten().collect();
    if fragments.is_empty() {
        return Err(Error::EmptySolid);
    }
    Ok(stitch(&fragments))
}

/// Welds fragment corners, inserts T-junction vertices into edges, and
/// triangulates every polygon.
fn stitch(fragments: &[Fragment]) -> TriMesh {
    let mut corners: Vec<V3> = Vec::new();
    let mut polys: Vec<Vec<usize>> = Vec::with_capacity(fragments.len());
    for f in fragments {
        let base = corners.len();
        corners.extend_from_slice(&f.poly);
        polys.push((base..base + f.poly.len()).collect());
    }
    let mut remap = Vec::new();
    let welded_vertices = weld_points(&corners, &mut remap);
    let polys: Vec<Vec<usize>> = polys
        .into_iter()
        .map(|p| {
            let mut q: Vec<usize> = p.iter().map(|&i| remap[i]).collect();
            q.dedup();
            while q.len() > 1 && q.first() == q.last() {
                q.pop();
            }
            q
        })
        .collect();
    let mut order: Vec<usize> = (0..welded_vertices.len()).collect();
    order.sort_by(|&a, &b| welded_vertices[a].x.total_cmp(&welded_vertices[b].x));
    let xs: Vec<f64> = order.iter().map(|&i| welded_vertices[i].x).collect();

    let mut mesh = TriMesh {
        vertices: welded_vertices.clone(),
        ..TriMesh::default()
    };
    for (f, poly) in fragments.iter().zip(&polys) {
        if poly.len() < 3 {
            continue;
        }
        let mut ring = Vec::with_capacity(poly.len());
        for k in 0..poly.len() {
            let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
            ring.push(a);
            let (pa, pb) = (welded_vertices[a], welded_vertices[b]);
            let d = pb - pa;
            let len2 = d.norm_squared();
            if len2 == 0.0 {
                continue;
            }
            let lo = xs.partition_point(|&x| x < pa.x.min(pb.x) - WELD_TOL);
            let hi = xs.partition_point(|&x| x <= pa.x.max(pb.x) + WELD_TOL);
            let mut inserts: Vec<(f64, usize)> = Vec::new();
            for &w in &order[lo..hi] {
                if w == a || w == b {
                    continue;
                }
                let pw = welded_vertices[w];
                let s = (pw - pa).dot(&d) / len2;
                if s <= 0.0 || s >= 1.0 {
                    continue;
                }
                if (pa + d * s - pw).norm() <= WELD_TOL {
                    inserts.push((s, w));
                }
            }
            inserts.sort_by(|x, y| x.0.total_cmp(&y.0));
            ring.extend(inserts.into_iter().map(|(_, w)| w));
        }
        triangulate_ring(&mut mesh, &ring, f);
    }
    mesh
}

fn weld_points(points: &[V3], remap: &mut Vec<usize>) -> Vec<V3> {
    use std::collections::HashMap;
    let cell = |p: &V3| {
        (
            (p.x / WELD_TOL).floor() as i64,
            (p.y / WELD_TOL).floor() as i64,
            (p.z / WELD_TOL).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let mut out: Vec<V3> = Vec::new();
    remap.clear();
    for p in points {
        let c = cell(p);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        for &j in list {
                            if (out[j] - p).norm() <= WELD_TOL {
                                found = Some(j);
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        let j = found.unwrap_or_else(|| {
            out.push(*p);
            grid.entry(c).or_default().push(out.len() - 1);
            out.len() - 1
        });
        remap.push(j);
    }
    out
}

fn triangulate_ring(mesh: &mut TriMesh, ring: &[usize], f: &Fragment) {
    let n = ring.len();
    let v = |k: usize| mesh.vertices[ring[k % n]];
    let collinear = n > 3
        && (0..n).any(|k| {
            let (a, b, c) = (v(k), v(k + 1), v(k + 2));
            (b - a).cross(&(c - b)).norm() <= 1e-12 * (b - a).norm().max((c - b).norm()).max(1e-300)
        });
    let emit = |mesh: &mut TriMesh, t: [usize; 3]| {
        let [a, b, c] = t.map(|i| mesh.vertices[i]);
        let av = (b - a).cross(&(c - a));
        if 0.5 * av.norm() > MIN_AREA && av.dot(&f.normal) > 0.0 {
            mesh.triangles.push(t);
            mesh.face_primitive.push(f.label);
            mesh.face_id.push(f.face);
        }
    };
    if collinear {
        let c = ring.iter().map(|&i| mesh.vertices[i]).sum::<V3>() / n as f64;
        mesh.vertices.push(c);
        let ci = mesh.vertices.len() - 1;
        for k in 0..n {
            emit(mesh, [ci, ring[k], ring[(k + 1) % n]]);
        }
    } else {
        for k in 1..n - 1 {
            emit(mesh, [ring[0], ring[k], ring[k + 1]]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cadprog::parse_program;

    const CUBE: &str = r#"{"blocks":[{"plane":{"normal":[0,0,1],"origin":[0,0,0],"x_axis":[1,0,0]},
        "loops":[{"curves":[
            {"type":"line","start":[0,0],"end":[1,0]},
            {"type":"line","start":[1,0],"end":[1,1]},
            {"type":"line","start":[1,1],"end":[0,1]},
            {"type":"line","start":[0,1],"end":[0,0]}]}],
        "depth":1,"op":"new"}]}"#;

    #[test]
    fn cube_is_unchanged() {
        let m = extract_mesh(&parse_program(CUBE).unwrap(), Deflection::default()).unwrap();
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.len(), 12);
        assert!(m.is_closed());
        assert!((m.volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_square() {
        let sq = vec![V3::zeros(), V3::x(), V3::new(1.0, 1.0, 0.0), V3::y()];
        let (a, b) = split(&sq, V3::x(), 0.5).unwrap();
        assert!((polygon_area(&a) - 0.5).abs() < 1e-15);
        assert!((polygon_area(&b) - 0.5).abs() < 1e-15);
        assert!(split(&sq, V3::x(), 1.0).is_none());
    }
}
