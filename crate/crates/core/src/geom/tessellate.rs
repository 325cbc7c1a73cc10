use crate::error::{Error, Result};
use crate::geom2d::{self, V2};

use super::sketch::Face;
use super::Deflection;

/// Planar triangulation of a face.
#[derive(Clone, Debug, PartialEq)]
pub struct Triangulation2D {
    pub points: Vec<V2>,
    /// Counter-clockwise triangles.
    pub triangles: Vec<[usize; 3]>,
    /// Boundary rings as point indices: the outer ring first, then holes.
    pub rings: Vec<Vec<usize>>,
    /// For every ring edge `k → k+1`, the index of its source curve within
    /// that ring's loop.
    pub ring_curves: Vec<Vec<usize>>,
}

impl Triangulation2D {
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| 0.5 * geom2d::cross(self.points[t[1]] - self.points[t[0]], self.points[t[2]] - self.points[t[0]]))
            .sum()
    }
}

fn orient(a: V2, b: V2, c: V2) -> f64 {
    geom2d::cross(b - a, c - a)
}

fn in_triangle_closed(p: V2, a: V2, b: V2, c: V2) -> bool {
    let scale = (b - a).norm_squared().max((c - a).norm_squared()).max(1e-300);
    let eps = -1e-14 * scale;
    orient(a, b, p) >= eps && orient(b, c, p) >= eps && orient(c, a, p) >= eps
}

/// Whether `q` lies inside the interior wedge at vertex `r` of a
/// counter-clockwise polygon with neighbors `prev` and `next`.
fn in_wedge(prev: V2, r: V2, next: V2, q: V2) -> bool {
    let left_in = orient(prev, r, q) > 0.0;
    let left_out = orient(r, next, q) > 0.0;
    if orient(prev, r, next) >= 0.0 {
        left_in && left_out
    } else {
        left_in || left_out
    }
}

/// Splices `hole` (clockwise) into `poly` (counter-clockwise) through a
/// mutually visible vertex pair.
fn bridge(points: &[V2], poly: &mut Vec<usize>, hole: &[usize]) -> Result<()> {
    let (m_pos, _) = hole
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| points[**a].x.total_cmp(&points[**b].x))
        .expect("non-empty hole");
    let m = points[hole[m_pos]];
    let n = poly.len();
    let mut best: Option<(f64, usize)> = None;
    for i in 0..n {
        let a = points[poly[i]];
        let b = points[poly[(i + 1) % n]];
        if (a.y > m.y) == (b.y > m.y) && a.y != m.y && b.y != m.y {
            continue;
        }
        let x = if a.y == b.y {
            if a.y != m.y {
                continue;
            }
            let lo = a.x.min(b.x);
            if lo < m.x { a.x.max(b.x) } else { lo }
        } else {
            a.x + (m.y - a.y) * (b.x - a.x) / (b.y - a.y)
        };
        if x >= m.x && best.is_none_or(|(bx, _)| x < bx) {
            best = Some((x, i));
        }
    }
    let (ix, edge) = best.ok_or_else(|| Error::Tessellation("hole lies outside its outer loop".into()))?;
    let hit = geom2d::v2(ix, m.y);
    let (ea, eb) = (edge, (edge + 1) % n);
    let mut p_pos = if points[poly[ea]].x >= points[poly[eb]].x { ea } else { eb };
    if (points[poly[ea]] - hit).norm() <= 1e-14 {
        p_pos = ea;
    } else if (points[poly[eb]] - hit).norm() <= 1e-14 {
        p_pos = eb;
    } else {
        let p = points[poly[p_pos]];
        let (t0, t1, t2) = if orient(m, hit, p) >= 0.0 { (m, hit, p) } else { (m, p, hit) };
        let mut best_r: Option<(f64, f64, usize)> = None;
        for k in 0..n {
            if k == p_pos {
                continue;
            }
            let prev = points[poly[(k + n - 1) % n]];
            let r = points[poly[k]];
            let next = points[poly[(k + 1) % n]];
            if r == p || orient(prev, r, next) >= 0.0 || !in_triangle_closed(r, t0, t1, t2) {
                continue;
            }
            let d = r - m;
            let angle = d.y.atan2(d.x).abs();
            let dist = d.norm();
            if best_r.is_none_or(|(a, dd, _)| angle < a || (angle == a && dist < dd)) {
                best_r = Some((angle, dist, k));
            }
        }
        if let Some((_, _, k)) = best_r {
            p_pos = k;
        }
    }
    // Among duplicates of the chosen vertex, take the one whose wedge sees M.
    let target = points[poly[p_pos]];
    for k in 0..n {
        if points[poly[k]] == target {
            let prev = points[poly[(k + n - 1) % n]];
            let next = points[poly[(k + 1) % n]];
            if in_wedge(prev, target, next, m) {
                p_pos = k;
                break;
            }
        }
    }
    let mut spliced = Vec::with_capacity(n + hole.len() + 2);
    spliced.extend_from_slice(&poly[..=p_pos]);
    for k in 0..=hole.len() {
        spliced.push(hole[(m_pos + k) % hole.len()]);
    }
    spliced.push(poly[p_pos]);
    spliced.extend_from_slice(&poly[p_pos + 1..]);
    *poly = spliced;
    Ok(())
}

fn ear_clip(points: &[V2], poly: &[usize]) -> Result<Vec<[usize; 3]>> {
    let n = poly.len();
    let mut prev: Vec<usize> = (0..n).map(|i| (i + n - 1) % n).collect();
    let mut next: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    let mut alive = vec![true; n];
    let mut out = Vec::with_capacity(n.saturating_sub(2));
    let mut remaining = n;
    let mut i = 0;
    let mut misses = 0;
    let pt = |k: usize| points[poly[k]];
    let is_ear = |pv: usize, k: usize, nx: usize, alive: &[bool]| -> bool {
        let (a, b, c) = (pt(pv), pt(k), pt(nx));
        let scale = (b - a).norm_squared().max((c - b).norm_squared());
        if orient(a, b, c) <= 1e-14 * scale {
            return false;
        }
        for j in 0..n {
            if !alive[j] || j == pv || j == k || j == nx {
                continue;
            }
            let q = pt(j);
            if q == a || q == b || q == c {
                continue;
            }
            if in_triangle_closed(q, a, b, c) {
                return false;
            }
        }
        true
    };
    while remaining > 3 {
        let (pv, nx) = (prev[i], next[i]);
        let mut clip = is_ear(pv, i, nx, &alive);
        if !clip && misses > remaining {
            // No strict ear: clip the most convex vertex to make progress.
            let mut best: Option<(f64, usize)> = None;
            let mut k = i;
            for _ in 0..remaining {
                let o = orient(pt(prev[k]), pt(k), pt(next[k]));
                if o > 0.0 && best.is_none_or(|(bo, _)| o > bo) {
                    best = Some((o, k));
                }
                k = next[k];
            }
            match best {
                Some((_, k)) => {
                    i = k;
                    clip = true;
                }
                None => break,
            }
        }
        if clip {
            let (pv, nx) = (prev[i], next[i]);
            out.push([poly[pv], poly[i], poly[nx]]);
            alive[i] = false;
            next[pv] = nx;
            prev[nx] = pv;
            remaining -= 1;
            misses = 0;
            i = pv;
        } else {
            misses += 1;
            i = nx;
        }
    }
    if remaining == 3 {
        let (pv, nx) = (prev[i], next[i]);
        if orient(pt(pv), pt(i), pt(nx)) > 0.0 {
            out.push([poly[pv], poly[i], poly[nx]]);
        }
    }
    Ok(out)
}

/// Discretizes the face boundary within the deflection bounds and
/// triangulates the polygon with holes by ear clipping.
pub fn tessellate_sketch(face: &Face, defl: Deflection) -> Result<Triangulation2D> {
    let mut points = Vec::new();
    let mut rings = Vec::new();
    let mut ring_curves = Vec::new();
    for l in std::iter::once(&face.outer).chain(&face.holes) {
        let (pts, src) = l.polygon(defl.linear, defl.angular);
        let base = points.len();
        rings.push((base..base + pts.len()).collect::<Vec<_>>());
        ring_curves.push(src);
        points.extend(pts);
    }
    let mut poly = rings[0].clone();
    let mut holes: Vec<&Vec<usize>> = rings[1..].iter().collect();
    holes.sort_by(|a, b| {
        let mx = |r: &Vec<usize>| r.iter().map(|&i| points[i].x).fold(f64::NEG_INFINITY, f64::max);
        mx(b).total_cmp(&mx(a))
    });
    for h in holes {
        bridge(&points, &mut poly, h)?;
    }
    let triangles = ear_clip(&points, &poly)?;
    let tri = Triangulation2D {
        points,
        triangles,
        rings,
        ring_curves,
    };
    let expected: f64 = tri
        .rings
        .iter()
        .map(|r| geom2d::signed_area(&r.iter().map(|&i| tri.points[i]).collect::<Vec<_>>()))
        .sum();
    let got = tri.area();
    if !(expected > 0.0) || (got - expected).abs() > 1e-9 * expected.abs().max(1.0) {
        return Err(Error::Tessellation(format!(
            "triangulated area {got:.9} differs from polygon area {expected:.9}"
        )));
    }
    Ok(tri)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cadprog::Loop;
    use crate::geom2d::v2;
    use std::f64::consts::PI;

    fn face(outer: Loop, holes: Vec<Loop>) -> Face {
        Face { outer, holes }
    }

    fn square(x: f64, y: f64, s: f64) -> Loop {
        Loop::polygon_from_points(&[v2(x, y), v2(x + s, y), v2(x + s, y + s), v2(x, y + s)])
    }

    #[test]
    fn unit_square_two_triangles() {
        let t = tessellate_sketch(&face(square(0.0, 0.0, 1.0), vec![]), Deflection::default()).unwrap();
        assert_eq!(t.triangles.len(), 2);
        assert!((t.area() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unit_circle() {
        let t = tessellate_sketch(&face(Loop::circle(v2(0.0, 0.0), 1.0), vec![]), Deflection::default()).unwrap();
        assert!(t.rings[0].len() >= 63);
        assert!((t.area() - PI).abs() / PI < 0.005);
        for w in 0..t.rings[0].len() {
            let a = t.points[t.rings[0][w]];
            let b = t.points[t.rings[0][(w + 1) % t.rings[0].len()]];
            let sagitta = 1.0 - ((a + b) * 0.5).norm();
            assert!(sagitta <= 0.001 + 1e-12);
        }
    }

    #[test]
    fn square_with_square_hole() {
        let t = tessellate_sketch(
            &face(square(0.0, 0.0, 3.0), vec![square(1.0, 1.0, 1.0).reversed()]),
            Deflection::default(),
        )
        .unwrap();
        assert!((t.area() - 8.0).abs() < 1e-9);
    }

    #[test]
    fn several_circular_holes() {
        let holes = (0..4)
            .map(|k| Loop::circle(v2(0.5 + k as f64, 0.5), 0.2).reversed())
            .collect();
        let outer = Loop::polygon_from_points(&[v2(0.0, 0.0), v2(4.0, 0.0), v2(4.0, 1.0), v2(0.0, 1.0)]);
        let t = tessellate_sketch(&face(outer, holes), Deflection::default()).unwrap();
        let expect = 4.0 - 4.0 * PI * 0.04;
        assert!((t.area() - expect).abs() / expect < 0.005);
    }

    #[test]
    fn collinear_vertices() {
        let l = Loop::polygon_from_points(&[v2(0., 0.), v2(1., 0.), v2(2., 0.), v2(2., 1.), v2(1., 1.), v2(0., 1.)]);
        let t = tessellate_sketch(&face(l, vec![]), Deflection::default()).unwrap();
        assert!((t.area() - 2.0).abs() < 1e-12);
        assert_eq!(t.triangles.len(), 4);
    }
}
