use crate::cadprog::Loop;
use crate::error::{Error, Result};
use crate::geom2d::{self, V2};

use super::Deflection;

/// An outer loop with the holes directly inside it.
#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub outer: Loop,
    pub holes: Vec<Loop>,
}

fn bbox(poly: &[V2]) -> (V2, V2) {
    poly.iter()
        .fold((poly[0], poly[0]), |(lo, hi), p| (lo.inf(p), hi.sup(p)))
}

fn boxes_overlap(a: &(V2, V2), b: &(V2, V2)) -> bool {
    a.0.x <= b.1.x && b.0.x <= a.1.x && a.0.y <= b.1.y && b.0.y <= a.1.y
}

fn edge(poly: &[V2], i: usize) -> (V2, V2) {
    (poly[i], poly[(i + 1) % poly.len()])
}

fn has_self_intersection(poly: &[V2]) -> bool {
    let n = poly.len();
    if n < 4 {
        return false;
    }
    for i in 0..n {
        let (a, b) = edge(poly, i);
        let ea = (a.inf(&b), a.sup(&b));
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = edge(poly, j);
            if !boxes_overlap(&ea, &(c.inf(&d), c.sup(&d))) {
                continue;
            }
            if geom2d::segments_intersect(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

fn polygons_cross(p: &[V2], q: &[V2]) -> bool {
    for i in 0..p.len() {
        let (a, b) = edge(p, i);
        let ea = (a.inf(&b), a.sup(&b));
        for j in 0..q.len() {
            let (c, d) = edge(q, j);
            if boxes_overlap(&ea, &(c.inf(&d), c.sup(&d))) && geom2d::segments_intersect(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

/// Splits a sketch into faces. A loop contained in an odd number of other
/// loops is a hole of its innermost container; loops must be oriented
/// counter-clockwise for outer boundaries and clockwise for holes.
pub fn validate_sketch(loops: &[Loop], defl: Deflection) -> Result<Vec<Face>> {
    let polys: Vec<Vec<V2>> = loops.iter().map(|l| l.polygon(defl.linear, defl.angular).0).collect();
    let boxes: Vec<(V2, V2)> = polys.iter().map(|p| bbox(p)).collect();
    for (i, p) in polys.iter().enumerate() {
        if has_self_intersection(p) {
            return Err(Error::SelfIntersection(format!("loop {i} crosses itself")));
        }
        if p.len() < 3 || geom2d::signed_area(p).abs() <= 1e-14 {
            return Err(Error::Geometry(format!("loop {i} encloses no area")));
        }
    }
    for i in 0..polys.len() {
        for j in i + 1..polys.len() {
            if boxes_overlap(&boxes[i], &boxes[j]) && polygons_cross(&polys[i], &polys[j]) {
                return Err(Error::SelfIntersection(format!("loops {i} and {j} intersect")));
            }
        }
    }
    let contains = |outer: usize, inner: usize| {
        outer != inner
            && boxes_overlap(&boxes[outer], &boxes[inner])
            && geom2d::point_in_polygon(polys[inner][0], &polys[outer])
    };
    let n = loops.len();
    let depth: Vec<usize> = (0..n).map(|i| (0..n).filter(|&j| contains(j, i)).count()).collect();
    let mut faces: Vec<Face> = Vec::new();
    let mut face_of = vec![usize::MAX; n];
    for i in 0..n {
        let ccw = geom2d::signed_area(&polys[i]) > 0.0;
        if depth[i].is_multiple_of(2) {
            if !ccw {
                return Err(Error::Nesting(format!("outer loop {i} is clockwise")));
            }
            face_of[i] = faces.len();
            faces.push(Face {
                outer: loops[i].clone(),
                holes: Vec::new(),
            });
        } else if ccw {
            return Err(Error::Nesting(format!("hole loop {i} is counter-clockwise")));
        }
    }
    for i in 0..n {
        if depth[i] % 2 == 1 {
            let parent = (0..n)
                .find(|&j| depth[j] + 1 == depth[i] && contains(j, i))
                .ok_or_else(|| Error::Nesting(format!("hole loop {i} lies outside every outer loop")))?;
            faces[face_of[parent]].holes.push(loops[i].clone());
        }
    }
    Ok(faces)
}
