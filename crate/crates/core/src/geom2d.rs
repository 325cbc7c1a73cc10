//! Planar geometry primitives shared by the codec and the compiler.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;

pub type V2 = Vector2<f64>;

pub fn v2(x: f64, y: f64) -> V2 {
    V2::new(x, y)
}

pub fn cross(a: V2, b: V2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

pub fn dir(theta: f64) -> V2 {
    v2(theta.cos(), theta.sin())
}

/// Unit normal pointing to the left of heading `theta`.
pub fn left_normal(theta: f64) -> V2 {
    v2(-theta.sin(), theta.cos())
}

pub fn heading(d: V2) -> f64 {
    d.y.atan2(d.x)
}

/// Circle through three points, expressed as an offset from `a`.
///
/// Working relative to `a` keeps the result exact under translation of the
/// inputs whenever the coordinate differences are exact.
pub fn circumcenter_offset(a: V2, b: V2, c: V2) -> Option<V2> {
    let ab = b - a;
    let ac = c - a;
    let d = 2.0 * cross(ab, ac);
    let scale = ab.norm_squared().max(ac.norm_squared());
    if d.abs() <= 1e-12 * scale {
        return None;
    }
    let ab2 = ab.norm_squared();
    let ac2 = ac.norm_squared();
    Some(v2(
        (ac.y * ab2 - ab.y * ac2) / d,
        (ab.x * ac2 - ac.x * ab2) / d,
    ))
}

/// Circular arc in explicit form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcGeom {
    pub center: V2,
    pub radius: f64,
    pub start_angle: f64,
    /// Signed sweep; positive is counter-clockwise.
    pub sweep: f64,
}

impl ArcGeom {
    pub fn from_three_points(start: V2, mid: V2, end: V2) -> Option<Self> {
        let off = circumcenter_offset(start, mid, end)?;
        let center = start + off;
        let radius = off.norm();
        let ccw = cross(mid - start, end - mid) > 0.0;
        let a0 = heading(start - center);
        let a1 = heading(end - center);
        let sweep = if ccw {
            let s = (a1 - a0).rem_euclid(TAU);
            if s == 0.0 {
                TAU
            } else {
                s
            }
        } else {
            let s = (a0 - a1).rem_euclid(TAU);
            -(if s == 0.0 { TAU } else { s })
        };
        Some(ArcGeom {
            center,
            radius,
            start_angle: a0,
            sweep,
        })
    }

    pub fn point_at(&self, frac: f64) -> V2 {
        let a = self.start_angle + self.sweep * frac;
        self.center + self.radius * dir(a)
    }

    /// Axis-aligned bounds `(min, max)` including interior extrema.
    pub fn bounds(&self, start: V2, end: V2) -> (V2, V2) {
        let mut lo = start.inf(&end);
        let mut hi = start.sup(&end);
        for k in 0..4 {
            let axis = k as f64 * PI / 2.0;
            let rel = if self.sweep >= 0.0 {
                (axis - self.start_angle).rem_euclid(TAU)
            } else {
                (self.start_angle - axis).rem_euclid(TAU)
            };
            if rel < self.sweep.abs() {
                let p = self.center + self.radius * dir(axis);
                lo = lo.inf(&p);
                hi = hi.sup(&p);
            }
        }
        (lo, hi)
    }
}

/// Number of chords needed so that both the sagitta and the per-chord turn
/// stay under the given deflections.
pub fn arc_segments(radius: f64, sweep: f64, linear_deflection: f64, angular_deflection: f64) -> usize {
    let sweep = sweep.abs();
    let by_angle = if angular_deflection > 0.0 {
        (sweep / angular_deflection).ceil()
    } else {
        1.0
    };
    let by_sagitta = if linear_deflection > 0.0 && linear_deflection < radius {
        let max_turn = 2.0 * (1.0 - linear_deflection / radius).acos();
        (sweep / max_turn).ceil()
    } else {
        1.0
    };
    by_angle.max(by_sagitta).max(1.0) as usize
}

pub fn signed_area(poly: &[V2]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += cross(poly[i], poly[(i + 1) % n]);
    }
    0.5 * acc
}

/// Crossing-number containment test; boundary points are unspecified.
pub fn point_in_polygon(p: V2, poly: &[V2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let a = poly[i];
        let b = poly[j];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: V2, b: V2, c: V2) -> f64 {
    cross(b - a, c - a)
}

/// True when segments `ab` and `cd` share any point, with a relative
/// tolerance on the orientation tests.
pub fn segments_intersect(a: V2, b: V2, c: V2, d: V2) -> bool {
    let scale = (b - a).norm().max((d - c).norm()).max(1e-300);
    let eps = 1e-12 * scale * scale;
    let sgn = |v: f64| {
        if v > eps {
            1
        } else if v < -eps {
            -1
        } else {
            0
        }
    };
    let o1 = sgn(orient(a, b, c));
    let o2 = sgn(orient(a, b, d));
    let o3 = sgn(orient(c, d, a));
    let o4 = sgn(orient(c, d, b));
    if o1 * o2 < 0 && o3 * o4 < 0 {
        return true;
    }
    let on = |p: V2, q: V2, r: V2| {
        r.x >= p.x.min(q.x) - 1e-12
            && r.x <= p.x.max(q.x) + 1e-12
            && r.y >= p.y.min(q.y) - 1e-12
            && r.y <= p.y.max(q.y) + 1e-12
    };
    (o1 == 0 && on(a, b, c))
        || (o2 == 0 && on(a, b, d))
        || (o3 == 0 && on(c, d, a))
        || (o4 == 0 && on(c, d, b))
}
