//! Hierarchical canonical ordering and relative re-encoding of sketches.
//!
//! Three levels: one extrude-block token per operation, one sketch-patch
//! anchor per loop (ranked by [`loop_score`]), and a run of curve-cluster
//! tokens per loop describing each curve relative to the previous heading.

mod cc;
mod flat;
mod program;

pub use cc::{decode_cc, encode_cc, CcKind, CcToken, CC_DIM, RESIDUAL_SNAP};
pub use flat::{decode_flat, encode_flat, FlatCmd, FlatToken};
pub use program::{decode_program, decode_program_with_residuals, encode_program, EbToken, HierTokens, EB_DIM, SP_DIM};

use std::f64::consts::FRAC_PI_2;

use crate::cadprog::{BooleanOp, Curve, ExtrudeBlock, Loop, SketchPlane};
use crate::geom2d::{self, v2, V2};
use crate::V3;

pub const DEFAULT_ALPHA: f64 = 10.0;
pub const DEFAULT_BETA: f64 = 0.01;

/// Quantum used when comparing coordinates for canonical ordering, so that
/// round-off noise never reorders loops or changes a loop's start curve.
const ORDER_QUANTUM: f64 = 1e-9;

/// Sketch-patch anchor: ranking score, start point and entry tangent.
#[derive(Clone, Debug, PartialEq)]
pub struct SpAnchor {
    pub score: f64,
    pub p_start: V2,
    pub theta_start: f64,
    /// `(x_min, y_min, width, height)`.
    pub loop_bbox: (f64, f64, f64, f64),
}

/// `S = w·h + α·√(w²+h²) − β·(x+y)`.
pub fn loop_score(loop_bbox: (f64, f64, f64, f64), alpha: f64, beta: f64) -> f64 {
    let (x, y, w, h) = loop_bbox;
    w * h + alpha * (w * w + h * h).sqrt() - beta * (x + y)
}

/// A loop rotated to its canonical start curve, with its anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct SortedLoop {
    pub curves: Loop,
    pub anchor: SpAnchor,
    pub original_index: usize,
}

fn quantize(v: f64) -> i64 {
    (v / ORDER_QUANTUM).round() as i64
}

/// Tangent direction at the start of a curve.
pub fn entry_tangent(c: &Curve) -> f64 {
    match *c {
        Curve::Line { start, end } => geom2d::heading(end - start),
        Curve::Arc { start, mid, end } => {
            let (_, kappa) = arc_curvature(start, mid, end);
            let d = end - start;
            let phi = chord_turn(d.norm(), kappa);
            geom2d::heading(d) - phi / 2.0
        }
        Curve::Circle { clockwise, .. } => {
            if clockwise {
                -FRAC_PI_2
            } else {
                FRAC_PI_2
            }
        }
    }
}

/// Signed curvature (positive for a left turn) and radius of a 3-point arc.
pub(crate) fn arc_curvature(start: V2, mid: V2, end: V2) -> (f64, f64) {
    let off = geom2d::circumcenter_offset(start, mid, end).expect("validated arc");
    let radius = off.norm();
    let sign = if geom2d::cross(mid - start, end - mid) > 0.0 { 1.0 } else { -1.0 };
    (radius, sign / radius)
}

/// Turn angle subtended by a chord of length `l` at signed curvature `kappa`.
pub(crate) fn chord_turn(l: f64, kappa: f64) -> f64 {
    2.0 * (l * kappa / 2.0).clamp(-1.0, 1.0).asin()
}

/// Ranks the loops of a sketch by descending score, ties by ascending
/// `(x_m, y_m)` and then input index, and rotates each loop to start at its
/// lowest (y, then x) vertex.
pub fn sort_loops(sketch: &[Loop], alpha: f64, beta: f64) -> Vec<SortedLoop> {
    let mut out: Vec<SortedLoop> = sketch
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let bbox = l.bbox();
            let score = loop_score(bbox, alpha, beta);
            let start = l
                .curves
                .iter()
                .enumerate()
                .min_by_key(|(k, c)| {
                    let p = c.start();
                    (quantize(p.y), quantize(p.x), *k)
                })
                .map(|(k, _)| k)
                .unwrap_or(0);
            let mut curves = l.curves[start..].to_vec();
            curves.extend_from_slice(&l.curves[..start]);
            let first = &curves[0];
            let anchor = SpAnchor {
                score,
                p_start: first.start(),
                theta_start: geom2d::wrap_angle(entry_tangent(first)),
                loop_bbox: bbox,
            };
            SortedLoop {
                curves: Loop::new(curves),
                anchor,
                original_index: i,
            }
        })
        .collect();
    out.sort_by_key(|s| {
        let (x, y, _, _) = s.anchor.loop_bbox;
        (-quantize(s.anchor.score), quantize(x), quantize(y), s.original_index)
    });
    out
}

/// Deterministic in-plane x axis for a sketch normal: the world axis least
/// aligned with the normal, projected onto the plane.
pub fn canonical_x_axis(normal: &V3) -> V3 {
    let a = normal.abs();
    let e = if a.x <= a.y && a.x <= a.z {
        V3::x()
    } else if a.y <= a.z {
        V3::y()
    } else {
        V3::z()
    };
    (e - normal * e.dot(normal)).normalize()
}

/// Expresses a block's sketch in the canonical in-plane frame.
pub fn canonical_frame(block: &ExtrudeBlock) -> (SketchPlane, Vec<Loop>) {
    let x_new = canonical_x_axis(&block.plane.normal);
    let plane = SketchPlane {
        normal: block.plane.normal,
        origin: block.plane.origin,
        x_axis: x_new,
    };
    if (x_new - block.plane.x_axis).norm() <= 1e-12 {
        return (plane, block.loops.clone());
    }
    let c = block.plane.x_axis.dot(&x_new);
    let s = block.plane.x_axis.cross(&x_new).dot(&block.plane.normal);
    let rot = |p: V2| v2(c * p.x + s * p.y, -s * p.x + c * p.y);
    let loops = block
        .loops
        .iter()
        .map(|l| Loop::new(l.curves.iter().map(|cv| cv.mapped(rot, 1.0)).collect()))
        .collect();
    (plane, loops)
}

/// A block in canonical form: canonical frame, ranked and rotated loops.
#[derive(Clone, Debug)]
pub struct CanonicalBlock {
    pub plane: SketchPlane,
    pub loops: Vec<SortedLoop>,
    pub depth: f64,
    pub op: BooleanOp,
}

pub fn canonical_block(block: &ExtrudeBlock, alpha: f64, beta: f64) -> CanonicalBlock {
    let (plane, loops) = canonical_frame(block);
    CanonicalBlock {
        plane,
        loops: sort_loops(&loops, alpha, beta),
        depth: block.depth,
        op: block.op,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn square(x: f64, y: f64, side: f64) -> Loop {
        Loop::polygon_from_points(&[v2(x, y), v2(x + side, y), v2(x + side, y + side), v2(x, y + side)])
    }

    #[test]
    fn score_arithmetic() {
        let s = loop_score((0.0, 0.0, 2.0, 1.0), 1.0, 0.0);
        assert!((s - (2.0 + 5f64.sqrt())).abs() < 1e-15);
        assert!((s - 4.236_067_977_499_79).abs() < 1e-12);
        assert_eq!(loop_score((3.0, -2.0, 0.0, 0.0), 7.0, 0.0), 0.0);
        assert!(loop_score((0.0, 0.0, 1.0, 1.0), 10.0, 0.01) > loop_score((1.0, 1.0, 1.0, 1.0), 10.0, 0.01));
    }

    #[test]
    fn big_loop_ranks_first() {
        let sorted = sort_loops(&[square(5.0, 5.0, 0.5), square(0.0, 0.0, 3.0)], DEFAULT_ALPHA, DEFAULT_BETA);
        assert_eq!(sorted[0].original_index, 1);
    }

    #[test]
    fn position_breaks_ties() {
        let sorted = sort_loops(&[square(5.0, 0.0, 1.0), square(0.0, 0.0, 1.0)], DEFAULT_ALPHA, 0.01);
        assert_eq!(sorted[0].anchor.p_start, v2(0.0, 0.0));
        assert_eq!(sorted[1].anchor.p_start, v2(5.0, 0.0));
    }

    #[test]
    fn circle_anchor_convention() {
        let sorted = sort_loops(&[Loop::circle(v2(1.0, 2.0), 0.5)], DEFAULT_ALPHA, DEFAULT_BETA);
        assert_eq!(sorted[0].anchor.p_start, v2(1.5, 2.0));
        assert!((sorted[0].anchor.theta_start - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn start_curve_is_lowest_vertex() {
        let l = Loop::polygon_from_points(&[v2(1.0, 1.0), v2(0.0, 1.0), v2(0.0, 0.0), v2(1.0, 0.0)]);
        let sorted = sort_loops(&[l], DEFAULT_ALPHA, DEFAULT_BETA);
        assert_eq!(sorted[0].curves.curves[0].start(), v2(0.0, 0.0));
        assert_eq!(sorted[0].anchor.theta_start, 0.0);
    }

    #[test]
    fn canonical_axes() {
        assert_eq!(canonical_x_axis(&V3::z()), V3::x());
        assert_eq!(canonical_x_axis(&V3::x()), V3::y());
        assert_eq!(canonical_x_axis(&V3::y()), V3::x());
        let n = V3::new(1.0, 2.0, 3.0).normalize();
        let x = canonical_x_axis(&n);
        assert!(x.dot(&n).abs() < 1e-15);
        assert!((x.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn canonical_frame_preserves_world_points() {
        let plane = SketchPlane {
            normal: V3::z(),
            origin: V3::new(0.5, 0.0, 1.0),
            x_axis: V3::new(0.6, 0.8, 0.0),
        };
        let block = ExtrudeBlock {
            plane: plane.clone(),
            loops: vec![square(0.25, -0.5, 1.0)],
            depth: 1.0,
            op: BooleanOp::New,
        };
        let (cplane, loops) = canonical_frame(&block);
        for (a, b) in block.loops[0].curves.iter().zip(&loops[0].curves) {
            let wa = plane.to_world(a.start());
            let wb = cplane.to_world(b.start());
            assert!((wa - wb).norm() < 1e-14);
        }
    }
}
