//! Sketch-extrude program data model and its JSON interchange format.

use std::f64::consts::PI;
use std::fmt;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geom2d::{self, v2, ArcGeom, V2};
use crate::V3;

/// Maximum endpoint gap between consecutive curves of a loop.
pub const JOIN_TOLERANCE: f64 = 1e-6;

/// Coarse deflections used only to classify loops during parsing.
const CLASSIFY_DEFLECTION: (f64, f64) = (1e-3, 0.1);

#[derive(Clone, Debug, PartialEq)]
pub enum Curve {
    Line { start: V2, end: V2 },
    /// Three-point arc; `mid` lies on the arc strictly between the ends.
    Arc { start: V2, mid: V2, end: V2 },
    Circle { center: V2, radius: f64, clockwise: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CurveKind {
    Line,
    Arc,
    Circle,
}

impl Curve {
    pub fn kind(&self) -> CurveKind {
        match self {
            Curve::Line { .. } => CurveKind::Line,
            Curve::Arc { .. } => CurveKind::Arc,
            Curve::Circle { .. } => CurveKind::Circle,
        }
    }

    /// Start point; circles start at angle zero.
    pub fn start(&self) -> V2 {
        match *self {
            Curve::Line { start, .. } | Curve::Arc { start, .. } => start,
            Curve::Circle { center, radius, .. } => center + v2(radius, 0.0),
        }
    }

    pub fn end(&self) -> V2 {
        match *self {
            Curve::Line { end, .. } | Curve::Arc { end, .. } => end,
            Curve::Circle { .. } => self.start(),
        }
    }

    pub fn reversed(&self) -> Curve {
        match *self {
            Curve::Line { start, end } => Curve::Line { start: end, end: start },
            Curve::Arc { start, mid, end } => Curve::Arc {
                start: end,
                mid,
                end: start,
            },
            Curve::Circle {
                center,
                radius,
                clockwise,
            } => Curve::Circle {
                center,
                radius,
                clockwise: !clockwise,
            },
        }
    }

    pub fn arc_geom(&self) -> Option<ArcGeom> {
        match *self {
            Curve::Arc { start, mid, end } => ArcGeom::from_three_points(start, mid, end),
            Curve::Circle {
                center,
                radius,
                clockwise,
            } => Some(ArcGeom {
                center,
                radius,
                start_angle: 0.0,
                sweep: if clockwise { -2.0 * PI } else { 2.0 * PI },
            }),
            Curve::Line { .. } => None,
        }
    }

    /// Polyline vertices from the start point up to, but excluding, the end
    /// point. Circles return the full ring.
    pub fn discretize(&self, linear_deflection: f64, angular_deflection: f64) -> Vec<V2> {
        match self {
            Curve::Line { start, .. } => vec![*start],
            _ => {
                let g = self.arc_geom().expect("validated arc");
                let mut n = geom2d::arc_segments(g.radius, g.sweep, linear_deflection, angular_deflection);
                if self.kind() == CurveKind::Circle {
                    n = n.max(3);
                }
                let mut pts = Vec::with_capacity(n);
                pts.push(self.start());
                for i in 1..n {
                    pts.push(g.point_at(i as f64 / n as f64));
                }
                pts
            }
        }
    }

    pub fn bounds(&self) -> (V2, V2) {
        match *self {
            Curve::Line { start, end } => (start.inf(&end), start.sup(&end)),
            Curve::Arc { start, end, .. } => self.arc_geom().expect("validated arc").bounds(start, end),
            Curve::Circle { center, radius, .. } => {
                (center - v2(radius, radius), center + v2(radius, radius))
            }
        }
    }

    pub(crate) fn translated(&self, d: V2) -> Curve {
        self.mapped(|p| p + d, 1.0)
    }

    /// Applies a similarity map to every defining point; `scale` is the
    /// map's length scale factor (used for circle radii).
    pub(crate) fn mapped(&self, f: impl Fn(V2) -> V2, scale: f64) -> Curve {
        match *self {
            Curve::Line { start, end } => Curve::Line {
                start: f(start),
                end: f(end),
            },
            Curve::Arc { start, mid, end } => Curve::Arc {
                start: f(start),
                mid: f(mid),
                end: f(end),
            },
            Curve::Circle {
                center,
                radius,
                clockwise,
            } => Curve::Circle {
                center: f(center),
                radius: radius * scale,
                clockwise,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Curve::Line { start, end } => {
                if (end - start).norm() <= JOIN_TOLERANCE {
                    return Err(Error::Geometry("zero-length line".into()));
                }
            }
            Curve::Arc { start, mid, end } => {
                if (end - start).norm() <= JOIN_TOLERANCE {
                    return Err(Error::Geometry("arc with coincident endpoints".into()));
                }
                if geom2d::circumcenter_offset(start, mid, end).is_none() {
                    return Err(Error::Geometry("collinear arc".into()));
                }
            }
            Curve::Circle { radius, .. } => {
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(Error::Geometry("zero radius".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Loop {
    pub curves: Vec<Curve>,
}

impl Loop {
    pub fn new(curves: Vec<Curve>) -> Self {
        Loop { curves }
    }

    /// Axis-aligned polygon through the given corners, in order.
    pub fn polygon_from_points(pts: &[V2]) -> Self {
        let n = pts.len();
        Loop::new(
            (0..n)
                .map(|i| Curve::Line {
                    start: pts[i],
                    end: pts[(i + 1) % n],
                })
                .collect(),
        )
    }

    pub fn circle(center: V2, radius: f64) -> Self {
        Loop::new(vec![Curve::Circle {
            center,
            radius,
            clockwise: false,
        }])
    }

    pub fn is_circle(&self) -> bool {
        self.curves.len() == 1 && self.curves[0].kind() == CurveKind::Circle
    }

    /// Largest gap between consecutive curve endpoints (wrapping around).
    pub fn max_gap(&self) -> f64 {
        let n = self.curves.len();
        (0..n)
            .map(|i| (self.curves[i].end() - self.curves[(i + 1) % n].start()).norm())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.curves.is_empty() {
            return Err(Error::Geometry("empty loop".into()));
        }
        for c in &self.curves {
            c.validate()?;
        }
        let circles = self.curves.iter().filter(|c| c.kind() == CurveKind::Circle).count();
        if circles > 0 && self.curves.len() != 1 {
            return Err(Error::Geometry("a circle must form a loop by itself".into()));
        }
        let gap = self.max_gap();
        if gap > JOIN_TOLERANCE {
            return Err(Error::OpenLoop(format!("endpoint gap {gap:.3e}")));
        }
        Ok(())
    }

    /// Closed polyline plus, for every edge, the index of its source curve.
    pub fn polygon(&self, linear_deflection: f64, angular_deflection: f64) -> (Vec<V2>, Vec<usize>) {
        let mut pts = Vec::new();
        let mut src = Vec::new();
        for (i, c) in self.curves.iter().enumerate() {
            let seg = c.discretize(linear_deflection, angular_deflection);
            src.extend(std::iter::repeat_n(i, seg.len()));
            pts.extend(seg);
        }
        (pts, src)
    }

    pub fn signed_area_approx(&self) -> f64 {
        let (pts, _) = self.polygon(CLASSIFY_DEFLECTION.0, CLASSIFY_DEFLECTION.1);
        geom2d::signed_area(&pts)
    }

    /// Exact enclosed signed area (arcs contribute their circular segment).
    pub fn analytic_area(&self) -> f64 {
        let mut acc = 0.0;
        for c in &self.curves {
            match c {
                Curve::Circle { radius, clockwise, .. } => {
                    let a = PI * radius * radius;
                    acc += if *clockwise { -a } else { a };
                }
                _ => {
                    acc += 0.5 * geom2d::cross(c.start(), c.end());
                    if let Some(g) = c.arc_geom() {
                        let phi = g.sweep;
                        acc += 0.5 * g.radius * g.radius * (phi - phi.sin());
                    }
                }
            }
        }
        acc
    }

    /// Bounding box as `(x_min, y_min, width, height)`.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        let mut lo = v2(f64::INFINITY, f64::INFINITY);
        let mut hi = v2(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in &self.curves {
            let (a, b) = c.bounds();
            lo = lo.inf(&a);
            hi = hi.sup(&b);
        }
        (lo.x, lo.y, hi.x - lo.x, hi.y - lo.y)
    }

    pub fn reversed(&self) -> Loop {
        Loop::new(self.curves.iter().rev().map(Curve::reversed).collect())
    }

    pub fn translated(&self, d: V2) -> Loop {
        Loop::new(self.curves.iter().map(|c| c.translated(d)).collect())
    }

    /// Replaces arcs sweeping more than a half turn by two equal halves.
    fn split_major_arcs(&self) -> Loop {
        let mut out = Vec::with_capacity(self.curves.len());
        for c in &self.curves {
            if let (Curve::Arc { start, end, .. }, Some(g)) = (c, c.arc_geom()) {
                if g.sweep.abs() > PI + 1e-9 {
                    let half = g.point_at(0.5);
                    out.push(Curve::Arc {
                        start: *start,
                        mid: g.point_at(0.25),
                        end: half,
                    });
                    out.push(Curve::Arc {
                        start: half,
                        mid: g.point_at(0.75),
                        end: *end,
                    });
                    continue;
                }
            }
            out.push(c.clone());
        }
        Loop::new(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SketchPlane {
    pub normal: V3,
    pub origin: V3,
    pub x_axis: V3,
}

impl SketchPlane {
    pub fn xy() -> Self {
        SketchPlane {
            normal: V3::z(),
            origin: V3::zeros(),
            x_axis: V3::x(),
        }
    }

    pub fn y_axis(&self) -> V3 {
        self.normal.cross(&self.x_axis)
    }

    pub fn to_world(&self, p: V2) -> V3 {
        self.origin + self.x_axis * p.x + self.y_axis() * p.y
    }

    fn validate(&self) -> Result<()> {
        if (self.normal.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Geometry("sketch normal is not unit length".into()));
        }
        if (self.x_axis.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Geometry("sketch x axis is not unit length".into()));
        }
        if self.normal.dot(&self.x_axis).abs() > 1e-9 {
            return Err(Error::Geometry("sketch x axis is not orthogonal to the normal".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BooleanOp {
    New,
    Join,
    Cut,
}

impl BooleanOp {
    pub const ALL: [BooleanOp; 3] = [BooleanOp::New, BooleanOp::Join, BooleanOp::Cut];

    pub fn index(self) -> usize {
        match self {
            BooleanOp::New => 0,
            BooleanOp::Join => 1,
            BooleanOp::Cut => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BooleanOp::New => "new",
            BooleanOp::Join => "join",
            BooleanOp::Cut => "cut",
        }
    }
}

impl fmt::Display for BooleanOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtrudeBlock {
    pub plane: SketchPlane,
    pub loops: Vec<Loop>,
    pub depth: f64,
    pub op: BooleanOp,
}

impl ExtrudeBlock {
    /// Orients outer loops counter-clockwise and holes clockwise, where a
    /// loop is a hole when an odd number of sibling loops contain it.
    fn orient_loops(&mut self) {
        let polys: Vec<Vec<V2>> = self
            .loops
            .iter()
            .map(|l| l.polygon(CLASSIFY_DEFLECTION.0, CLASSIFY_DEFLECTION.1).0)
            .collect();
        for i in 0..self.loops.len() {
            let probe = polys[i][0];
            let depth = (0..polys.len())
                .filter(|&j| j != i && geom2d::point_in_polygon(probe, &polys[j]))
                .count();
            let want_ccw = depth % 2 == 0;
            let ccw = geom2d::signed_area(&polys[i]) > 0.0;
            if ccw != want_ccw {
                self.loops[i] = self.loops[i].reversed();
            }
        }
    }
}

/// Record of the similarity transform applied by normalization: original
/// coordinates are `normalized / scale + center`.
#[derive(Clone, Debug, PartialEq)]
pub struct BboxScale {
    pub center: V3,
    pub scale: f64,
}

impl Default for BboxScale {
    fn default() -> Self {
        BboxScale {
            center: V3::zeros(),
            scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CadProgram {
    pub blocks: Vec<ExtrudeBlock>,
    pub bbox_scale: BboxScale,
}

impl CadProgram {
    /// Validates every invariant and canonicalizes orientation; arcs longer
    /// than a half turn are split in two.
    pub fn new(blocks: Vec<ExtrudeBlock>) -> Result<Self> {
        CadProgram::with_scale(blocks, BboxScale::default())
    }

    pub fn with_scale(mut blocks: Vec<ExtrudeBlock>, bbox_scale: BboxScale) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Geometry("program has no blocks".into()));
        }
        for (i, b) in blocks.iter_mut().enumerate() {
            b.plane.validate()?;
            if !(b.depth > 0.0) || !b.depth.is_finite() {
                return Err(Error::Geometry(format!("block {i}: depth must be positive")));
            }
            if b.loops.is_empty() {
                return Err(Error::Geometry(format!("block {i}: sketch has no loops")));
            }
            if i == 0 && b.op != BooleanOp::New {
                return Err(Error::Geometry("first block must use the new operation".into()));
            }
            for l in b.loops.iter_mut() {
                l.validate()?;
                *l = l.split_major_arcs();
            }
            b.orient_loops();
        }
        Ok(CadProgram { blocks, bbox_scale })
    }

    pub fn ops(&self) -> Vec<BooleanOp> {
        self.blocks.iter().map(|b| b.op).collect()
    }

    /// Scales the world about `center` by `scale`.
    pub(crate) fn similarity(&self, center: V3, scale: f64) -> CadProgram {
        let blocks = self
            .blocks
            .iter()
            .map(|b| ExtrudeBlock {
                plane: SketchPlane {
                    normal: b.plane.normal,
                    origin: (b.plane.origin - center) * scale,
                    x_axis: b.plane.x_axis,
                },
                loops: b
                    .loops
                    .iter()
                    .map(|l| Loop::new(l.curves.iter().map(|c| c.mapped(|p| p * scale, scale)).collect()))
                    .collect(),
                depth: b.depth * scale,
                op: b.op,
            })
            .collect();
        let prev = &self.bbox_scale;
        CadProgram {
            blocks,
            bbox_scale: BboxScale {
                center: prev.center + center / prev.scale,
                scale: prev.scale * scale,
            },
        }
    }
}

/// Parses the JSON interchange format.
pub fn parse_program(json_text: &str) -> Result<CadProgram> {
    let root: Value =
        serde_json::from_str(json_text).map_err(|e| Error::schema("$", format!("invalid JSON: {e}")))?;
    program_from_value(&root)
}

pub(crate) fn program_from_value(root: &Value) -> Result<CadProgram> {
    let blocks_v = field(root, "$", "blocks")?
        .as_array()
        .ok_or_else(|| Error::schema("$.blocks", "expected an array"))?;
    let mut blocks = Vec::with_capacity(blocks_v.len());
    for (bi, bv) in blocks_v.iter().enumerate() {
        let bp = format!("$.blocks[{bi}]");
        let plane_v = field(bv, &bp, "plane")?;
        let pp = format!("{bp}.plane");
        let plane = SketchPlane {
            normal: vec3(field(plane_v, &pp, "normal")?, &format!("{pp}.normal"))?,
            origin: vec3(field(plane_v, &pp, "origin")?, &format!("{pp}.origin"))?,
            x_axis: vec3(field(plane_v, &pp, "x_axis")?, &format!("{pp}.x_axis"))?,
        };
        let loops_v = field(bv, &bp, "loops")?
            .as_array()
            .ok_or_else(|| Error::schema(format!("{bp}.loops"), "expected an array"))?;
        let mut loops = Vec::with_capacity(loops_v.len());
        for (li, lv) in loops_v.iter().enumerate() {
            let lp = format!("{bp}.loops[{li}]");
            let curves_v = field(lv, &lp, "curves")?
                .as_array()
                .ok_or_else(|| Error::schema(format!("{lp}.curves"), "expected an array"))?;
            let mut curves = Vec::with_capacity(curves_v.len());
            for (ci, cv) in curves_v.iter().enumerate() {
                curves.push(curve_from_value(cv, &format!("{lp}.curves[{ci}]"))?);
            }
            loops.push(Loop::new(curves));
        }
        let depth = number(field(bv, &bp, "depth")?, &format!("{bp}.depth"))?;
        let op = match field(bv, &bp, "op")?.as_str() {
            Some("new") => BooleanOp::New,
            Some("join") => BooleanOp::Join,
            Some("cut") => BooleanOp::Cut,
            _ => return Err(Error::schema(format!("{bp}.op"), "expected \"new\", \"join\" or \"cut\"")),
        };
        blocks.push(ExtrudeBlock {
            plane,
            loops,
            depth,
            op,
        });
    }
    let bbox_scale = match root.get("bbox_scale") {
        None | Some(Value::Null) => BboxScale::default(),
        Some(v) => BboxScale {
            center: vec3(field(v, "$.bbox_scale", "center")?, "$.bbox_scale.center")?,
            scale: number(field(v, "$.bbox_scale", "scale")?, "$.bbox_scale.scale")?,
        },
    };
    CadProgram::with_scale(blocks, bbox_scale)
}

fn curve_from_value(v: &Value, path: &str) -> Result<Curve> {
    let kind = field(v, path, "type")?
        .as_str()
        .ok_or_else(|| Error::schema(format!("{path}.type"), "expected a string"))?;
    let pt = |name: &str| -> Result<V2> { vec2(field(v, path, name)?, &format!("{path}.{name}")) };
    match kind {
        "line" => Ok(Curve::Line {
            start: pt("start")?,
            end: pt("end")?,
        }),
        "arc" => Ok(Curve::Arc {
            start: pt("start")?,
            mid: pt("mid")?,
            end: pt("end")?,
        }),
        "circle" => Ok(Curve::Circle {
            center: pt("center")?,
            radius: number(field(v, path, "radius")?, &format!("{path}.radius"))?,
            clockwise: match v.get("cw") {
                None => false,
                Some(Value::Bool(b)) => *b,
                Some(_) => return Err(Error::schema(format!("{path}.cw"), "expected a boolean")),
            },
        }),
        other => Err(Error::schema(format!("{path}.type"), format!("unknown curve type {other:?}"))),
    }
}

fn field<'a>(v: &'a Value, path: &str, name: &str) -> Result<&'a Value> {
    match v {
        Value::Object(m) => m
            .get(name)
            .ok_or_else(|| Error::schema(format!("{path}.{name}"), "missing field")),
        _ => Err(Error::schema(path, "expected an object")),
    }
}

fn number(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::schema(path, "expected a finite number"))
}

fn numbers<const N: usize>(v: &Value, path: &str) -> Result<[f64; N]> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == N)
        .ok_or_else(|| Error::schema(path, format!("expected an array of {N} numbers")))?;
    let mut out = [0.0; N];
    for (i, x) in arr.iter().enumerate() {
        out[i] = number(x, &format!("{path}[{i}]"))?;
    }
    Ok(out)
}

fn vec2(v: &Value, path: &str) -> Result<V2> {
    let [x, y] = numbers::<2>(v, path)?;
    Ok(v2(x, y))
}

fn vec3(v: &Value, path: &str) -> Result<V3> {
    let [x, y, z] = numbers::<3>(v, path)?;
    Ok(V3::new(x, y, z))
}

/// Rounds to 12 significant digits.
pub fn round_sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.11e}").parse().expect("formatted float")
}

fn num_value(x: f64) -> Value {
    json!(round_sig12(x))
}

fn pt2(p: V2) -> Value {
    json!([round_sig12(p.x), round_sig12(p.y)])
}

fn pt3(p: V3) -> Value {
    json!([round_sig12(p.x), round_sig12(p.y), round_sig12(p.z)])
}

pub(crate) fn program_to_value(p: &CadProgram) -> Value {
    let blocks: Vec<Value> = p
        .blocks
        .iter()
        .map(|b| {
            let loops: Vec<Value> = b
                .loops
                .iter()
                .map(|l| {
                    let curves: Vec<Value> = l.curves.iter().map(curve_to_value).collect();
                    json!({ "curves": curves })
                })
                .collect();
            let mut m = Map::new();
            m.insert(
                "plane".into(),
                json!({
                    "normal": pt3(b.plane.normal),
                    "origin": pt3(b.plane.origin),
                    "x_axis": pt3(b.plane.x_axis),
                }),
            );
            m.insert("loops".into(), Value::Array(loops));
            m.insert("depth".into(), num_value(b.depth));
            m.insert("op".into(), json!(b.op.as_str()));
            Value::Object(m)
        })
        .collect();
    let mut root = Map::new();
    root.insert("blocks".into(), Value::Array(blocks));
    root.insert(
        "bbox_scale".into(),
        json!({ "center": pt3(p.bbox_scale.center), "scale": num_value(p.bbox_scale.scale) }),
    );
    Value::Object(root)
}

fn curve_to_value(c: &Curve) -> Value {
    let mut m = Map::new();
    match *c {
        Curve::Line { start, end } => {
            m.insert("type".into(), json!("line"));
            m.insert("start".into(), pt2(start));
            m.insert("end".into(), pt2(end));
        }
        Curve::Arc { start, mid, end } => {
            m.insert("type".into(), json!("arc"));
            m.insert("start".into(), pt2(start));
            m.insert("mid".into(), pt2(mid));
            m.insert("end".into(), pt2(end));
        }
        Curve::Circle {
            center,
            radius,
            clockwise,
        } => {
            m.insert("type".into(), json!("circle"));
            m.insert("center".into(), pt2(center));
            m.insert("radius".into(), num_value(radius));
            if clockwise {
                m.insert("cw".into(), json!(true));
            }
        }
    }
    Value::Object(m)
}

/// Serializes to the JSON interchange format with 12 significant digits.
pub fn serialize_program(p: &CadProgram) -> String {
    serde_json::to_string(&program_to_value(p)).expect("JSON values always serialize")
}

/// Rescales the program so its compiled solid's bounding box is centered
/// at the origin with longest side 2.
pub fn normalize_program(p: &CadProgram) -> Result<CadProgram> {
    let mesh = crate::geom::extract_mesh(p, crate::geom::Deflection::default())?;
    let (lo, hi) = mesh.bounds().ok_or(Error::EmptySolid)?;
    let center = (lo + hi) * 0.5;
    let extent = (hi - lo).max();
    if !(extent > 0.0) {
        return Err(Error::EmptySolid);
    }
    let scale = 2.0 / extent;
    let near_identity = center.norm() <= 1e-12 && (scale - 1.0).abs() <= 1e-12;
    if near_identity {
        return Ok(p.clone());
    }
    Ok(p.similarity(center, scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const UNIT_SQUARE: &str = r#"{"blocks":[{"plane":{"normal":[0,0,1],"origin":[0,0,0],"x_axis":[1,0,0]},
        "loops":[{"curves":[
            {"type":"line","start":[0,0],"end":[1,0]},
            {"type":"line","start":[1,0],"end":[1,1]},
            {"type":"line","start":[1,1],"end":[0,1]},
            {"type":"line","start":[0,1],"end":[0,0]}]}],
        "depth":1,"op":"new"}]}"#;

    #[test]
    fn parses_unit_square() {
        let p = parse_program(UNIT_SQUARE).unwrap();
        assert_eq!(p.blocks.len(), 1);
        assert_eq!(p.blocks[0].loops.len(), 1);
        assert_eq!(p.blocks[0].loops[0].curves.len(), 4);
        assert!(p.blocks[0].loops[0].curves.iter().all(|c| c.kind() == CurveKind::Line));
    }

    #[test]
    fn collinear_arc_is_rejected() {
        let text = UNIT_SQUARE.replace(
            r#"{"type":"line","start":[0,0],"end":[1,0]}"#,
            r#"{"type":"arc","start":[0,0],"mid":[0.5,0],"end":[1,0]}"#,
        );
        match parse_program(&text) {
            Err(Error::Geometry(m)) => assert_eq!(m, "collinear arc"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors_carry_json_path() {
        let text = UNIT_SQUARE.replace(r#""depth":1"#, r#""depth":"deep""#);
        match parse_program(&text) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "$.blocks[0].depth"),
            other => panic!("unexpected {other:?}"),
        }
        let text = UNIT_SQUARE.replace(r#""x_axis":[1,0,0]"#, r#""xaxis":[1,0,0]"#);
        match parse_program(&text) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "$.blocks[0].plane.x_axis"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn open_loop_and_zero_radius_are_rejected() {
        let text = UNIT_SQUARE.replace(r#""end":[0,0]}"#, r#""end":[0,0.01]}"#);
        assert!(matches!(parse_program(&text), Err(Error::OpenLoop(_))));
        let circle = r#"{"blocks":[{"plane":{"normal":[0,0,1],"origin":[0,0,0],"x_axis":[1,0,0]},
            "loops":[{"curves":[{"type":"circle","center":[0,0],"radius":0}]}],"depth":1,"op":"new"}]}"#;
        assert!(matches!(parse_program(circle), Err(Error::Geometry(_))));
    }

    #[test]
    fn first_block_must_be_new() {
        let text = UNIT_SQUARE.replace(r#""op":"new""#, r#""op":"cut""#);
        assert!(matches!(parse_program(&text), Err(Error::Geometry(_))));
    }

    #[test]
    fn reorients_outer_and_hole_loops() {
        let outer = Loop::polygon_from_points(&[v2(0., 0.), v2(0., 4.), v2(4., 4.), v2(4., 0.)]);
        let hole = Loop::circle(v2(2.0, 2.0), 1.0);
        let p = CadProgram::new(vec![ExtrudeBlock {
            plane: SketchPlane::xy(),
            loops: vec![outer, hole],
            depth: 1.0,
            op: BooleanOp::New,
        }])
        .unwrap();
        assert!(p.blocks[0].loops[0].signed_area_approx() > 0.0);
        assert!(p.blocks[0].loops[1].signed_area_approx() < 0.0);
        assert_eq!(
            p.blocks[0].loops[1].curves[0],
            Curve::Circle {
                center: v2(2.0, 2.0),
                radius: 1.0,
                clockwise: true
            }
        );
    }

    #[test]
    fn circle_round_trips_through_json() {
        let p = CadProgram::new(vec![ExtrudeBlock {
            plane: SketchPlane::xy(),
            loops: vec![Loop::circle(v2(0.25, -0.5), 0.75)],
            depth: 2.0,
            op: BooleanOp::New,
        }])
        .unwrap();
        let text = serialize_program(&p);
        assert!(text.contains(r#""type":"circle""#));
        assert_eq!(parse_program(&text).unwrap(), p);
    }

    #[test]
    fn major_arcs_are_split_at_parse_time() {
        // Keyhole: a 3/4-turn arc closed by two lines through the center.
        let r = 1.0;
        let s = v2(r, 0.0);
        let e = v2(0.0, -r);
        let mid = v2(-r, 0.0);
        let l = Loop::new(vec![
            Curve::Arc { start: s, mid, end: e },
            Curve::Line { start: e, end: v2(0.0, 0.0) },
            Curve::Line { start: v2(0.0, 0.0), end: s },
        ]);
        let area = l.analytic_area();
        assert!((area - (0.75 * PI + 0.0)).abs() < 1e-12);
        let p = CadProgram::new(vec![ExtrudeBlock {
            plane: SketchPlane::xy(),
            loops: vec![l],
            depth: 1.0,
            op: BooleanOp::New,
        }])
        .unwrap();
        let curves = &p.blocks[0].loops[0].curves;
        assert_eq!(curves.len(), 4);
        let total: f64 = curves.iter().filter_map(|c| c.arc_geom()).map(|g| g.sweep).sum();
        assert!((total - 1.5 * PI).abs() < 1e-12);
        assert!((p.blocks[0].loops[0].analytic_area() - area).abs() < 1e-12);
    }

    #[test]
    fn round_sig12_keeps_twelve_digits() {
        assert_eq!(round_sig12(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_sig12(0.5), 0.5);
        assert_eq!(round_sig12(-2.0), -2.0);
        assert_eq!(round_sig12(0.0), 0.0);
    }
}
