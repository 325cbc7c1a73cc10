//! Flat absolute-coordinate command sequence, the non-hierarchical baseline:
//! loops stay in input order, every coordinate is absolute and loops are
//! separated by explicit start-of-loop commands.

use serde_json::{json, Value};

use crate::cadprog::{BboxScale, BooleanOp, CadProgram, Curve, ExtrudeBlock, Loop, SketchPlane};
use crate::error::{Error, Result};
use crate::geom2d::{v2, V2};
use crate::V3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FlatCmd {
    /// Start of loop: `[x, y]`.
    Sol,
    /// `[x, y]` end point.
    Line,
    /// `[mx, my, x, y]`.
    Arc,
    /// `[cx, cy, r, cw]`.
    Circle,
    /// `[n(3), origin(3), x_axis(3), depth, op]`.
    Ext,
    Eos,
}

impl FlatCmd {
    pub fn arity(self) -> usize {
        match self {
            FlatCmd::Sol | FlatCmd::Line => 2,
            FlatCmd::Arc | FlatCmd::Circle => 4,
            FlatCmd::Ext => 11,
            FlatCmd::Eos => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlatCmd::Sol => "sol",
            FlatCmd::Line => "line",
            FlatCmd::Arc => "arc",
            FlatCmd::Circle => "circle",
            FlatCmd::Ext => "ext",
            FlatCmd::Eos => "eos",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [FlatCmd::Sol, FlatCmd::Line, FlatCmd::Arc, FlatCmd::Circle, FlatCmd::Ext, FlatCmd::Eos]
            .into_iter()
            .find(|c| c.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatToken {
    pub cmd: FlatCmd,
    pub params: Vec<f64>,
}

impl FlatToken {
    fn new(cmd: FlatCmd, params: Vec<f64>) -> Self {
        debug_assert_eq!(params.len(), cmd.arity());
        FlatToken { cmd, params }
    }

    pub fn to_json(&self) -> Value {
        json!({ "cmd": self.cmd.as_str(), "params": self.params })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let cmd = v
            .get("cmd")
            .and_then(Value::as_str)
            .and_then(FlatCmd::parse)
            .ok_or_else(|| Error::MalformedToken("unknown flat command".into()))?;
        let params: Vec<f64> = v
            .get("params")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .unwrap_or_default();
        if params.len() != cmd.arity() {
            return Err(Error::MalformedToken(format!("{} expects {} parameters", cmd.as_str(), cmd.arity())));
        }
        Ok(FlatToken { cmd, params })
    }
}

pub fn encode_flat(p: &CadProgram) -> Vec<FlatToken> {
    let mut out = Vec::new();
    for b in &p.blocks {
        for l in &b.loops {
            let s = l.curves[0].start();
            out.push(FlatToken::new(FlatCmd::Sol, vec![s.x, s.y]));
            for c in &l.curves {
                out.push(match *c {
                    Curve::Line { end, .. } => FlatToken::new(FlatCmd::Line, vec![end.x, end.y]),
                    Curve::Arc { mid, end, .. } => FlatToken::new(FlatCmd::Arc, vec![mid.x, mid.y, end.x, end.y]),
                    Curve::Circle {
                        center,
                        radius,
                        clockwise,
                    } => FlatToken::new(
                        FlatCmd::Circle,
                        vec![center.x, center.y, radius, if clockwise { 1.0 } else { 0.0 }],
                    ),
                });
            }
        }
        let (n, o, x) = (b.plane.normal, b.plane.origin, b.plane.x_axis);
        out.push(FlatToken::new(
            FlatCmd::Ext,
            vec![n.x, n.y, n.z, o.x, o.y, o.z, x.x, x.y, x.z, b.depth, b.op.index() as f64],
        ));
    }
    out.push(FlatToken::new(FlatCmd::Eos, vec![]));
    out
}

pub fn decode_flat(tokens: &[FlatToken]) -> Result<CadProgram> {
    let mut blocks = Vec::new();
    let mut loops: Vec<Loop> = Vec::new();
    let mut curves: Vec<Curve> = Vec::new();
    let mut pos: Option<V2> = None;
    let mut ended = false;
    for (i, t) in tokens.iter().enumerate() {
        if ended {
            return Err(Error::MalformedToken(format!("command {i} follows EOS")));
        }
        if t.params.len() != t.cmd.arity() {
            return Err(Error::MalformedToken(format!("command {i} has the wrong arity")));
        }
        let p = &t.params;
        let here = || pos.ok_or_else(|| Error::MalformedToken(format!("command {i} outside a loop")));
        match t.cmd {
            FlatCmd::Sol => {
                if !curves.is_empty() {
                    loops.push(Loop::new(std::mem::take(&mut curves)));
                }
                pos = Some(v2(p[0], p[1]));
            }
            FlatCmd::Line => {
                let start = here()?;
                let end = v2(p[0], p[1]);
                curves.push(Curve::Line { start, end });
                pos = Some(end);
            }
            FlatCmd::Arc => {
                let start = here()?;
                let end = v2(p[2], p[3]);
                curves.push(Curve::Arc {
                    start,
                    mid: v2(p[0], p[1]),
                    end,
                });
                pos = Some(end);
            }
            FlatCmd::Circle => {
                here()?;
                curves.push(Curve::Circle {
                    center: v2(p[0], p[1]),
                    radius: p[2],
                    clockwise: p[3] > 0.5,
                });
            }
            FlatCmd::Ext => {
                if !curves.is_empty() {
                    loops.push(Loop::new(std::mem::take(&mut curves)));
                }
                if loops.is_empty() {
                    return Err(Error::MalformedToken(format!("extrusion {i} has no loops")));
                }
                let op = BooleanOp::ALL
                    .get(p[10].round().max(0.0) as usize)
                    .copied()
                    .ok_or_else(|| Error::MalformedToken(format!("extrusion {i} has an unknown op")))?;
                blocks.push(ExtrudeBlock {
                    plane: SketchPlane {
                        normal: V3::new(p[0], p[1], p[2]),
                        origin: V3::new(p[3], p[4], p[5]),
                        x_axis: V3::new(p[6], p[7], p[8]),
                    },
                    loops: std::mem::take(&mut loops),
                    depth: p[9],
                    op,
                });
                pos = None;
            }
            FlatCmd::Eos => ended = true,
        }
    }
    if !ended {
        return Err(Error::MalformedToken("flat sequence has no EOS".into()));
    }
    if !curves.is_empty() || !loops.is_empty() {
        return Err(Error::MalformedToken("loops after the last extrusion".into()));
    }
    CadProgram::with_scale(blocks, BboxScale::default())
}
