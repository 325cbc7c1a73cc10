use serde_json::{json, Value};

use crate::cadprog::{BboxScale, BooleanOp, CadProgram, ExtrudeBlock, Loop};
use crate::error::{Error, Result};
use crate::geom2d::v2;
use crate::V3;

use super::cc::{argmax, decode_cc, encode_cc, CcKind, CcToken, CC_DIM};
use super::{canonical_block, canonical_x_axis, SpAnchor};

/// Width of an extrude-block feature: normal, origin, depth, 3-way op.
pub const EB_DIM: usize = 10;
/// Width of a sketch-patch feature: `[S, x₀, y₀, θ_start, w, h]`.
pub const SP_DIM: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct EbToken {
    pub n_sketch: V3,
    pub p_origin: V3,
    pub h_ext: f64,
    pub b_type: BooleanOp,
}

impl EbToken {
    pub fn features(&self) -> [f64; EB_DIM] {
        let mut t = [0.0; 3];
        t[self.b_type.index()] = 1.0;
        let (n, o) = (self.n_sketch, self.p_origin);
        [n.x, n.y, n.z, o.x, o.y, o.z, self.h_ext, t[0], t[1], t[2]]
    }

    /// The normal is renormalized and the op is the arg-max of the one-hot.
    pub fn from_features(f: &[f64]) -> Result<Self> {
        if f.len() != EB_DIM {
            return Err(Error::Dimension {
                expected: EB_DIM,
                actual: f.len(),
            });
        }
        let n = V3::new(f[0], f[1], f[2]);
        let norm = n.norm();
        if !(norm > 0.0) {
            return Err(Error::MalformedToken("extrude token has a zero normal".into()));
        }
        Ok(EbToken {
            n_sketch: n / norm,
            p_origin: V3::new(f[3], f[4], f[5]),
            h_ext: f[6],
            b_type: BooleanOp::ALL[argmax(&f[7..10])],
        })
    }
}

impl SpAnchor {
    pub fn features(&self) -> [f64; SP_DIM] {
        let (_, _, w, h) = self.loop_bbox;
        [self.score, self.p_start.x, self.p_start.y, self.theta_start, w, h]
    }

    /// The bounding-box corner is not part of the feature; the start point
    /// stands in for it.
    pub fn from_features(f: &[f64]) -> Result<Self> {
        if f.len() != SP_DIM {
            return Err(Error::Dimension {
                expected: SP_DIM,
                actual: f.len(),
            });
        }
        Ok(SpAnchor {
            score: f[0],
            p_start: v2(f[1], f[2]),
            theta_start: f[3],
            loop_bbox: (f[1], f[2], f[4].max(0.0), f[5].max(0.0)),
        })
    }
}

/// The three token streams of a program plus their alignment tables.
#[derive(Clone, Debug, PartialEq)]
pub struct HierTokens {
    pub eb: Vec<EbToken>,
    /// Anchors in sorted order, grouped by block.
    pub sp: Vec<SpAnchor>,
    /// Concatenated EOS-terminated runs, one per SP entry.
    pub cc: Vec<CcToken>,
    /// Block index of each SP entry.
    pub sp_block: Vec<usize>,
    /// SP index of each CC run.
    pub cc_run_sp: Vec<usize>,
    pub bbox_scale: BboxScale,
}

impl HierTokens {
    /// Splits the CC stream into its EOS-terminated runs.
    pub fn cc_runs(&self) -> Result<Vec<&[CcToken]>> {
        let mut runs = Vec::new();
        let mut start = 0;
        for (i, t) in self.cc.iter().enumerate() {
            if t.kind == CcKind::Eos {
                runs.push(&self.cc[start..=i]);
                start = i + 1;
            }
        }
        if start != self.cc.len() {
            return Err(Error::MalformedToken("curve stream does not end with EOS".into()));
        }
        Ok(runs)
    }

    pub fn to_json(&self) -> Value {
        let eb: Vec<Value> = self.eb.iter().map(|t| json!(t.features().to_vec())).collect();
        let sp: Vec<Value> = self.sp.iter().map(|t| json!(t.features().to_vec())).collect();
        let cc: Vec<Value> = self.cc.iter().map(|t| json!(t.features().to_vec())).collect();
        let c = self.bbox_scale.center;
        json!({
            "eb": eb,
            "sp": sp,
            "cc": cc,
            "align": { "sp_block": self.sp_block, "cc_run_sp": self.cc_run_sp },
            "bbox_scale": { "center": [c.x, c.y, c.z], "scale": self.bbox_scale.scale },
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&self.to_json()).expect("JSON values always serialize")
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let rows = |key: &str, dim: usize| -> Result<Vec<Vec<f64>>> {
            let arr = v
                .get(key)
                .and_then(Value::as_array)
                .ok_or_else(|| Error::schema(format!("$.{key}"), "expected an array"))?;
            arr.iter()
                .enumerate()
                .map(|(i, row)| {
                    let path = format!("$.{key}[{i}]");
                    let r = row.as_array().ok_or_else(|| Error::schema(&path, "expected an array"))?;
                    if r.len() != dim {
                        return Err(Error::schema(&path, format!("expected {dim} numbers, got {}", r.len())));
                    }
                    r.iter()
                        .map(|x| x.as_f64().ok_or_else(|| Error::schema(&path, "expected a number")))
                        .collect()
                })
                .collect()
        };
        let eb = rows("eb", EB_DIM)?
            .iter()
            .map(|r| EbToken::from_features(r))
            .collect::<Result<Vec<_>>>()?;
        let sp = rows("sp", SP_DIM)?
            .iter()
            .map(|r| SpAnchor::from_features(r))
            .collect::<Result<Vec<_>>>()?;
        let cc = rows("cc", CC_DIM)?
            .iter()
            .map(|r| CcToken::from_features(r))
            .collect::<Result<Vec<_>>>()?;
        let index_list = |key: &str| -> Result<Vec<usize>> {
            let path = format!("$.align.{key}");
            v.get("align")
                .and_then(|a| a.get(key))
                .and_then(Value::as_array)
                .ok_or_else(|| Error::schema(&path, "expected an array"))?
                .iter()
                .map(|x| {
                    x.as_u64()
                        .map(|u| u as usize)
                        .ok_or_else(|| Error::schema(&path, "expected a non-negative integer"))
                })
                .collect()
        };
        let sp_block = index_list("sp_block")?;
        let cc_run_sp = index_list("cc_run_sp")?;
        let bbox_scale = match v.get("bbox_scale") {
            None => BboxScale::default(),
            Some(b) => {
                let c: Vec<f64> = b
                    .get("center")
                    .and_then(Value::as_array)
                    .map(|a| a.iter().filter_map(Value::as_f64).collect())
                    .unwrap_or_default();
                let scale = b.get("scale").and_then(Value::as_f64);
                match (c.as_slice(), scale) {
                    (&[x, y, z], Some(s)) => BboxScale {
                        center: V3::new(x, y, z),
                        scale: s,
                    },
                    _ => return Err(Error::schema("$.bbox_scale", "expected center [x,y,z] and scale")),
                }
            }
        };
        Ok(HierTokens {
            eb,
            sp,
            cc,
            sp_block,
            cc_run_sp,
            bbox_scale,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(|e| Error::schema("$", format!("invalid JSON: {e}")))?;
        HierTokens::from_json(&v)
    }
}

/// Encodes a program into its three canonical token streams.
pub fn encode_program(p: &CadProgram, alpha: f64, beta: f64) -> Result<HierTokens> {
    let mut out = HierTokens {
        eb: Vec::with_capacity(p.blocks.len()),
        sp: Vec::new(),
        cc: Vec::new(),
        sp_block: Vec::new(),
        cc_run_sp: Vec::new(),
        bbox_scale: p.bbox_scale.clone(),
    };
    for (bi, block) in p.blocks.iter().enumerate() {
        let cb = canonical_block(block, alpha, beta);
        out.eb.push(EbToken {
            n_sketch: cb.plane.normal,
            p_origin: cb.plane.origin,
            h_ext: cb.depth,
            b_type: cb.op,
        });
        for sl in &cb.loops {
            let run = encode_cc(&sl.curves, &sl.anchor)?;
            out.cc_run_sp.push(out.sp.len());
            out.sp_block.push(bi);
            out.sp.push(sl.anchor.clone());
            out.cc.extend(run);
        }
    }
    Ok(out)
}

/// Decodes token streams back to a program, also returning the closure
/// residual of every loop in SP order.
pub fn decode_program_with_residuals(t: &HierTokens) -> Result<(CadProgram, Vec<f64>)> {
    let runs = t.cc_runs()?;
    if runs.len() != t.sp.len() {
        return Err(Error::InconsistentStreams(format!(
            "{} curve runs for {} sketch patches",
            runs.len(),
            t.sp.len()
        )));
    }
    if t.sp_block.len() != t.sp.len() || t.cc_run_sp.len() != runs.len() {
        return Err(Error::InconsistentStreams("alignment tables do not match stream lengths".into()));
    }
    let mut run_of_sp = vec![usize::MAX; t.sp.len()];
    for (r, &s) in t.cc_run_sp.iter().enumerate() {
        if s >= t.sp.len() || run_of_sp[s] != usize::MAX {
            return Err(Error::InconsistentStreams(format!("curve run {r} maps to invalid patch {s}")));
        }
        run_of_sp[s] = r;
    }
    let mut loops: Vec<Vec<Loop>> = vec![Vec::new(); t.eb.len()];
    let mut residuals = Vec::with_capacity(t.sp.len());
    let mut last_block = 0;
    for (s, anchor) in t.sp.iter().enumerate() {
        let b = t.sp_block[s];
        if b >= t.eb.len() || b < last_block {
            return Err(Error::InconsistentStreams(format!("patch {s} maps to invalid block {b}")));
        }
        last_block = b;
        let (lp, res) = decode_cc(runs[run_of_sp[s]], anchor)?;
        loops[b].push(lp);
        residuals.push(res);
    }
    let blocks = t
        .eb
        .iter()
        .zip(loops)
        .enumerate()
        .map(|(i, (eb, ls))| {
            if ls.is_empty() {
                return Err(Error::InconsistentStreams(format!("block {i} has no sketch patches")));
            }
            Ok(ExtrudeBlock {
                plane: crate::cadprog::SketchPlane {
                    normal: eb.n_sketch,
                    origin: eb.p_origin,
                    x_axis: canonical_x_axis(&eb.n_sketch),
                },
                loops: ls,
                depth: eb.h_ext,
                op: eb.b_type,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((CadProgram::with_scale(blocks, t.bbox_scale.clone())?, residuals))
}

pub fn decode_program(t: &HierTokens) -> Result<CadProgram> {
    decode_program_with_residuals(t).map(|(p, _)| p)
}
