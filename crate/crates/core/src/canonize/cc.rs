use crate::cadprog::{Curve, Loop, JOIN_TOLERANCE};
use crate::error::{Error, Result};
use crate::geom2d::{self, V2};

use super::{arc_curvature, chord_turn, entry_tangent, SpAnchor};

/// Width of a curve-cluster feature: `[l, Δθ, κ, δx, δy]` plus a 3-way type.
pub const CC_DIM: usize = 8;

/// Residual offsets at or below this magnitude are stored as exactly zero.
pub const RESIDUAL_SNAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CcKind {
    Line,
    /// Arcs and full circles; circles carry `l = 0`.
    Arc,
    Eos,
}

impl CcKind {
    pub fn index(self) -> usize {
        match self {
            CcKind::Line => 0,
            CcKind::Arc => 1,
            CcKind::Eos => 2,
        }
    }

    pub fn from_index(i: usize) -> Self {
        match i {
            0 => CcKind::Line,
            1 => CcKind::Arc,
            _ => CcKind::Eos,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CcToken {
    pub l: f64,
    pub dtheta: f64,
    pub kappa: f64,
    pub dx: f64,
    pub dy: f64,
    pub kind: CcKind,
}

impl CcToken {
    pub const EOS: CcToken = CcToken {
        l: 0.0,
        dtheta: 0.0,
        kappa: 0.0,
        dx: 0.0,
        dy: 0.0,
        kind: CcKind::Eos,
    };

    pub fn features(&self) -> [f64; CC_DIM] {
        let mut t = [0.0; 3];
        t[self.kind.index()] = 1.0;
        [self.l, self.dtheta, self.kappa, self.dx, self.dy, t[0], t[1], t[2]]
    }

    /// Inverse of [`CcToken::features`]; the type is the arg-max of the
    /// one-hot slot, and EOS tokens are zeroed. Length and residuals within
    /// [`RESIDUAL_SNAP`] of zero become zero, so dequantized circles stay
    /// circles; negative lengths clamp to zero.
    pub fn from_features(f: &[f64]) -> Result<Self> {
        if f.len() != CC_DIM {
            return Err(Error::Dimension {
                expected: CC_DIM,
                actual: f.len(),
            });
        }
        let kind = CcKind::from_index(argmax(&f[5..8]));
        if kind == CcKind::Eos {
            return Ok(CcToken::EOS);
        }
        Ok(CcToken {
            l: snap(f[0]).max(0.0),
            dtheta: f[1],
            kappa: if kind == CcKind::Line { 0.0 } else { f[2] },
            dx: snap(f[3]),
            dy: snap(f[4]),
            kind,
        })
    }

    /// Global displacement contributed by this token given the heading it
    /// enters with; returns the displacement and the exit heading.
    pub fn displacement(&self, heading: f64) -> (V2, f64) {
        let tau = heading + self.dtheta;
        let residual = V2::new(self.dx, self.dy);
        match self.kind {
            CcKind::Eos => (V2::zeros(), heading),
            CcKind::Line => (self.l * geom2d::dir(tau) + residual, tau),
            CcKind::Arc if self.l == 0.0 => (residual, tau),
            CcKind::Arc => {
                let phi = chord_turn(self.l, self.kappa);
                (self.l * geom2d::dir(tau + phi / 2.0) + residual, tau + phi)
            }
        }
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn snap(v: f64) -> f64 {
    if v.abs() <= RESIDUAL_SNAP {
        0.0
    } else {
        v
    }
}

/// Encodes a closed loop as one token per curve plus a terminal EOS.
///
/// The loop is traversed turtle-style from the anchor: each token turns by
/// `Δθ` relative to the running heading, then moves. Everything is computed
/// from coordinate differences, so translating the sketch leaves the tokens
/// unchanged.
pub fn encode_cc(lp: &Loop, anchor: &SpAnchor) -> Result<Vec<CcToken>> {
    if lp.curves.is_empty() {
        return Err(Error::OpenLoop("empty loop".into()));
    }
    let gap = lp.max_gap();
    if gap > JOIN_TOLERANCE {
        return Err(Error::OpenLoop(format!("endpoint gap {gap:.3e}")));
    }
    let first = lp.curves[0].start();
    if (first - anchor.p_start).norm() > JOIN_TOLERANCE {
        return Err(Error::OpenLoop("anchor does not match the loop start".into()));
    }
    let mut heading = anchor.theta_start;
    let mut prev_end = anchor.p_start;
    let mut out = Vec::with_capacity(lp.curves.len() + 1);
    for c in &lp.curves {
        let token = match *c {
            Curve::Line { start, end } => {
                let d = end - start;
                let l = d.norm();
                let dtheta = geom2d::wrap_angle(geom2d::heading(d) - heading);
                let rebuilt = l * geom2d::dir(heading + dtheta);
                let res = (d - rebuilt) + (start - prev_end);
                CcToken {
                    l,
                    dtheta,
                    kappa: 0.0,
                    dx: snap(res.x),
                    dy: snap(res.y),
                    kind: CcKind::Line,
                }
            }
            Curve::Arc { start, mid, end } => {
                let d = end - start;
                let l = d.norm();
                let (_, kappa) = arc_curvature(start, mid, end);
                let phi = chord_turn(l, kappa);
                let dtheta = geom2d::wrap_angle(geom2d::heading(d) - phi / 2.0 - heading);
                let rebuilt = l * geom2d::dir(heading + dtheta + phi / 2.0);
                let res = (d - rebuilt) + (start - prev_end);
                CcToken {
                    l,
                    dtheta,
                    kappa,
                    dx: snap(res.x),
                    dy: snap(res.y),
                    kind: CcKind::Arc,
                }
            }
            Curve::Circle {
                radius, clockwise, ..
            } => {
                let kappa = if clockwise { -1.0 / radius } else { 1.0 / radius };
                let res = c.start() - prev_end;
                CcToken {
                    l: 0.0,
                    dtheta: geom2d::wrap_angle(entry_tangent(c) - heading),
                    kappa,
                    dx: snap(res.x),
                    dy: snap(res.y),
                    kind: CcKind::Arc,
                }
            }
        };
        heading = token.displacement(heading).1;
        prev_end = c.end();
        out.push(token);
    }
    out.push(CcToken::EOS);
    Ok(out)
}

/// Rebuilds a loop from its token run.
///
/// Returns the loop (closed by snapping the final endpoint onto the start)
/// and the closure residual `‖Σ T(lᵢ, Δθᵢ)‖`, the norm of the summed
/// displacements before snapping.
pub fn decode_cc(tokens: &[CcToken], anchor: &SpAnchor) -> Result<(Loop, f64)> {
    let eos = tokens
        .iter()
        .position(|t| t.kind == CcKind::Eos)
        .ok_or_else(|| Error::MalformedToken("token run has no EOS".into()))?;
    if eos + 1 != tokens.len() {
        return Err(Error::MalformedToken("tokens follow EOS".into()));
    }
    if eos == 0 {
        return Err(Error::MalformedToken("empty token run".into()));
    }
    let mut pos = anchor.p_start;
    let mut heading = anchor.theta_start;
    let mut total = V2::zeros();
    let mut curves = Vec::with_capacity(eos);
    for t in &tokens[..eos] {
        let tau = heading + t.dtheta;
        let (step, exit) = t.displacement(heading);
        let end = pos + step;
        let curve = match t.kind {
            CcKind::Line => Curve::Line { start: pos, end },
            CcKind::Arc if t.l == 0.0 => {
                if t.kappa == 0.0 || !t.kappa.is_finite() {
                    return Err(Error::MalformedToken("circle token without curvature".into()));
                }
                Curve::Circle {
                    center: pos + geom2d::left_normal(tau) / t.kappa,
                    radius: 1.0 / t.kappa.abs(),
                    clockwise: t.kappa < 0.0,
                }
            }
            CcKind::Arc if t.kappa == 0.0 => Curve::Line { start: pos, end },
            CcKind::Arc => {
                let phi = chord_turn(t.l, t.kappa);
                let mid = pos + (2.0 / t.kappa) * (phi / 4.0).sin() * geom2d::dir(tau + phi / 4.0);
                Curve::Arc { start: pos, mid, end }
            }
            CcKind::Eos => unreachable!(),
        };
        total += step;
        heading = exit;
        pos = end;
        curves.push(curve);
    }
    let residual = total.norm();
    let n = curves.len();
    let start = anchor.p_start;
    match curves.last_mut() {
        Some(Curve::Line { end, .. }) | Some(Curve::Arc { end, .. }) if n > 1 || residual > 0.0 => {
            *end = start;
        }
        _ => {}
    }
    Ok((Loop::new(curves), residual))
}
