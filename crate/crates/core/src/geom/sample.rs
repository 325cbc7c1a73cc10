use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cadprog::CadProgram;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::V3;

use super::csg::{compile_with, CompiledSolid, Membership};
use super::mesh::PrimitiveLabel;
use super::{Deflection, EPS_SURF, PROBE_OFFSET};

pub const DEFAULT_POINTS: usize = 4096;

/// Rounds without a single survivor before the solid is declared empty.
const EMPTY_ROUNDS: usize = 4;
const MAX_ROUNDS: usize = 1000;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolidSample {
    pub points: Vec<V3>,
    pub normals: Vec<V3>,
    pub primitive_label: Vec<PrimitiveLabel>,
    pub source_block: Vec<usize>,
    /// Face id of the generating triangle within its block.
    pub face_id: Vec<usize>,
}

impl SolidSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

struct Candidate {
    point: V3,
    normal: V3,
    block: usize,
    tri: usize,
}

/// Outward normal at a true boundary point, or `None` when the two probes
/// do not straddle the composite surface.
pub(crate) fn boundary_normal(solid: &CompiledSolid, p: V3, n: V3) -> Option<V3> {
    boundary_normal_with_band(solid, p, n, EPS_SURF, PROBE_OFFSET)
}

pub(crate) fn boundary_normal_with_band(solid: &CompiledSolid, p: V3, n: V3, eps: f64, offset: f64) -> Option<V3> {
    let plus = solid.membership_with_band(p + n * offset, eps);
    let minus = solid.membership_with_band(p - n * offset, eps);
    match (plus, minus) {
        (Membership::Outside, Membership::Inside) => Some(n),
        (Membership::Inside, Membership::Outside) => Some(-n),
        _ => None,
    }
}

impl CompiledSolid {
    /// Draws exactly `n` points uniformly by area from the boundary of the
    /// composed solid.
    pub fn sample(&self, n: usize, seed: u64, exec: Execution) -> Result<SolidSample> {
        if n == 0 {
            return Err(Error::SampleSize("at least one point is required".into()));
        }
        let mut cdf = Vec::new();
        let mut owners = Vec::new();
        let mut acc = 0.0;
        for (b, block) in self.blocks.iter().enumerate() {
            for t in 0..block.mesh.len() {
                let a = block.mesh.triangle_area(t);
                if a > 0.0 {
                    acc += a;
                    cdf.push(acc);
                    owners.push((b, t));
                }
            }
        }
        if owners.is_empty() {
            return Err(Error::EmptySolid);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = SolidSample::default();
        let mut barren = 0;
        let (mut tried, mut kept) = (0usize, 0usize);
        for _ in 0..MAX_ROUNDS {
            let need = n - out.len();
            // Sized from the acceptance rate so far; candidates left over
            // once `n` points are kept are discarded, so the output does not
            // depend on the batch size.
            let rate = if tried == 0 { 1.0 } else { (kept.max(1) as f64 / tried as f64).min(1.0) };
            let batch = ((need as f64 / rate * 1.05) as usize + 64).min(64 * need + 1024);
            let cands: Vec<Candidate> = (0..batch)
                .map(|_| {
                    let r = rng.random::<f64>() * acc;
                    let k = cdf.partition_point(|&c| c <= r).min(owners.len() - 1);
                    let (b, t) = owners[k];
                    let [p0, p1, p2] = self.blocks[b].mesh.corners(t);
                    let (u, v): (f64, f64) = (rng.random(), rng.random());
                    let su = u.sqrt();
                    let point = p0 * (1.0 - su) + p1 * (su * (1.0 - v)) + p2 * (su * v);
                    let normal = self.blocks[b].mesh.area_vector(t).normalize();
                    Candidate { point, normal, block: b, tri: t }
                })
                .collect();
            let verdicts = exec.map(&cands, |c| boundary_normal(self, c.point, c.normal));
            let before = out.len();
            tried += batch;
            kept += verdicts.iter().filter(|v| v.is_some()).count();
            for (c, v) in cands.iter().zip(verdicts) {
                if out.len() == n {
                    break;
                }
                if let Some(normal) = v {
                    let mesh = &self.blocks[c.block].mesh;
                    out.points.push(c.point);
                    out.normals.push(normal);
                    out.primitive_label.push(mesh.face_primitive[c.tri]);
                    out.source_block.push(c.block);
                    out.face_id.push(mesh.face_id[c.tri]);
                }
            }
            if out.len() == n {
                return Ok(out);
            }
            if out.len() == before && before == 0 {
                barren += 1;
                if barren >= EMPTY_ROUNDS {
                    return Err(Error::EmptySolid);
                }
            }
        }
        Err(Error::EmptySolid)
    }

    /// Two-sided boundary test: the probes at `p ± offset·n` must fall
    /// on opposite sides of the composite solid.
    pub fn passes_two_sided(&self, p: V3, n: V3) -> bool {
        boundary_normal(self, p, n).is_some()
    }
}

pub fn sample_solid(p: &CadProgram, n: usize, seed: u64) -> Result<SolidSample> {
    sample_solid_with(p, n, seed, Deflection::default(), Execution::default())
}

pub fn sample_solid_with(
    p: &CadProgram,
    n: usize,
    seed: u64,
    defl: Deflection,
    exec: Execution,
) -> Result<SolidSample> {
    compile_with(p, defl, exec)?.sample(n, seed, exec)
}
