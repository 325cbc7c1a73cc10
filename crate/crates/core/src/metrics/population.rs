use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::{Execution, V3};

use super::{chamfer_below, chamfer_indexed, IndexedCloud, MetricConfig};

/// Which set is matched to its nearest neighbour in the other for MMD.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MmdDirection {
    /// Each reference shape takes its closest generated shape.
    #[default]
    RefToGen,
    GenToRef,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PopulationReport {
    pub mmd: f64,
    pub cov: f64,
    pub jsd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidityReport {
    pub ir: f64,
    pub nov: f64,
    pub uniq: f64,
}

/// Occupancy distribution over a `g³` grid on `[-1, 1]³`: per voxel, the
/// fraction of shapes with a point inside it, normalized to sum 1.
pub fn voxel_occupancy(shapes: &[Vec<V3>], g: usize) -> Vec<f64> {
    let mut counts = vec![0.0; g * g * g];
    let cell = |x: f64| (((x + 1.0) * 0.5 * g as f64).floor().max(0.0) as usize).min(g - 1);
    for s in shapes {
        let occ: BTreeSet<usize> = s.iter().map(|p| (cell(p.x) * g + cell(p.y)) * g + cell(p.z)).collect();
        for v in occ {
            counts[v] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        counts.iter_mut().for_each(|c| *c /= total);
    }
    counts
}

fn jsd(p: &[f64], q: &[f64]) -> f64 {
    let mut out = 0.0;
    for (a, b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if *a > 0.0 {
            out += 0.5 * a * (a / m).ln();
        }
        if *b > 0.0 {
            out += 0.5 * b * (b / m).ln();
        }
    }
    out.max(0.0)
}

fn argmin(row: impl Iterator<Item = f64>) -> (usize, f64) {
    row.enumerate()
        .fold((usize::MAX, f64::INFINITY), |best, (i, d)| if d < best.1 { (i, d) } else { best })
}

fn index(set: &[Vec<V3>], exec: Execution) -> Result<Vec<IndexedCloud>> {
    exec.map(set, |s| IndexedCloud::new(s)).into_iter().collect()
}

pub fn population_metrics(gen: &[Vec<V3>], reference: &[Vec<V3>], cfg: &MetricConfig, exec: Execution) -> Result<PopulationReport> {
    if gen.is_empty() || reference.is_empty() || gen.iter().chain(reference).any(Vec::is_empty) {
        return Err(Error::EmptySet);
    }
    cfg.validate()?;
    let gen_ix = index(gen, exec)?;
    let ref_ix = index(reference, exec)?;
    // dist[g][r]
    let dist: Vec<Vec<f64>> =
        exec.map(&gen_ix, |g| ref_ix.iter().map(|r| chamfer_indexed(g, r, Execution::Sequential)).collect());
    let mmd = match cfg.mmd_direction {
        MmdDirection::RefToGen => {
            (0..reference.len()).map(|r| argmin(dist.iter().map(|row| row[r])).1).sum::<f64>() / reference.len() as f64
        }
        MmdDirection::GenToRef => dist.iter().map(|row| argmin(row.iter().copied()).1).sum::<f64>() / gen.len() as f64,
    };
    let covered: BTreeSet<usize> = dist.iter().map(|row| argmin(row.iter().copied()).0).collect();
    let cov = covered.len() as f64 / reference.len() as f64;
    let jsd = jsd(&voxel_occupancy(gen, cfg.voxel_grid), &voxel_occupancy(reference, cfg.voxel_grid));
    Ok(PopulationReport { mmd, cov, jsd })
}

/// `gen` entries are `None` for programs that failed to compile.
pub fn validity_novelty_uniqueness(
    gen: &[Option<Vec<V3>>],
    train: &[Vec<V3>],
    cfg: &MetricConfig,
    exec: Execution,
) -> Result<ValidityReport> {
    if gen.is_empty() {
        return Err(Error::EmptySet);
    }
    let valid: Vec<&Vec<V3>> = gen.iter().flatten().collect();
    let ir = (gen.len() - valid.len()) as f64 / gen.len() as f64;
    if valid.is_empty() {
        return Ok(ValidityReport { ir, nov: 0.0, uniq: 0.0 });
    }
    let valid = index(&valid.into_iter().cloned().collect::<Vec<_>>(), exec)?;
    let train = index(train, exec)?;
    let thr = cfg.dup_threshold;
    let novel = exec.map(&valid, |g| !train.iter().any(|t| chamfer_below(g, t, thr).is_some()));
    let unique = exec.map_range(valid.len(), |i| !(0..i).any(|j| chamfer_below(&valid[i], &valid[j], thr).is_some()));
    let frac = |v: &[bool]| v.iter().filter(|&&b| b).count() as f64 / v.len() as f64;
    Ok(ValidityReport { ir, nov: frac(&novel), uniq: frac(&unique) })
}
