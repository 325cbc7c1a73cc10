//! Reconstruction, primitive and population metrics.

mod population;

pub use population::{
    population_metrics, validity_novelty_uniqueness, voxel_occupancy, MmdDirection, PopulationReport, ValidityReport,
};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geom::{PrimitiveLabel, SolidSample, TriMesh};
use crate::spatial::KdTree;
use crate::{Execution, V3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricConfig {
    pub n_points: usize,
    pub match_threshold: f64,
    pub voxel_grid: usize,
    pub dup_threshold: f64,
    pub seed: u64,
    pub mmd_direction: MmdDirection,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            n_points: 10_000,
            match_threshold: 0.1,
            voxel_grid: 28,
            dup_threshold: 0.02,
            seed: 0,
            mmd_direction: MmdDirection::RefToGen,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 || self.match_threshold <= 0.0 || self.dup_threshold <= 0.0 || self.voxel_grid < 2 {
            return Err(Error::Shape("metric parameters must be positive and the grid at least 2".into()));
        }
        Ok(())
    }
}

/// A point set with its kd-tree and a space-filling-curve visiting order,
/// built once and reused across many distance queries.
#[derive(Clone, Debug)]
pub struct IndexedCloud {
    pub points: Vec<V3>,
    tree: KdTree,
    order: Vec<usize>,
}

impl IndexedCloud {
    pub fn new(points: &[V3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySet);
        }
        Ok(IndexedCloud {
            points: points.to_vec(),
            tree: KdTree::new(points),
            order: morton_order(points),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn morton_order(points: &[V3]) -> Vec<usize> {
    let mut lo = V3::repeat(f64::INFINITY);
    let mut hi = V3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let span = (hi - lo).map(|x| if x > 0.0 { x } else { 1.0 });
    let spread = |mut v: u64| {
        v &= 0x1f_ffff;
        v = (v | v << 32) & 0x1f_0000_0000_ffff;
        v = (v | v << 16) & 0x1f_0000_ff00_00ff;
        v = (v | v << 8) & 0x100f_00f0_0f00_f00f;
        v = (v | v << 4) & 0x10c3_0c30_c30c_30c3;
        (v | v << 2) & 0x1249_2492_4924_9249
    };
    let key = |p: &V3| {
        let c = |k: usize| spread(((p[k] - lo[k]) / span[k] * 2_097_151.0) as u64);
        c(0) | c(1) << 1 | c(2) << 2
    };
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| (key(&points[i]), i));
    order
}

const CHUNK: usize = 256;

/// Nearest-neighbour distances from every point of `from` into `to`, in the
/// original order of `from`.
fn nn_distances(from: &IndexedCloud, to: &IndexedCloud, exec: Execution) -> Vec<f64> {
    let chunks: Vec<&[usize]> = from.order.chunks(CHUNK).collect();
    let parts = exec.map(&chunks, |chunk| {
        let mut hint = None;
        chunk
            .iter()
            .map(|&i| {
                let q = &from.points[i];
                let (j, d) = match hint {
                    Some(h) => to.tree.nearest_hinted(q, h),
                    None => to.tree.nearest(q),
                }
                .expect("non-empty");
                hint = Some(j);
                (i, d.sqrt())
            })
            .collect::<Vec<_>>()
    });
    let mut out = vec![0.0; from.len()];
    for (i, d) in parts.into_iter().flatten() {
        out[i] = d;
    }
    out
}

/// As [`nn_distances`], but gives up once the running total exceeds `budget`.
fn nn_distances_within(from: &IndexedCloud, to: &IndexedCloud, budget: f64) -> Option<Vec<f64>> {
    let mut out = vec![0.0; from.len()];
    let mut total = 0.0;
    let mut hint = None;
    for &i in &from.order {
        let q = &from.points[i];
        let (j, d) = match hint {
            Some(h) => to.tree.nearest_hinted(q, h),
            None => to.tree.nearest(q),
        }
        .expect("non-empty");
        hint = Some(j);
        out[i] = d.sqrt();
        total += out[i];
        if total > budget {
            return None;
        }
    }
    Some(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean distance from each point of `from` to its nearest point of `to`.
pub fn one_way(from: &[V3], to: &[V3], exec: Execution) -> Result<f64> {
    Ok(mean(&nn_distances(&IndexedCloud::new(from)?, &IndexedCloud::new(to)?, exec)))
}

/// `(acc_err, comp_err)`: generated→truth and truth→generated mean distances.
pub fn acc_comp(gen: &[V3], gt: &[V3]) -> Result<(f64, f64)> {
    acc_comp_with(gen, gt, Execution::default())
}

pub fn acc_comp_with(gen: &[V3], gt: &[V3], exec: Execution) -> Result<(f64, f64)> {
    let (g, t) = (IndexedCloud::new(gen)?, IndexedCloud::new(gt)?);
    Ok(acc_comp_indexed(&g, &t, exec))
}

pub fn acc_comp_indexed(gen: &IndexedCloud, gt: &IndexedCloud, exec: Execution) -> (f64, f64) {
    (mean(&nn_distances(gen, gt, exec)), mean(&nn_distances(gt, gen, exec)))
}

/// Symmetric Chamfer distance with Euclidean (unsquared) distances.
pub fn chamfer(a: &[V3], b: &[V3]) -> Result<f64> {
    chamfer_with(a, b, Execution::default())
}

pub fn chamfer_with(a: &[V3], b: &[V3], exec: Execution) -> Result<f64> {
    let (x, y) = acc_comp_with(a, b, exec)?;
    Ok(0.5 * (x + y))
}

pub fn chamfer_indexed(a: &IndexedCloud, b: &IndexedCloud, exec: Execution) -> f64 {
    let (x, y) = acc_comp_indexed(a, b, exec);
    0.5 * (x + y)
}

/// The Chamfer distance if it is below `threshold`, else `None`. Stops
/// early once the partial sums already reach the threshold.
pub fn chamfer_below(a: &IndexedCloud, b: &IndexedCloud, threshold: f64) -> Option<f64> {
    // The margin covers the different summation order of the running totals.
    let slack = 1.0 + 1e-9;
    let da = nn_distances_within(a, b, 2.0 * threshold * a.len() as f64 * slack)?;
    let x = mean(&da);
    let db = nn_distances_within(b, a, (2.0 * threshold - x).max(0.0) * b.len() as f64 * slack)?;
    let cd = 0.5 * (x + mean(&db));
    (cd < threshold).then_some(cd)
}

/// Fraction of triangles with at least one edge not shared by exactly two.
pub fn hanging_faces(m: &TriMesh) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let counts = m.edge_counts();
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let hanging = m
        .triangles
        .iter()
        .filter(|t| (0..3).any(|i| counts[&key(t[i], t[(i + 1) % 3])] != 2))
        .count();
    Ok(hanging as f64 / m.len() as f64)
}

/// Each ground-truth point takes the label of its nearest predicted point.
pub fn seg_accuracy(pred: &SolidSample, gt: &SolidSample) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptySet);
    }
    let tree = KdTree::new(&pred.points);
    let hits = gt
        .points
        .iter()
        .zip(&gt.primitive_label)
        .filter(|(p, l)| pred.primitive_label[tree.nearest(p).expect("non-empty").0] == **l)
        .count();
    Ok(hits as f64 / gt.len() as f64)
}

/// Primitive key: source block, surface label, face id.
pub type PrimitiveKey = (usize, PrimitiveLabel, usize);

pub fn primitives(s: &SolidSample) -> BTreeMap<PrimitiveKey, Vec<V3>> {
    let mut out: BTreeMap<PrimitiveKey, Vec<V3>> = BTreeMap::new();
    for i in 0..s.len() {
        out.entry((s.source_block[i], s.primitive_label[i], s.face_id[i]))
            .or_default()
            .push(s.points[i]);
    }
    out
}

/// Greedy one-to-one matching of primitives by ascending Chamfer distance;
/// returns `(precision, recall)`.
pub fn primitive_pr(gen: &SolidSample, gt: &SolidSample, threshold: f64) -> Result<(f64, f64)> {
    primitive_pr_groups(
        &primitives(gen).into_values().collect::<Vec<_>>(),
        &primitives(gt).into_values().collect::<Vec<_>>(),
        threshold,
    )
}

pub fn primitive_pr_groups(gen: &[Vec<V3>], gt: &[Vec<V3>], threshold: f64) -> Result<(f64, f64)> {
    if gen.is_empty() || gt.is_empty() {
        return Err(Error::EmptySet);
    }
    let index = |set: &[Vec<V3>]| set.iter().map(|s| IndexedCloud::new(s)).collect::<Result<Vec<_>>>();
    let (gen_ix, gt_ix) = (index(gen)?, index(gt)?);
    // Pairs at or above the threshold never match, so they are not kept.
    let mut pairs = Vec::new();
    for (i, g) in gen_ix.iter().enumerate() {
        for (j, t) in gt_ix.iter().enumerate() {
            if let Some(d) = chamfer_below(g, t, threshold) {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_g = vec![false; gen.len()];
    let mut used_t = vec![false; gt.len()];
    let mut matched = 0usize;
    for (_, i, j) in pairs {
        if !used_g[i] && !used_t[j] {
            used_g[i] = true;
            used_t[j] = true;
            matched += 1;
        }
    }
    Ok((matched as f64 / gen.len() as f64, matched as f64 / gt.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chamfer_examples() {
        let a = [V3::zeros()];
        let b = [V3::x()];
        assert_eq!(chamfer(&a, &b).unwrap(), 1.0);
        assert_eq!(chamfer(&b, &b).unwrap(), 0.0);
        assert!(matches!(chamfer(&[], &b), Err(Error::EmptySet)));
    }

    #[test]
    fn half_subset_asymmetry() {
        let gt: Vec<V3> = (0..10).map(|i| V3::new(i as f64, 0.0, 0.0)).collect();
        let (acc, comp) = acc_comp(&gt[..5], &gt).unwrap();
        assert_eq!(acc, 0.0);
        assert!(comp > 0.0);
    }

    #[test]
    fn single_triangle_hangs() {
        let mut m = TriMesh::default();
        m.push([V3::zeros(), V3::x(), V3::y()], PrimitiveLabel::PlanarCap, 0);
        assert_eq!(hanging_faces(&m).unwrap(), 1.0);
        assert!(matches!(hanging_faces(&TriMesh::default()), Err(Error::EmptyMesh)));
    }

    #[test]
    fn primitive_matching() {
        let face = |z: f64| (0..20).map(|i| V3::new(i as f64 * 0.01, 0.0, z)).collect::<Vec<_>>();
        let gt: Vec<Vec<V3>> = (0..6).map(|i| face(i as f64)).collect();
        assert_eq!(primitive_pr_groups(&gt, &gt, 0.1).unwrap(), (1.0, 1.0));
        assert_eq!(primitive_pr_groups(&gt[..5], &gt, 0.1).unwrap(), (1.0, 5.0 / 6.0));
        let mut extra = gt.clone();
        extra.push(face(100.0));
        let (p, r) = primitive_pr_groups(&extra, &gt, 0.1).unwrap();
        assert!((p - 6.0 / 7.0).abs() < 1e-15 && r == 1.0);
    }
}
