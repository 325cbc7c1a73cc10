//! Point-cloud importance scores and saliency/coverage mixture resampling.

mod ply;

pub use ply::{read_cloud, read_ply, read_xyz, write_cloud, write_ply, write_xyz, CloudFile};

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spatial::KdTree;
use crate::{Execution, V3};

pub const DEFAULT_LAMBDA: f64 = 0.7;
pub const DEFAULT_TEMPERATURE: f64 = 5.0;
pub const DEFAULT_K: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredCloud {
    pub points: Vec<V3>,
    /// One score per point, in `[0, 1]`.
    pub scores: Vec<f64>,
}

impl ScoredCloud {
    pub fn new(points: Vec<V3>, scores: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::SampleSize("empty cloud".into()));
        }
        if points.len() != scores.len() {
            return Err(Error::Shape(format!("{} points vs {} scores", points.len(), scores.len())));
        }
        let scores = scores.into_iter().map(|s| s.clamp(0.0, 1.0)).collect();
        Ok(ScoredCloud { points, scores })
    }
}

/// Source of per-point importance scores.
pub trait ScoreProvider {
    fn score(&self, points: &[V3]) -> Result<Vec<f64>>;
}

/// Local PCA surface variation `λ_min / (λ₁+λ₂+λ₃)` over the `k` nearest
/// neighbours.
#[derive(Clone, Copy, Debug)]
pub struct SurfaceVariation {
    pub k: usize,
    pub exec: Execution,
}

impl ScoreProvider for SurfaceVariation {
    fn score(&self, points: &[V3]) -> Result<Vec<f64>> {
        Ok(importance_score_with(points, self.k, self.exec)?.scores)
    }
}

/// Surface variation of the neighbourhood of each point, before rescaling.
pub fn surface_variation(points: &[V3], k: usize, exec: Execution) -> Result<Vec<f64>> {
    if k < 4 || points.len() <= k {
        return Err(Error::SampleSize(format!("need N > k >= 4, got N={} k={k}", points.len())));
    }
    let tree = KdTree::new(points);
    exec.map_range(points.len(), |i| {
        // The query point itself plus its k nearest others.
        let nb = tree.knn(&points[i], k + 1);
        let mean = nb.iter().map(|&(j, _)| points[j]).sum::<V3>() / nb.len() as f64;
        let mut cov = Matrix3::zeros();
        for &(j, _) in &nb {
            let d = points[j] - mean;
            cov += d * d.transpose();
        }
        cov /= nb.len() as f64;
        let ev = SymmetricEigen::new(cov).eigenvalues;
        let total = ev.sum();
        if total <= 0.0 {
            return Err(Error::DegenerateNeighborhood(i));
        }
        Ok(ev.min().max(0.0) / total)
    })
    .into_iter()
    .collect()
}

pub fn importance_score(points: &[V3], k: usize) -> Result<ScoredCloud> {
    importance_score_with(points, k, Execution::default())
}

/// Surface variation rescaled to `[0, 1]` by the batch maximum.
pub fn importance_score_with(points: &[V3], k: usize, exec: Execution) -> Result<ScoredCloud> {
    let mut s = surface_variation(points, k, exec)?;
    let max = s.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        s.iter_mut().for_each(|v| *v /= max);
    }
    ScoredCloud::new(points.to_vec(), s)
}

/// `p_i = λ·softmax(β·s)_i + (1−λ)/N`.
pub fn resample_distribution(scores: &[f64], lambda: f64, beta: f64) -> Vec<f64> {
    let n = scores.len();
    if n == 0 {
        return Vec::new();
    }
    let uniform = 1.0 / n as f64;
    if lambda == 0.0 || beta == 0.0 {
        return vec![uniform; n];
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (beta * (s - max)).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| lambda * x / z + (1.0 - lambda) * uniform).collect()
}

fn draw(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let r = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if r < acc {
                return i;
            }
        }
    }
    last
}

/// Indices drawn from the mixture law. Without replacement each draw is
/// taken from the remaining mass, renormalized.
pub fn resample_indices(
    scores: &[f64],
    m: usize,
    lambda: f64,
    beta: f64,
    seed: u64,
    replacement: bool,
) -> Result<Vec<usize>> {
    let n = scores.len();
    if n == 0 || (!replacement && m > n) {
        return Err(Error::SampleSize(format!("cannot draw {m} of {n} points")));
    }
    let p = resample_distribution(scores, lambda, beta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if replacement {
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &x in &p {
            acc += x;
            cdf.push(acc);
        }
        return Ok((0..m)
            .map(|_| {
                let r = rng.random::<f64>() * acc;
                cdf.partition_point(|&c| c <= r).min(n - 1)
            })
            .collect());
    }
    let mut w = p;
    let mut total: f64 = w.iter().sum();
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let i = draw(&w, total, &mut rng);
        out.push(i);
        w[i] = 0.0;
        // Re-summing avoids drift from repeated subtraction.
        total = w.iter().sum();
    }
    Ok(out)
}

pub fn resample(
    cloud: &ScoredCloud,
    m: usize,
    lambda: f64,
    beta: f64,
    seed: u64,
    replacement: bool,
) -> Result<Vec<V3>> {
    Ok(resample_indices(&cloud.scores, m, lambda, beta, seed, replacement)?
        .into_iter()
        .map(|i| cloud.points[i])
        .collect())
}
