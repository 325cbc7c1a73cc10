//! Symmetric contrastive alignment between point-cloud and sequence
//! embeddings, with analytic gradients.

use crate::error::{Error, Result};

/// Which embeddings compete with the positive in each denominator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Negatives {
    /// Every pooled embedding other than the anchor, same modality included.
    #[default]
    Pooled,
    /// Only the other modality (CLIP style).
    CrossModal,
}

/// How the two anchoring directions combine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Reduction {
    #[default]
    Average,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NceConfig {
    pub tau: f64,
    pub negatives: Negatives,
    pub reduction: Reduction,
}

impl Default for NceConfig {
    fn default() -> Self {
        NceConfig {
            tau: 0.07,
            negatives: Negatives::Pooled,
            reduction: Reduction::Average,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBatch {
    pub z_cloud: Vec<Vec<f64>>,
    pub z_seq: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NceOutput {
    pub loss: f64,
    /// Cosine similarities over the pooled set `[z_seq; z_cloud]`.
    pub similarity: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NceGrad {
    pub loss: f64,
    pub d_cloud: Vec<Vec<f64>>,
    pub d_seq: Vec<Vec<f64>>,
    pub d_tau: f64,
}

fn norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

struct Pooled {
    b: usize,
    units: Vec<Vec<f64>>,
    norms: Vec<f64>,
    sim: Vec<Vec<f64>>,
}

impl EmbeddingBatch {
    pub fn new(z_cloud: Vec<Vec<f64>>, z_seq: Vec<Vec<f64>>) -> Result<Self> {
        if z_cloud.is_empty() || z_cloud.len() != z_seq.len() {
            return Err(Error::Shape(format!("batch sizes {} and {}", z_cloud.len(), z_seq.len())));
        }
        let d = z_cloud[0].len();
        for r in z_cloud.iter().chain(&z_seq) {
            if r.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    actual: r.len(),
                });
            }
            if norm(r) == 0.0 {
                return Err(Error::ZeroVector);
            }
        }
        Ok(EmbeddingBatch { z_cloud, z_seq })
    }

    pub fn len(&self) -> usize {
        self.z_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_seq.is_empty()
    }

    fn pooled(&self) -> Pooled {
        let b = self.len();
        let all: Vec<&Vec<f64>> = self.z_seq.iter().chain(&self.z_cloud).collect();
        let norms: Vec<f64> = all.iter().map(|r| norm(r)).collect();
        let units: Vec<Vec<f64>> = all.iter().zip(&norms).map(|(r, n)| r.iter().map(|x| x / n).collect()).collect();
        let sim = (0..2 * b)
            .map(|i| (0..2 * b).map(|k| dot(&units[i], &units[k])).collect())
            .collect();
        Pooled { b, units, norms, sim }
    }
}

fn candidates(a: usize, b: usize, neg: Negatives) -> impl Iterator<Item = usize> {
    let other = if a < b { b..2 * b } else { 0..b };
    (0..2 * b).filter(move |&k| k != a && (neg == Negatives::Pooled || other.contains(&k)))
}

fn partner(a: usize, b: usize) -> usize {
    if a < b {
        a + b
    } else {
        a - b
    }
}

fn anchor_weight(b: usize, r: Reduction) -> f64 {
    match r {
        Reduction::Average => 1.0 / (2 * b) as f64,
        Reduction::Sum => 1.0 / b as f64,
    }
}

/// Per-anchor softmax over its candidates; returns `(loss, probs)`.
fn anchor_terms(p: &Pooled, a: usize, cfg: &NceConfig) -> (f64, Vec<(usize, f64)>) {
    let ks: Vec<usize> = candidates(a, p.b, cfg.negatives).collect();
    let logits: Vec<f64> = ks.iter().map(|&k| p.sim[a][k] / cfg.tau).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    let lse = m + z.ln();
    let loss = lse - p.sim[a][partner(a, p.b)] / cfg.tau;
    let probs = ks.iter().zip(&logits).map(|(&k, l)| (k, (l - lse).exp())).collect();
    (loss.max(0.0), probs)
}

pub fn info_nce(batch: &EmbeddingBatch, cfg: &NceConfig) -> Result<NceOutput> {
    if cfg.tau <= 0.0 {
        return Err(Error::Shape("temperature must be positive".into()));
    }
    let p = batch.pooled();
    let w = anchor_weight(p.b, cfg.reduction);
    let loss = (0..2 * p.b).map(|a| anchor_terms(&p, a, cfg).0).sum::<f64>() * w;
    Ok(NceOutput { loss, similarity: p.sim })
}

pub fn info_nce_grad(batch: &EmbeddingBatch, cfg: &NceConfig) -> Result<NceGrad> {
    if cfg.tau <= 0.0 {
        return Err(Error::Shape("temperature must be positive".into()));
    }
    let p = batch.pooled();
    let n = 2 * p.b;
    let d = p.units[0].len();
    let w = anchor_weight(p.b, cfg.reduction);
    let mut d_unit = vec![vec![0.0; d]; n];
    let mut d_tau = 0.0;
    let mut loss = 0.0;
    for a in 0..n {
        let (l, probs) = anchor_terms(&p, a, cfg);
        loss += l;
        let pos = partner(a, p.b);
        let mut mean_s = 0.0;
        for &(k, pk) in &probs {
            let g = w * (pk - if k == pos { 1.0 } else { 0.0 }) / cfg.tau;
            mean_s += pk * p.sim[a][k];
            for j in 0..d {
                d_unit[a][j] += g * p.units[k][j];
                d_unit[k][j] += g * p.units[a][j];
            }
        }
        d_tau += w * (p.sim[a][pos] - mean_s) / (cfg.tau * cfg.tau);
    }
    // Chain through u = x/‖x‖: dx = (du − u(u·du))/‖x‖.
    let d_x: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let u = &p.units[i];
            let r = dot(u, &d_unit[i]);
            (0..d).map(|j| (d_unit[i][j] - u[j] * r) / p.norms[i]).collect()
        })
        .collect();
    let (d_seq, d_cloud) = d_x.split_at(p.b);
    Ok(NceGrad {
        loss: loss * w,
        d_cloud: d_cloud.to_vec(),
        d_seq: d_seq.to_vec(),
        d_tau,
    })
}
