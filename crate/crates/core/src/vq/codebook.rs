use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par::Execution;

use super::Level;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    KMeans,
    Ema,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::KMeans => "kmeans",
            TrainMode::Ema => "ema",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Some(TrainMode::KMeans),
            "ema" => Some(TrainMode::Ema),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub level: Level,
    pub entries: Vec<Vec<f64>>,
    pub usage_counts: Vec<u64>,
    pub ema_cluster_size: Vec<f64>,
    pub ema_embed_sum: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn from_entries(level: Level, entries: Vec<Vec<f64>>) -> Result<Self> {
        let d = entries.first().map_or(0, Vec::len);
        if let Some(bad) = entries.iter().find(|e| e.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                actual: bad.len(),
            });
        }
        if entries.iter().flatten().any(|x| x.is_nan()) {
            return Err(Error::Shape("codebook entry is NaN".into()));
        }
        let k = entries.len();
        Ok(Codebook {
            level,
            ema_embed_sum: entries.clone(),
            entries,
            usage_counts: vec![0; k],
            ema_cluster_size: vec![1.0; k],
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest entry (ties to the smallest index) and its squared
/// distance; `None` for an empty table.
pub fn nearest(z: &[f64], entries: &[Vec<f64>]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, e) in entries.iter().enumerate() {
        let d = sq_dist(z, e);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Quantized {
    pub index: usize,
    pub z_q: Vec<f64>,
    /// `‖sg[z_e] − z_q‖²`.
    pub codebook_term: f64,
    /// `0.25·‖z_e − sg[z_q]‖²`.
    pub commit_term: f64,
}

pub fn quantize(z_e: &[f64], cb: &Codebook) -> Result<Quantized> {
    if cb.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    if z_e.len() != cb.dim() {
        return Err(Error::Dimension {
            expected: cb.dim(),
            actual: z_e.len(),
        });
    }
    let (index, d) = nearest(z_e, &cb.entries).expect("non-empty");
    Ok(Quantized {
        index,
        z_q: cb.entries[index].clone(),
        codebook_term: d,
        commit_term: 0.25 * d,
    })
}

pub fn quantize_batch(z: &[Vec<f64>], cb: &Codebook, exec: Execution) -> Result<Vec<Quantized>> {
    exec.map(z, |v| quantize(v, cb)).into_iter().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Total squared quantization error of the training features, once
    /// before the first update and after every iteration.
    pub error_history: Vec<f64>,
}

fn total_error(features: &[Vec<f64>], entries: &[Vec<f64>]) -> f64 {
    features.iter().map(|f| nearest(f, entries).expect("non-empty").1).sum()
}

fn kmeans_pp(features: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![features[rng.random_range(0..features.len())].clone()];
    let mut d2: Vec<f64> = features.iter().map(|f| sq_dist(f, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = features.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > r && *d > 0.0 {
                    idx = i;
                    break;
                }
            }
            while d2[idx] == 0.0 && idx > 0 {
                idx -= 1;
            }
            idx
        } else {
            rng.random_range(0..features.len())
        };
        centers.push(features[pick].clone());
        for (i, f) in features.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(f, &centers[centers.len() - 1]));
        }
    }
    centers
}

fn assign(features: &[Vec<f64>], entries: &[Vec<f64>]) -> Vec<usize> {
    features.iter().map(|f| nearest(f, entries).expect("non-empty").0).collect()
}

pub fn train_codebook(
    level: Level,
    features: &[Vec<f64>],
    k: usize,
    mode: TrainMode,
    iters: usize,
    decay: f64,
    seed: u64,
) -> Result<Codebook> {
    train_codebook_report(level, features, k, mode, iters, decay, seed).map(|(c, _)| c)
}

/// Trains a codebook and records the quantization error per iteration.
pub fn train_codebook_report(
    level: Level,
    features: &[Vec<f64>],
    k: usize,
    mode: TrainMode,
    iters: usize,
    decay: f64,
    seed: u64,
) -> Result<(Codebook, TrainReport)> {
    if k < 2 {
        return Err(Error::InsufficientData("a codebook needs at least two entries".into()));
    }
    if features.len() < k {
        return Err(Error::InsufficientData(format!("{} features for {k} entries", features.len())));
    }
    let d = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            actual: bad.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = kmeans_pp(features, k, &mut rng);
    let mut history = vec![total_error(features, &entries)];
    let mut cluster_size = vec![0.0; k];
    let mut embed_sum = vec![vec![0.0; d]; k];
    match mode {
        TrainMode::KMeans => {
            let mut labels = assign(features, &entries);
            for _ in 0..iters {
                let mut sums = vec![vec![0.0; d]; k];
                let mut counts = vec![0usize; k];
                for (f, &l) in features.iter().zip(&labels) {
                    counts[l] += 1;
                    for (s, x) in sums[l].iter_mut().zip(f) {
                        *s += x;
                    }
                }
                for j in 0..k {
                    if counts[j] > 0 {
                        entries[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
                    }
                    cluster_size[j] = counts[j] as f64;
                    embed_sum[j] = sums[j].clone();
                }
                let next = assign(features, &entries);
                history.push(total_error(features, &entries));
                if next == labels {
                    break;
                }
                labels = next;
            }
        }
        TrainMode::Ema => {
            cluster_size = vec![1.0; k];
            embed_sum = entries.clone();
            for _ in 0..iters {
                let labels = assign(features, &entries);
                let mut sums = vec![vec![0.0; d]; k];
                let mut counts = vec![0usize; k];
                for (f, &l) in features.iter().zip(&labels) {
                    counts[l] += 1;
                    for (s, x) in sums[l].iter_mut().zip(f) {
                        *s += x;
                    }
                }
                for j in 0..k {
                    cluster_size[j] = decay * cluster_size[j] + (1.0 - decay) * counts[j] as f64;
                    for (e, s) in embed_sum[j].iter_mut().zip(&sums[j]) {
                        *e = decay * *e + (1.0 - decay) * s;
                    }
                }
                let n: f64 = cluster_size.iter().sum();
                for j in 0..k {
                    let smoothed = (cluster_size[j] + 1e-5) / (n + k as f64 * 1e-5) * n;
                    entries[j] = embed_sum[j].iter().map(|e| e / smoothed).collect();
                }
                // Dead entries restart at the feature worst served by the table.
                for j in 0..k {
                    if counts[j] == 0 {
                        let far = features
                            .iter()
                            .enumerate()
                            .map(|(i, f)| (i, nearest(f, &entries).expect("non-empty").1))
                            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
                            .0;
                        entries[j] = features[far].clone();
                        cluster_size[j] = 1.0;
                        embed_sum[j] = entries[j].clone();
                    }
                }
                history.push(total_error(features, &entries));
            }
        }
    }
    let mut usage = vec![0u64; k];
    for l in assign(features, &entries) {
        usage[l] += 1;
    }
    Ok((
        Codebook {
            level,
            entries,
            usage_counts: usage,
            ema_cluster_size: cluster_size,
            ema_embed_sum: embed_sum,
        },
        TrainReport { error_history: history },
    ))
}
