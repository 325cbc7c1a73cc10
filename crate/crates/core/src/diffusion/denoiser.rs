use crate::error::{Error, Result};

use super::TokenLattice;

/// Maps a lattice at step `t` and a condition vector to one distribution over
/// the `K` clean tokens per position.
pub trait Denoiser: Sync {
    fn predict(&self, x_t: &TokenLattice, c: &[f64]) -> Result<Vec<Vec<f64>>>;
}

/// Point mass on a known clean sequence.
#[derive(Clone, Debug)]
pub struct Oracle {
    pub target: Vec<usize>,
}

impl Denoiser for Oracle {
    fn predict(&self, x_t: &TokenLattice, _: &[f64]) -> Result<Vec<Vec<f64>>> {
        if self.target.len() != x_t.len() {
            return Err(Error::Shape(format!("oracle knows {} positions, lattice has {}", self.target.len(), x_t.len())));
        }
        self.target
            .iter()
            .map(|&v| {
                if v >= x_t.k {
                    return Err(Error::Shape(format!("oracle token {v} outside vocabulary {}", x_t.k)));
                }
                let mut row = vec![0.0; x_t.k];
                row[v] = 1.0;
                Ok(row)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Uniform;

impl Denoiser for Uniform {
    fn predict(&self, x_t: &TokenLattice, _: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![vec![1.0 / x_t.k as f64; x_t.k]; x_t.len()])
    }
}

/// Unigram token statistics of a corpus, either pooled over positions or
/// kept per position. Ignores the noisy lattice and the condition.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyTable {
    pub k: usize,
    /// One row when pooled, otherwise one row per position.
    pub rows: Vec<Vec<f64>>,
    pub positional: bool,
}

impl FrequencyTable {
    /// Counts tokens with additive smoothing `alpha`. Positions beyond the
    /// longest sequence fall back to the pooled row.
    pub fn fit(corpus: &[Vec<usize>], k: usize, positional: bool, alpha: f64) -> Result<Self> {
        if corpus.is_empty() || k == 0 {
            return Err(Error::InsufficientData("frequency table needs a corpus".into()));
        }
        if let Some(v) = corpus.iter().flatten().find(|&&v| v >= k) {
            return Err(Error::Shape(format!("token {v} outside vocabulary {k}")));
        }
        let normalize = |counts: Vec<f64>| -> Vec<f64> {
            let s: f64 = counts.iter().map(|c| c + alpha).sum();
            counts.iter().map(|c| (c + alpha) / s).collect()
        };
        let mut pooled = vec![0.0; k];
        corpus.iter().flatten().for_each(|&v| pooled[v] += 1.0);
        if pooled.iter().sum::<f64>() == 0.0 && alpha <= 0.0 {
            return Err(Error::InsufficientData("empty corpus".into()));
        }
        let mut rows = vec![normalize(pooled)];
        if positional {
            let len = corpus.iter().map(Vec::len).max().unwrap_or(0);
            for i in 0..len {
                let mut c = vec![0.0; k];
                corpus.iter().filter_map(|s| s.get(i)).for_each(|&v| c[v] += 1.0);
                rows.push(normalize(c));
            }
        }
        Ok(FrequencyTable { k, rows, positional })
    }

    fn row(&self, i: usize) -> &[f64] {
        if self.positional {
            self.rows.get(i + 1).unwrap_or(&self.rows[0])
        } else {
            &self.rows[0]
        }
    }
}

impl Denoiser for FrequencyTable {
    fn predict(&self, x_t: &TokenLattice, _: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x_t.k != self.k {
            return Err(Error::Shape(format!("table vocabulary {} vs lattice {}", self.k, x_t.k)));
        }
        Ok((0..x_t.len()).map(|i| self.row(i).to_vec()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unigram_rows() {
        let t = FrequencyTable::fit(&[vec![0, 1, 1], vec![0, 2]], 3, true, 0.0).unwrap();
        let x = TokenLattice::new(vec![3; 4], 2, 3).unwrap();
        let p = t.predict(&x, &[]).unwrap();
        assert_eq!(p[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(p[1], vec![0.0, 0.5, 0.5]);
        assert_eq!(p[3], vec![0.4, 0.4, 0.2]);
        let pooled = FrequencyTable::fit(&[vec![0, 1, 1], vec![0, 2]], 3, false, 1.0).unwrap();
        assert_eq!(pooled.predict(&x, &[]).unwrap()[1], vec![3.0 / 8.0, 3.0 / 8.0, 2.0 / 8.0]);
        assert!(FrequencyTable::fit(&[vec![5]], 3, false, 0.0).is_err());
    }
}
