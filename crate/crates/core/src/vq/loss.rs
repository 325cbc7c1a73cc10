use crate::error::{Error, Result};

use super::Level;

/// Reconstruction MSE weight.
pub const W_MSE: f64 = 1.0;
/// Reconstruction cross-entropy weight.
pub const W_CE: f64 = 0.5;
/// Closure weight.
pub const W_CLOSURE: f64 = 1.0;
/// Lower clamp applied to predicted probabilities.
pub const CE_CLAMP: f64 = 1e-12;

/// A feature split into its continuous fields and its type distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub continuous: Vec<f64>,
    /// One-hot for targets, a probability vector for predictions; empty for
    /// levels without a type slot.
    pub type_probs: Vec<f64>,
}

impl FeatureRecord {
    /// Splits a raw feature of `level`. The type slot is turned into a
    /// distribution by clamping to `[CE_CLAMP, 1]` and renormalizing.
    pub fn from_features(level: Level, f: &[f64]) -> Result<Self> {
        if f.len() != level.raw_dim() {
            return Err(Error::Dimension {
                expected: level.raw_dim(),
                actual: f.len(),
            });
        }
        let split = level.raw_dim() - level.type_dim();
        let clamped: Vec<f64> = f[split..].iter().map(|p| p.clamp(CE_CLAMP, 1.0)).collect();
        let s: f64 = clamped.iter().sum();
        Ok(FeatureRecord {
            continuous: f[..split].to_vec(),
            type_probs: clamped.iter().map(|p| p / s).collect(),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub recon_mse: f64,
    pub recon_ce: f64,
    pub vq_codebook_term: f64,
    pub vq_commit_term: f64,
    pub closure: f64,
    pub total: f64,
}

/// `−Σ target·ln(clamp(pred))` with natural log.
pub fn cross_entropy(target: &[f64], pred: &[f64]) -> f64 {
    target
        .iter()
        .zip(pred)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, p)| -t * p.clamp(CE_CLAMP, 1.0).ln())
        .sum()
}

/// Loss values of one batch. VQ terms and reconstruction terms are means
/// over the batch; `closure` is the squared closure residual.
pub fn compute_losses(
    raw: &[FeatureRecord],
    reconstructed: &[FeatureRecord],
    z_e: &[Vec<f64>],
    z_q: &[Vec<f64>],
    cc_closure_residual: f64,
) -> Result<LossReport> {
    if raw.len() != reconstructed.len() {
        return Err(Error::Shape(format!("{} targets vs {} reconstructions", raw.len(), reconstructed.len())));
    }
    if z_e.len() != z_q.len() {
        return Err(Error::Shape(format!("{} encodings vs {} codes", z_e.len(), z_q.len())));
    }
    let mut se = 0.0;
    let mut n_cont = 0usize;
    let mut ce = 0.0;
    let mut n_typed = 0usize;
    for (a, b) in raw.iter().zip(reconstructed) {
        if a.continuous.len() != b.continuous.len() || a.type_probs.len() != b.type_probs.len() {
            return Err(Error::Shape("record layouts differ".into()));
        }
        se += a.continuous.iter().zip(&b.continuous).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        n_cont += a.continuous.len();
        if !a.type_probs.is_empty() {
            ce += cross_entropy(&a.type_probs, &b.type_probs);
            n_typed += 1;
        }
    }
    let mut vq = 0.0;
    for (e, q) in z_e.iter().zip(z_q) {
        if e.len() != q.len() {
            return Err(Error::Shape("latent widths differ".into()));
        }
        vq += e.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    let recon_mse = if n_cont > 0 { se / n_cont as f64 } else { 0.0 };
    let recon_ce = if n_typed > 0 { ce / n_typed as f64 } else { 0.0 };
    let vq_codebook_term = if z_e.is_empty() { 0.0 } else { vq / z_e.len() as f64 };
    let vq_commit_term = 0.25 * vq_codebook_term;
    let closure = cc_closure_residual * cc_closure_residual;
    Ok(LossReport {
        recon_mse,
        recon_ce,
        vq_codebook_term,
        vq_commit_term,
        closure,
        total: W_MSE * recon_mse + W_CE * recon_ce + vq_codebook_term + vq_commit_term + W_CLOSURE * closure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(c: &[f64], t: &[f64]) -> FeatureRecord {
        FeatureRecord {
            continuous: c.to_vec(),
            type_probs: t.to_vec(),
        }
    }

    #[test]
    fn perfect_reconstruction_is_free() {
        let r = vec![rec(&[1.0, 2.0], &[1.0, 0.0, 0.0])];
        let z = vec![vec![0.5, 0.5]];
        let rep = compute_losses(&r, &r, &z, &z, 0.0).unwrap();
        assert_eq!(rep, LossReport::default());
    }

    #[test]
    fn ce_of_half() {
        let ce = cross_entropy(&[1.0, 0.0, 0.0], &[0.5, 0.25, 0.25]);
        assert!((ce - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn closure_gap_squared() {
        let r = vec![rec(&[0.0], &[])];
        let rep = compute_losses(&r, &r, &[], &[], 0.1).unwrap();
        assert!((rep.closure - 0.01).abs() < 1e-15);
        assert!((rep.total - 0.01).abs() < 1e-15);
    }

    #[test]
    fn weighted_total() {
        let a = vec![rec(&[0.0, 0.0], &[1.0, 0.0, 0.0])];
        let b = vec![rec(&[1.0, 1.0], &[0.5, 0.25, 0.25])];
        let rep = compute_losses(&a, &b, &[vec![0.0]], &[vec![2.0]], 0.5).unwrap();
        let expect = 1.0 + 0.5 * std::f64::consts::LN_2 + 4.0 + 1.0 + 0.25;
        assert!((rep.total - expect).abs() < 1e-12);
        assert_eq!(rep.vq_codebook_term, 4.0 * rep.vq_commit_term);
    }

    #[test]
    fn shape_mismatch() {
        let a = vec![rec(&[0.0], &[])];
        assert!(matches!(compute_losses(&a, &[], &[], &[], 0.0), Err(Error::Shape(_))));
    }

    #[test]
    fn record_split() {
        let r = FeatureRecord::from_features(Level::Cc, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r.continuous.len(), 5);
        assert!((r.type_probs[1] - 1.0).abs() < 1e-11);
    }
}
