use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::Level;

pub const DEFAULT_LATENT: usize = 512;

/// Deterministic affine map from a level's raw feature to the latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub level: Level,
    /// `D_latent × D_raw`.
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub seed: u64,
    pinv: DMatrix<f64>,
}

impl Projection {
    pub fn new(level: Level, weight: DMatrix<f64>, bias: DVector<f64>, seed: u64) -> Result<Self> {
        if weight.ncols() != level.raw_dim() {
            return Err(Error::Dimension {
                expected: level.raw_dim(),
                actual: weight.ncols(),
            });
        }
        if bias.len() != weight.nrows() {
            return Err(Error::Dimension {
                expected: weight.nrows(),
                actual: bias.len(),
            });
        }
        let pinv = weight
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Shape(format!("projection is not invertible: {e}")))?;
        Ok(Projection {
            level,
            weight,
            bias,
            seed,
            pinv,
        })
    }

    /// Gaussian weights with variance `1/D_raw` and a small Gaussian bias.
    pub fn seeded(level: Level, d_latent: usize, seed: u64) -> Self {
        let d_raw = level.raw_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(level.tag() as u64 + 1)));
        let w = Normal::new(0.0, (1.0 / d_raw as f64).sqrt()).expect("positive variance");
        let b = Normal::new(0.0, 0.01).expect("positive variance");
        let weight = DMatrix::from_fn(d_latent, d_raw, |_, _| w.sample(&mut rng));
        let bias = DVector::from_fn(d_latent, |_, _| b.sample(&mut rng));
        Projection::new(level, weight, bias, seed).expect("full column rank with probability one")
    }

    pub fn identity(level: Level) -> Self {
        let d = level.raw_dim();
        Projection::new(level, DMatrix::identity(d, d), DVector::zeros(d), 0).expect("identity is invertible")
    }

    pub fn d_latent(&self) -> usize {
        self.weight.nrows()
    }

    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.level.raw_dim() {
            return Err(Error::Dimension {
                expected: self.level.raw_dim(),
                actual: raw.len(),
            });
        }
        let x = DVector::from_column_slice(raw);
        Ok((&self.weight * x + &self.bias).as_slice().to_vec())
    }

    /// Least-squares inverse of [`Projection::apply`].
    pub fn invert(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.d_latent() {
            return Err(Error::Dimension {
                expected: self.d_latent(),
                actual: z.len(),
            });
        }
        let v = DVector::from_column_slice(z) - &self.bias;
        Ok((&self.pinv * v).as_slice().to_vec())
    }
}

pub fn project(level: Level, raw: &[f64], proj: &Projection) -> Result<Vec<f64>> {
    if level != proj.level {
        return Err(Error::Shape(format!(
            "projection is for level {}, not {}",
            proj.level.as_str(),
            level.as_str()
        )));
    }
    proj.apply(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_maps_to_zero_without_bias() {
        let p = Projection::new(Level::Sp, DMatrix::from_element(4, 6, 0.5), DVector::zeros(4), 0);
        // Rank one: still a valid map even though the inverse is lossy.
        let p = p.unwrap();
        assert_eq!(p.apply(&[0.0; 6]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn identity_passthrough() {
        let p = Projection::identity(Level::Cc);
        let x = [0.5, -1.0, 2.0, 0.0, 1e-3, 0.0, 1.0, 0.0];
        assert_eq!(project(Level::Cc, &x, &p).unwrap(), x.to_vec());
    }

    #[test]
    fn seeded_is_deterministic_and_invertible() {
        let a = Projection::seeded(Level::Eb, DEFAULT_LATENT, 7);
        let b = Projection::seeded(Level::Eb, DEFAULT_LATENT, 7);
        let x = [0.0, 0.0, 1.0, 0.25, -0.5, 0.0, 1.0, 1.0, 0.0, 0.0];
        let za = a.apply(&x).unwrap();
        let zb = b.apply(&x).unwrap();
        assert!(za.iter().zip(&zb).all(|(u, v)| u.to_bits() == v.to_bits()));
        let back = a.invert(&za).unwrap();
        for (u, v) in back.iter().zip(&x) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_checked() {
        let p = Projection::identity(Level::Sp);
        assert!(matches!(p.apply(&[1.0; 5]), Err(Error::Dimension { expected: 6, actual: 5 })));
        assert!(project(Level::Eb, &[0.0; 6], &p).is_err());
    }
}
