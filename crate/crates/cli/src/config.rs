//! Run configuration: TOML file, then flag overrides, echoed into outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; falls back to `CADSEQ_SEED`, then 0.
    pub seed: Option<u64>,
    pub encode: EncodeConfig,
    pub geometry: GeometryConfig,
    pub sample: SampleConfig,
    pub resample: ResampleConfig,
    pub codebook: CodebookConfig,
    pub diffuse: DiffuseConfig,
    pub metrics: MetricsConfig,
    pub align: AlignConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            alpha: cadseq::canonize::DEFAULT_ALPHA,
            beta: cadseq::canonize::DEFAULT_BETA,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub linear_deflection: f64,
    pub angular_deflection: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let d = cadseq::geom::Deflection::default();
        GeometryConfig {
            linear_deflection: d.linear,
            angular_deflection: d.angular,
        }
    }
}

impl GeometryConfig {
    pub fn deflection(&self) -> cadseq::geom::Deflection {
        cadseq::geom::Deflection {
            linear: self.linear_deflection,
            angular: self.angular_deflection,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub points: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            points: cadseq::geom::DEFAULT_POINTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleConfig {
    pub points: usize,
    pub lambda: f64,
    pub beta: f64,
    pub k: usize,
    pub replacement: bool,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig {
            points: 2048,
            lambda: cadseq::pointops::DEFAULT_LAMBDA,
            beta: cadseq::pointops::DEFAULT_TEMPERATURE,
            k: cadseq::pointops::DEFAULT_K,
            replacement: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    pub k: usize,
    pub d_latent: usize,
    pub mode: String,
    pub iters: usize,
    pub decay: f64,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        CodebookConfig {
            k: 64,
            d_latent: 64,
            mode: "kmeans".into(),
            iters: 100,
            decay: 0.99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffuseConfig {
    pub steps: usize,
    pub count: usize,
    pub conditioning: String,
    pub smoothing: f64,
    pub codebook_k: usize,
    pub d_latent: usize,
    pub lambda_aux: f64,
}

impl Default for DiffuseConfig {
    fn default() -> Self {
        let d = cadseq::pipeline::DemoConfig::default();
        DiffuseConfig {
            steps: cadseq::diffusion::DEFAULT_STEPS,
            count: 1,
            conditioning: d.conditioning.as_str().into(),
            smoothing: d.smoothing,
            codebook_k: d.codebook_k,
            d_latent: d.d_latent,
            lambda_aux: cadseq::diffusion::DEFAULT_LAMBDA_AUX,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub points: usize,
    pub match_threshold: f64,
    pub voxel_grid: usize,
    pub dup_threshold: f64,
    /// `ref_to_gen` or `gen_to_ref`.
    pub mmd_direction: String,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        let m = cadseq::metrics::MetricConfig::default();
        MetricsConfig {
            points: m.n_points,
            match_threshold: m.match_threshold,
            voxel_grid: m.voxel_grid,
            dup_threshold: m.dup_threshold,
            mmd_direction: "ref_to_gen".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub tau: f64,
    /// `pooled` or `cross_modal`.
    pub negatives: String,
    /// `average` or `sum`.
    pub reduction: String,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            tau: cadseq::align::NceConfig::default().tau,
            negatives: "pooled".into(),
            reduction: "average".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))
            }
        }
    }

    /// Flag, then config file, then `CADSEQ_SEED`, then 0.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64, String> {
        let seed = match (flag, self.seed) {
            (Some(s), _) | (None, Some(s)) => s,
            (None, None) => match std::env::var("CADSEQ_SEED") {
                Ok(v) => v.trim().parse().map_err(|_| format!("CADSEQ_SEED is not an integer: {v:?}"))?,
                Err(_) => 0,
            },
        };
        self.seed = Some(seed);
        Ok(seed)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_json()).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = toml::from_str("seed = 7\n[resample]\nlambda = 0.5\n").unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.resample.lambda, 0.5);
        assert_eq!(c.resample.k, 16);
        assert!(toml::from_str::<RunConfig>("[resample]\nlamda = 0.5\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.encode.alpha = 11.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
