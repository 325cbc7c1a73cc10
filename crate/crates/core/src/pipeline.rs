//! End-to-end flows over a program corpus: codec round trips and the
//! unigram diffusion demo.

use std::path::Path;

use crate::cadprog::{normalize_program, parse_program, CadProgram};
use crate::canonize::{decode_program_with_residuals, encode_program, HierTokens, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::diffusion::{linear_schedule, sample_with, FrequencyTable, ReverseOptions};
use crate::error::{Error, Result};
use crate::geom::{extract_mesh_with, sample_solid_with, Deflection, SolidSample};
use crate::metrics::{
    acc_comp_with, chamfer_with, hanging_faces, population_metrics, primitive_pr, seg_accuracy, validity_novelty_uniqueness,
    MetricConfig, PopulationReport, ValidityReport,
};
use crate::vq::{Lattice, LatticeCodec};
use crate::{Execution, V3};

/// Every `*.json` program in `dir`, sorted by file name.
pub fn load_programs(dir: &Path) -> Result<Vec<(String, CadProgram)>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let prog = parse_program(&std::fs::read_to_string(&p)?)
                .map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
            Ok((name, prog))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrip {
    pub chamfer: f64,
    /// Closure residual of every decoded loop.
    pub residuals: Vec<f64>,
    pub tokens: HierTokens,
}

impl RoundTrip {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }
}

/// Encodes, serializes, parses back, decodes and compiles `p`, then measures
/// the Chamfer distance between samples of the two solids.
pub fn roundtrip(p: &CadProgram, n_points: usize, seed: u64, exec: Execution) -> Result<RoundTrip> {
    let tokens = encode_program(p, DEFAULT_ALPHA, DEFAULT_BETA)?;
    let parsed = HierTokens::from_json_str(&tokens.to_json_string())?;
    let (decoded, residuals) = decode_program_with_residuals(&parsed)?;
    let defl = Deflection::default();
    let a = sample_solid_with(p, n_points, seed, defl, exec)?;
    let b = sample_solid_with(&decoded, n_points, seed, defl, exec)?;
    Ok(RoundTrip {
        chamfer: chamfer_with(&a.points, &b.points, exec)?,
        residuals,
        tokens,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemoConfig {
    /// Upper bound on entries per codebook.
    pub codebook_k: usize,
    pub d_latent: usize,
    pub kmeans_iters: usize,
    pub steps: usize,
    pub samples: usize,
    pub conditioning: Conditioning,
    pub smoothing: f64,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            codebook_k: 256,
            d_latent: 64,
            kmeans_iters: 50,
            steps: 100,
            samples: 40,
            conditioning: Conditioning::Length,
            smoothing: 0.0,
            seed: 0,
        }
    }
}

/// Which corpus lattices feed the positional table used for one sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Conditioning {
    /// Every lattice, padded to the longest.
    Pooled,
    /// Lattices whose length equals the sampled length.
    #[default]
    Length,
    /// Lattices whose symbol classes (EB, SP, curve, EOS) match position by
    /// position those of a reference lattice.
    Skeleton,
}

impl Conditioning {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pooled" => Some(Conditioning::Pooled),
            "length" => Some(Conditioning::Length),
            "skeleton" => Some(Conditioning::Skeleton),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Conditioning::Pooled => "pooled",
            Conditioning::Length => "length",
            Conditioning::Skeleton => "skeleton",
        }
    }
}

/// A lattice codec fitted on a corpus together with the corpus lattices.
#[derive(Clone, Debug)]
pub struct UnigramModel {
    pub codec: LatticeCodec,
    /// Unpadded lattice of each corpus entry.
    pub lattices: Vec<Vec<usize>>,
    pub smoothing: f64,
}

impl UnigramModel {
    pub fn fit(corpus: &[HierTokens], cfg: &DemoConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::InsufficientData("empty corpus".into()));
        }
        let codec = LatticeCodec::fit(corpus, cfg.codebook_k, cfg.d_latent, cfg.kmeans_iters, cfg.seed)?;
        let lattices = corpus
            .iter()
            .map(|t| codec.encode(t, None).map(|l| l.tokens))
            .collect::<Result<_>>()?;
        Ok(UnigramModel {
            codec,
            lattices,
            smoothing: cfg.smoothing,
        })
    }

    pub fn max_len(&self) -> usize {
        self.lattices.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Positional unigram table for samples modelled on corpus entry `like`.
    /// Returns the table and the lattice length to sample.
    pub fn table(&self, like: usize, mode: Conditioning) -> Result<(FrequencyTable, usize)> {
        let reference = self
            .lattices
            .get(like)
            .ok_or_else(|| Error::InsufficientData(format!("no corpus entry {like}")))?;
        let (rows, len): (Vec<Vec<usize>>, usize) = match mode {
            Conditioning::Pooled => {
                let len = self.max_len();
                let pad = self.codec.pad();
                let rows = self
                    .lattices
                    .iter()
                    .map(|l| {
                        let mut l = l.clone();
                        l.resize(len, pad);
                        l
                    })
                    .collect();
                (rows, len)
            }
            Conditioning::Length => (
                self.lattices.iter().filter(|l| l.len() == reference.len()).cloned().collect(),
                reference.len(),
            ),
            Conditioning::Skeleton => {
                let skel = self.codec.skeleton(reference)?;
                let mut rows = Vec::new();
                for l in &self.lattices {
                    if self.codec.skeleton(l)? == skel {
                        rows.push(l.clone());
                    }
                }
                (rows, reference.len())
            }
        };
        Ok((FrequencyTable::fit(&rows, self.codec.vocab(), true, self.smoothing)?, len))
    }
}

/// Decodes a lattice through the codec and compiles the program; `Ok` means
/// a non-empty solid.
pub fn lattice_to_program(codec: &LatticeCodec, lattice: &Lattice, exec: Execution) -> Result<CadProgram> {
    let tokens = codec.decode(lattice)?;
    let (p, _) = decode_program_with_residuals(&tokens)?;
    extract_mesh_with(&p, Deflection::default(), exec)?;
    Ok(p)
}

#[derive(Debug)]
pub struct DemoSample {
    pub lattice: Lattice,
    pub outcome: std::result::Result<CadProgram, Error>,
}

#[derive(Debug)]
pub struct DemoReport {
    pub vocab: usize,
    pub samples: Vec<DemoSample>,
}

impl DemoReport {
    /// Fraction of samples that fail to decode or compile.
    pub fn invalid_ratio(&self) -> f64 {
        let bad = self.samples.iter().filter(|s| s.outcome.is_err()).count();
        bad as f64 / self.samples.len().max(1) as f64
    }
}

/// Fits the unigram model on `corpus` and samples `cfg.samples` lattices by
/// ancestral diffusion, then tries to compile each. Sample `i` is modelled
/// on corpus entry `i mod n`, so lattice lengths follow the corpus.
pub fn unigram_demo(corpus: &[CadProgram], cfg: &DemoConfig, exec: Execution) -> Result<DemoReport> {
    let tokens: Vec<HierTokens> = corpus
        .iter()
        .map(|p| encode_program(p, DEFAULT_ALPHA, DEFAULT_BETA))
        .collect::<Result<_>>()?;
    let model = UnigramModel::fit(&tokens, cfg)?;
    let schedule = linear_schedule(cfg.steps)?;
    let opts = ReverseOptions { exec, ..ReverseOptions::default() };
    let samples = (0..cfg.samples)
        .map(|i| {
            let (table, len) = model.table(i % model.lattices.len(), cfg.conditioning)?;
            let lat = sample_with(&table, &[], len, table.k, &schedule, cfg.seed.wrapping_add(i as u64), opts)?;
            let lattice = Lattice { tokens: lat.tokens, k: lat.k };
            let outcome = lattice_to_program(&model.codec, &lattice, exec);
            Ok(DemoSample { lattice, outcome })
        })
        .collect::<Result<_>>()?;
    Ok(DemoReport {
        vocab: model.codec.vocab(),
        samples,
    })
}

/// Metrics of one generated program against its ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairMetrics {
    pub chamfer: f64,
    pub hanging_faces: f64,
    pub seg_accuracy: f64,
    pub acc_err: f64,
    pub comp_err: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug)]
pub struct BatteryReport {
    /// Per pair; `Err` when the generated program does not compile.
    pub pairs: Vec<std::result::Result<PairMetrics, Error>>,
    pub population: Option<PopulationReport>,
    pub validity: ValidityReport,
}

struct Evaluated {
    sample: SolidSample,
    hf: f64,
}

fn evaluate_one(p: &CadProgram, cfg: &MetricConfig) -> Result<Evaluated> {
    let n = normalize_program(p)?;
    let mesh = extract_mesh_with(&n, Deflection::default(), Execution::Sequential)?;
    let sample = sample_solid_with(&n, cfg.n_points, cfg.seed, Deflection::default(), Execution::Sequential)?;
    Ok(Evaluated { sample, hf: hanging_faces(&mesh)? })
}

/// Runs every metric over `(generated, ground truth)` pairs. Shapes are
/// normalized to `[-1, 1]³` first. Novelty is measured against `train`, or
/// against the ground-truth set when `train` is `None`.
pub fn evaluate_pairs(
    pairs: &[(Result<CadProgram>, CadProgram)],
    train: Option<&[Vec<V3>]>,
    cfg: &MetricConfig,
    exec: Execution,
) -> Result<BatteryReport> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptySet);
    }
    let gts = exec
        .map(pairs, |(_, gt)| evaluate_one(gt, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let gens: Vec<std::result::Result<Evaluated, Error>> = exec.map(pairs, |(g, _)| match g {
        Ok(p) => evaluate_one(p, cfg),
        Err(e) => Err(Error::Format(e.to_string())),
    });
    let mut metrics = Vec::with_capacity(pairs.len());
    for (g, t) in gens.iter().zip(&gts) {
        metrics.push(match g {
            Ok(g) => {
                let (acc_err, comp_err) = acc_comp_with(&g.sample.points, &t.sample.points, exec)?;
                let (precision, recall) = primitive_pr(&g.sample, &t.sample, cfg.match_threshold)?;
                Ok(PairMetrics {
                    chamfer: 0.5 * (acc_err + comp_err),
                    hanging_faces: g.hf,
                    seg_accuracy: seg_accuracy(&g.sample, &t.sample)?,
                    acc_err,
                    comp_err,
                    precision,
                    recall,
                })
            }
            Err(e) => Err(Error::Format(e.to_string())),
        });
    }
    let gen_clouds: Vec<Option<Vec<V3>>> = gens.iter().map(|g| g.as_ref().ok().map(|g| g.sample.points.clone())).collect();
    let ref_clouds: Vec<Vec<V3>> = gts.iter().map(|t| t.sample.points.clone()).collect();
    let valid: Vec<Vec<V3>> = gen_clouds.iter().flatten().cloned().collect();
    let population = if valid.is_empty() {
        None
    } else {
        Some(population_metrics(&valid, &ref_clouds, cfg, exec)?)
    };
    let validity = validity_novelty_uniqueness(&gen_clouds, train.unwrap_or(&ref_clouds), cfg, exec)?;
    Ok(BatteryReport {
        pairs: metrics,
        population,
        validity,
    })
}
