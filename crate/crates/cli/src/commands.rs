use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use cadseq::align::{info_nce_grad, EmbeddingBatch, NceConfig, Negatives, Reduction};
use cadseq::cadprog::{parse_program, serialize_program, CadProgram};
use cadseq::canonize::{decode_program_with_residuals, encode_program, HierTokens};
use cadseq::diffusion::{linear_schedule, sample, Oracle, Uniform};
use cadseq::geom::{extract_mesh_with, mesh_to_obj, program_to_step, sample_solid_with};
use cadseq::metrics::{MetricConfig, MmdDirection};
use cadseq::pipeline::{evaluate_pairs, lattice_to_program, load_programs, roundtrip, Conditioning, DemoConfig, UnigramModel};
use cadseq::pointops::{importance_score_with, read_cloud, resample_indices, write_cloud, CloudFile};
use cadseq::vq::{
    load_matrix, save_matrix, train_codebook_report, CodebookMeta, Lattice, LatticeCodec, Level, LevelBook, Projection,
    TrainMode,
};
use cadseq::Execution;

use crate::config::RunConfig;
use crate::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(cadseq::Error),
    /// A self-check did not hold.
    Check(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Check(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<cadseq::Error> for CliError {
    fn from(e: cadseq::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use cadseq::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_compile_failure() => 2,
            CliError::Core(E::ResidualMask(_)) | CliError::Check(_) => 4,
            CliError::Core(_) => 3,
        }
    }
}

type Res<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn ensure_new(path: &Path, force: bool) -> Res<()> {
    if path.exists() && !force {
        return Err(usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(cadseq::Error::from)?;
    }
    Ok(())
}

fn write_new(path: &Path, bytes: &[u8], force: bool) -> Res<()> {
    ensure_new(path, force)?;
    std::fs::write(path, bytes).map_err(cadseq::Error::from)?;
    Ok(())
}

fn read_text(path: &Path) -> Res<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Core(cadseq::Error::Format(format!("{}: {e}", path.display()))))
}

fn read_json(path: &Path) -> Res<Value> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Core(cadseq::Error::Format(format!("{}: {e}", path.display()))))
}

fn read_program(path: &Path) -> Res<CadProgram> {
    Ok(parse_program(&read_text(path)?)?)
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values serialize")
}

/// Adds the effective configuration and its hash to a JSON object.
fn stamp(mut v: Value, cfg: &RunConfig) -> Value {
    if let Some(o) = v.as_object_mut() {
        o.insert("config".into(), cfg.to_json());
        o.insert("config_hash".into(), json!(cfg.hash()));
    }
    v
}

fn program_json(p: &CadProgram, cfg: &RunConfig) -> Value {
    let v: Value = serde_json::from_str(&serialize_program(p)).expect("serialized programs are JSON");
    stamp(v, cfg)
}

/// A command result: a JSON summary and its human rendering.
struct Outcome {
    summary: Value,
    text: String,
}

pub fn run(cli: &Cli, cfg: &mut RunConfig) -> Res<()> {
    cfg.resolve_seed(cli.global.seed).map_err(usage)?;
    let force = cli.global.force;
    let out = match &cli.command {
        Command::Encode(a) => encode(a, cfg, force)?,
        Command::Decode(a) => decode(a, cfg, force)?,
        Command::Compile(a) => compile(a, cfg, force)?,
        Command::Sample(a) => sample_cmd(a, cfg, force)?,
        Command::Resample(a) => resample_cmd(a, cfg, force)?,
        Command::TrainCodebook(a) => train_codebook(a, cfg, force)?,
        Command::Diffuse(a) => diffuse(a, cfg, force)?,
        Command::Eval(a) => eval(a, cfg, force)?,
        Command::Roundtrip(a) => roundtrip_cmd(a, cfg)?,
        Command::Align(a) => align(a, cfg, force)?,
    };
    if cli.global.json {
        println!("{}", pretty(&out.summary));
    } else if !out.text.is_empty() {
        println!("{}", out.text.trim_end());
    }
    Ok(())
}

fn seed(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or(0)
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Program JSON.
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Directory with eb.bin, sp.bin and cc.bin; adds codebook indices.
    #[arg(long)]
    pub codebooks: Option<PathBuf>,
}

fn encode(a: &EncodeArgs, cfg: &mut RunConfig, force: bool) -> Res<Outcome> {
    if let Some(v) = a.alpha {
        cfg.encode.alpha = v;
    }
    if let Some(v) = a.beta {
        cfg.encode.beta = v;
    }
    let p = read_program(&a.input)?;
    let t = encode_program(&p, cfg.encode.alpha, cfg.encode.beta)?;
    let mut v = t.to_json();
    if let Some(dir) = &a.codebooks {
        let codec = LatticeCodec::load(dir)?;
        let idx = |book: &LevelBook, rows: Vec<Vec<f64>>| -> Res<Vec<usize>> {
            rows.iter().map(|r| book.encode(r).map_err(CliError::from)).collect()
        };
        v["indices"] = json!({
            "eb": idx(&codec.eb, t.eb.iter().map(|e| e.features().to_vec()).collect())?,
            "sp": idx(&codec.sp, t.sp.iter().map(|e| e.features().to_vec()).collect())?,
            "cc": idx(&codec.cc, t.cc.iter().map(|e| e.features().to_vec()).collect())?,
        });
        v["lattice"] = json!({"K": codec.vocab(), "tokens": codec.encode(&t, None)?.tokens});
    }
    let v = stamp(v, cfg);
    write_new(&a.output, pretty(&v).as_bytes(), force)?;
    let summary = json!({"output": a.output, "blocks": t.eb.len(), "loops": t.sp.len(), "curves": t.cc.len(), "config_hash": cfg.hash()});
    Ok(Outcome {
        text: format!("{}: {} blocks, {} loops, {} curve tokens", a.output.display(), t.eb.len(), t.sp.len(), t.cc.len()),
        summary,
    })
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    /// Token JSON written by `encode`.
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn decode(a: &DecodeArgs, cfg: &mut RunConfig, force: bool) -> Res<Outcome> {
    let t = HierTokens::from_json(&read_json(&a.input)?)?;
    let (p, residuals) = decode_program_with_residuals(&t)?;
    write_new(&a.output, pretty(&program_json(&p, cfg)).as_bytes(), force)?;
    let mut text = format!("{}: {} blocks\n", a.output.display(), p.blocks.len());
    for (i, r) in residuals.iter().enumerate() {
        text.push_str(&format!("loop {i}: closure residual {r:.3e}\n"));
    }
    Ok(Outcome {
        summary: json!({"output": a.output, "closure_residuals": residuals, "config_hash": cfg.hash()}),
        text,
    })
}

#[derive(Args, Debug)]
pub struct CompileArgs {
    /// Program JSON.
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Any of obj, step, history.
    #[arg(long, value_delimiter = ',', default_value = "obj,step,history")]
    pub formats: Vec<String>,
}

fn compile(a: &CompileArgs, cfg: &mut RunConfig, force: bool) -> Res<Outcome> {
    let p = read_program(&a.input)?;
    let defl = cfg.geometry.deflection();
    let stem = a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "program".into());
    let mesh = extract_mesh_with(&p, defl, Execution::default())?;
    let hash = cfg.hash();
    let mut written = Vec::new();
    for f in &a.formats {
        let (path, body) = match f.as_str() {
            "obj" => (
                a.out_dir.join(format!("{stem}.obj")),
                format!("# cadseq config_hash {hash}\n{}", mesh_to_obj(&mesh)),
            ),
            "step" => {
                let step = program_to_step(&p);
                let body = step.replacen("ISO-10303-21;\n", &format!("ISO-10303-21;\n/* cadseq config_hash {hash} */\n"), 1);
                (a.out_dir.join(format!("{stem}.step")), body)
            }
            "history" => (a.out_dir.join(format!("{stem}.history.json")), pretty(&program_json(&p, cfg))),
            other => return Err(usage(format!("unknown format {other:?}; expected obj, step or history"))),
        };
        write_new(&path, body.as_bytes(), force)?;
        written.push(path);
    }
    let summary = json!({
        "outputs": written,
        "triangles": mesh.len(),
        "volume": mesh.volume(),
        "closed": mesh.is_closed(),
        "config_hash": hash,
    });
    Ok(Outcome {
        text: format!("{} triangles, volume {:.6}, wrote {} files", mesh.len(), mesh.volume(), written.len()),
        summary,
    })
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Program JSON.
    pub input: PathBuf,
    #[arg(short = 'n', long)]
    pub points: Option<usize>,
    /// `.ply` or `.xyz`.
    #[arg(short, long)]
    pub output: PathBuf,
}

fn sample_cmd(a: &SampleArgs, cfg: &mut RunConfig, force: bool) -> Res<Outcome> {
    if let Some(n) = a.points {
        cfg.sample.points = n;
    }
    let p = read_program(&a.input)?;
    let s = sample_solid_with(&p, cfg.sample.points, seed(cfg), cfg.geometry.deflection(), Execution::default())?;
    ensure_new(&a.output, force)?;
    let cloud = CloudFile {
        points: s.points.clone(),
        normals: Some(s.normals.clone()),
        quality: None,
        comments: vec![format!("cadseq config_hash {}", cfg.hash())],
    };
    write_cloud(&cloud, &a.output)?;
    Ok(Outcome {
        text: format!("{}: {} points", a.output.display(), s.len()),
        summary: json!({"output": a.output, "points": s.len(), "config_hash": cfg.hash()}),
    })
}

#[derive(Args, Debug)]
pub struct ResampleArgs {
    /// `.ply` or `.xyz` cloud.
    pub input: PathBuf,
    #[arg(short = 'm', long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Saliency temperature.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Neighbourhood size for the scores.
    #[arg(short, long)]
    pub k: Option<usize>,
    /// Draw with replacement.
    #[arg(long)]
    pub replacement: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn resample_cmd(a: &ResampleArgs, cfg: &mut RunConfig, force: bool) -> Res<Outcome> {
    let r = &mut cfg.resample;
    if let Some(v) = a.points {
        r.points = v;
    }
    if let Some(v) = a.lambda {
        r.lambda = v;
    }
    if let Some(v) = a.beta {
        r.beta = v;
    }
    if let Some(v) = a.k {
        r.k = v;
    }
    r.replacement |= a.replacement;
    let r = cfg.resample.clone();
    if !(0.0..=1.0).contains(&r.lambda) || r.beta < 0.0 {
        return Err(usage("lambda must lie in [0, 1] and beta must be non-negative"));
    }
    let cloud = read_cloud(&a.input)?;
    let scored = importance_score_with(&cloud.points, r.k, Execution::default())?;
    let idx = resample_indices(&scored.scores, r.points, r.lambda, r.beta, seed(cfg), r.replacement)?;
    ensure_new(&a.output, force)?;
    let out = CloudFile {
        points: idx.iter().map(|&i| scored.points[i]).collect(),
        normals: cloud.normals.as_ref().map(|n| idx.iter().map(|&i| n[i]).collect()),
        quality: Some(idx.iter().map(|&i| scored.scores[i]).collect()),
        comments: vec![format!("cadseq config_hash {}", cfg.hash())],
    };
    write_cloud(&out, &a.output)?;
    Ok(Outcome {
        text: format!("{}: {} of {} points", a.output.display(), idx.len(), cloud.points.len()),
        summary: json!({"output": a.output, "points": idx.len(), "input_points": cloud.points.len(), "config_hash": cfg.hash()}),
    })
}

#[derive(Args, Debug)]
pub struct TrainCodebookArgs {
    /// Directory of program JSON files and/or raw feature matrices (`.bin`).
    pub input: PathBuf,
    /// eb, sp or cc.
    #[arg(long)]
    pub level: String,
    #[arg(short, long)]
    pub k: Option<usize>,
    /// kmeans or ema.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub d_latent: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn level_features(dir: &Path, level: Level, cfg: &RunConfig) -> Res<Vec<Vec<f64>>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| cadseq::Error::Format(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    paths.sort();
    let mut rows = Vec::new();
    for p in paths {
        match p.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let t = encode_program(&read_program(&p)?, cfg.encode.alpha, cfg.encode.beta)?;
                match level {
                    Level::Eb => rows.extend(t.eb.iter().map(|e| e.features().to_vec())),
                    Level::Sp => rows.extend(t.sp.iter().map(|e| e.features().to_vec())),
                    Level::Cc => rows.extend(t.cc.iter().map(|e| e.features().to_vec())),
                }
            }
            Some("bin") => rows.extend(load_matrix(&p)?),
            _ => {}
        }
    }
    Ok(rows)
}

fn train_codebook(a: &TrainCodebookArgs, cfg: &mut RunConfig, force: bool) -> Res<Outcome> {
    let level = Level::parse(&a.level).ok_or_else(|| usage(format!("unknown level {:?}; expected eb, sp or cc", a.level)))?;
    let c = &mut cfg.codebook;
    if let Some(v) = a.k {
        c.k = v;
    }
    if let Some(v) = &a.mode {
        c.mode = v.clone();
    }
    if let Some(v) = a.iters {
        c.iters = v;
    }
    if let Some(v) = a.decay {
        c.decay = v;
    }
    if let Some(v) = a.d_latent {
        c.d_latent = v;
    }
    let c = cfg.codebook.clone();
    let mode = TrainMode::parse(&c.mode).ok_or_else(|| usage(format!("unknown mode {:?}; expected kmeans or ema", c.mode)))?;
    let raw = level_features(&a.input, level, cfg)?;
    let projection = Projection::seeded(level, c.d_latent, seed(cfg));
    let z = raw.iter().map(|r| projection.apply(r)).collect::<cadseq::Result<Vec<_>>>()?;
    let (codebook, report) = train_codebook_report(level, &z, c.k, mode, c.iters, c.decay, seed(cfg))?;
    ensure_new(&a.output, force)?;
    let meta = CodebookMeta {
        level: level.as_str().into(),
        k: codebook.len(),
        d_latent: c.d_latent,
        seed: seed(cfg),
        mode: mode.as_str().into(),
        decay: c.decay,
        projection_seed: seed(cfg),
        config: Some(json!({"config": cfg.to_json(), "config_hash": cfg.hash()})),
    };
    LevelBook { projection, codebook }.save(&a.output, &meta)?;
    let err = report.error_history.last().copied().unwrap_or(0.0);
    Ok(Outcome {
        text: format!("{}: {} entries from {} features, final error {err:.6e}", a.output.display(), meta.k, z.len()),
        summary: json!({"output": a.output, "k": meta.k, "features": z.len(), "error_history": report.error_history, "config_hash": cfg.hash()}),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DenoiserKind {
    Oracle,
    Uniform,
    Unigram,
}

#[derive(Args, Debug)]
pub struct DiffuseArgs {
    #[arg(long, value_enum)]
    pub denoiser: DenoiserKind,
    /// Lattice length (uniform; for unigram, picks a corpus entry of that length).
    #[arg(long)]
    pub len: Option<usize>,
    /// Vocabulary size (uniform only).
    #[arg(short = 'k', long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Lattice JSON holding the oracle's target.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Program directory the unigram statistics and codebooks are fitted on.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Corpus entry whose length (or skeleton) a unigram sample follows.
    #[arg(long)]
    pub like: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
    /// pooled, length or skeleton.
    #[arg(long)]
    pub conditioning: Option<String>,
    /// Save the fitted codebooks here.
    #[arg(long)]
    pub codec_out: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn lattice_from_json(v: &Value) -> Res<(Vec<usize>, usize)> {
    let v = v.get("lattice").unwrap_or(v);
    let tokens: Vec<usize> = v
        .get("tokens")
        .and_then(|t| serde_json::from_value(t.clone()).ok())
        .ok_or_else(|| CliError::Core(cadseq::Error::Format("target has no integer \"tokens\" array".into())))?;
    let k = v
        .get("K")
        .and_then(Value::as_u64)
        .ok_or_else(|| CliError::Core(cadseq::Error::Format("target has no \"K\"".into())))? as usize;
    Ok((tokens, k))
}

fn diffuse(a: &DiffuseArgs, cfg: &mut RunConfig, force: bool) -> Res<Outcome> {
    let d = &mut cfg.diffuse;
    if let Some(v) = a.steps {
        d.steps = v;
    }
    if let Some(v) = a.count {
        d.count = v;
    }
    if let Some(v) = &a.conditioning {
        d.conditioning = v.clone();
    }
    let d = cfg.diffuse.clone();
    let schedule = linear_schedule(d.steps)?;
    let base = seed(cfg);
    let mut lattices = Vec::new();
    let mut invalid = 0usize;
    match a.denoiser {
        DenoiserKind::Oracle => {
            let path = a.target.as_ref().ok_or_else(|| usage("--denoiser oracle needs --target"))?;
            let (tokens, k) = lattice_from_json(&read_json(path)?)?;
            let oracle = Oracle { target: tokens };
            for i in 0..d.count {
                let x = sample(&oracle, &[], oracle.target.len(), k, &schedule, base.wrapping_add(i as u64))?;
                lattices.push(x.to_json(d.steps));
            }
        }
        DenoiserKind::Uniform => {
            let (len, k) = match (a.len, a.vocab) {
                (Some(l), Some(k)) if l > 0 && k > 0 => (l, k),
                _ => return Err(usage("--denoiser uniform needs positive --len and -k")),
            };
            for i in 0..d.count {
                let x = sample(&Uniform, &[], len, k, &schedule, base.wrapping_add(i as u64))?;
                lattices.push(x.to_json(d.steps));
            }
        }
        DenoiserKind::Unigram => {
            let dir = a.corpus.as_ref().ok_or_else(|| usage("--denoiser unigram needs --corpus"))?;
            let mode = Conditioning::parse(&d.conditioning)
                .ok_or_else(|| usage(format!("unknown conditioning {:?}", d.conditioning)))?;
            let programs = load_programs(dir)?;
            let tokens = programs
                .iter()
                .map(|(_, p)| encode_program(p, cfg.encode.alpha, cfg.encode.beta))
                .collect::<cadseq::Result<Vec<_>>>()?;
            let demo = DemoConfig {
                codebook_k: d.codebook_k,
                d_latent: d.d_latent,
                steps: d.steps,
                conditioning: mode,
                smoothing: d.smoothing,
                seed: base,
                ..DemoConfig::default()
            };
            let model = UnigramModel::fit(&tokens, &demo)?;
            if let Some(out) = &a.codec_out {
                model.codec.save(out)?;
            }
            let like = match (a.like, a.len) {
                (Some(i), _) => Some(i),
                (None, Some(l)) => Some(
                    model
                        .lattices
                        .iter()
                        .position(|x| x.len() == l)
                        .ok_or_else(|| usage(format!("no corpus lattice has length {l}")))?,
                ),
                (None, None) => None,
            };
            for i in 0..d.count {
                let entry = like.unwrap_or(i % model.lattices.len());
                let (table, len) = model.table(entry, mode)?;
                let x = sample(&table, &[], len, table.k, &schedule, base.wrapping_add(i as u64))?;
                let mut v = x.to_json(d.steps);
                match lattice_to_program(&model.codec, &Lattice { tokens: x.tokens.clone(), k: x.k }, Execution::default()) {
                    Ok(p) => {
                        v["valid"] = json!(true);
                        v["program"] = serde_json::from_str(&serialize_program(&p)).expect("serialized programs are JSON");
                    }
                    Err(e) => {
                        invalid += 1;
                        v["valid"] = json!(false);
                        v["error"] = json!(e.to_string());
                    }
                }
                v["like"] = json!(programs[entry].0);
                lattices.push(v);
            }
        }
    }
    let n = lattices.len();
    let doc = stamp(json!({"denoiser": format!("{:?}", a.denoiser).to_lowercase(), "lattices": lattices}), cfg);
    write_new(&a.output, pretty(&doc).as_bytes(), force)?;
    let mut summary = json!({"output": a.output, "count": n, "config_hash": cfg.hash()});
    let mut text = format!("{}: {n} lattices", a.output.display());
    if a.denoiser == DenoiserKind::Unigram {
        let ir = invalid as f64 / n.max(1) as f64;
        summary["invalid_ratio"] = json!(ir);
        text.push_str(&format!(", invalid ratio {ir:.3}"));
    }
    Ok(Outcome { summary, text })
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// JSON with `pairs: [{gen, gt}]` and optional `train: [paths]`; paths are
    /// relative to the manifest.
    pub manifest: PathBuf,
    /// Output prefix; writes `<prefix>.csv` and `<prefix>.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(short = 'n', long)]
    pub points: Option<usize>,
}

fn eval(a: &EvalArgs, cfg: &mut RunConfig, force: bool) -> Res<Outcome> {
    if let Some(n) = a.points {
        cfg.metrics.points = n;
    }
    let m = cfg.metrics.clone();
    let mcfg = MetricConfig {
        n_points: m.points,
        match_threshold: m.match_threshold,
        voxel_grid: m.voxel_grid,
        dup_threshold: m.dup_threshold,
        seed: seed(cfg),
        mmd_direction: match m.mmd_direction.as_str() {
            "ref_to_gen" => MmdDirection::RefToGen,
            "gen_to_ref" => MmdDirection::GenToRef,
            other => return Err(usage(format!("unknown mmd_direction {other:?}"))),
        },
    };
    let manifest = read_json(&a.manifest)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let entries = manifest
        .get("pairs")
        .and_then(Value::as_array)
        .ok_or_else(|| CliError::Core(cadseq::Error::Format("manifest needs a \"pairs\" array".into())))?;
    let mut pairs = Vec::with_capacity(entries.len());
    let mut names = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let get = |k: &str| {
            e.get(k)
                .and_then(Value::as_str)
                .map(|s| base.join(s))
                .ok_or_else(|| CliError::Core(cadseq::Error::Format(format!("pair {i} lacks \"{k}\""))))
        };
        let (g, t) = (get("gen")?, get("gt")?);
        let gen = read_text(&g).map_err(|e| cadseq::Error::Format(e.to_string())).and_then(|s| parse_program(&s));
        pairs.push((gen, read_program(&t)?));
        names.push((g, t));
    }
    let train = match manifest.get("train").and_then(Value::as_array) {
        None => None,
        Some(list) => {
            let mut clouds = Vec::new();
            for p in list.iter().filter_map(Value::as_str) {
                let prog = cadseq::cadprog::normalize_program(&read_program(&base.join(p))?)?;
                clouds.push(sample_solid_with(&prog, mcfg.n_points, mcfg.seed, cfg.geometry.deflection(), Execution::default())?.points);
            }
            Some(clouds)
        }
    };
    let report = evaluate_pairs(&pairs, train.as_deref(), &mcfg, Execution::default())?;
    let mut csv = String::from("gen,gt,valid,chamfer,hanging_faces,seg_accuracy,acc_err,comp_err,precision,recall\n");
    let mut rows = Vec::new();
    for ((g, t), r) in names.iter().zip(&report.pairs) {
        match r {
            Ok(m) => {
                csv.push_str(&format!(
                    "{},{},1,{},{},{},{},{},{},{}\n",
                    g.display(),
                    t.display(),
                    m.chamfer,
                    m.hanging_faces,
                    m.seg_accuracy,
                    m.acc_err,
                    m.comp_err,
                    m.precision,
                    m.recall
                ));
                rows.push(json!({"gen": g, "gt": t, "valid": true, "chamfer": m.chamfer, "hanging_faces": m.hanging_faces,
                    "seg_accuracy": m.seg_accuracy, "acc_err": m.acc_err, "comp_err": m.comp_err,
                    "precision": m.precision, "recall": m.recall}));
            }
            Err(e) => {
                csv.push_str(&format!("{},{},0,,,,,,,\n", g.display(), t.display()));
                rows.push(json!({"gen": g, "gt": t, "valid": false, "error": e.to_string()}));
            }
        }
    }
    let pop = report.population.map(|p| json!({"mmd": p.mmd, "cov": p.cov, "jsd": p.jsd}));
    let v = &report.validity;
    let doc = stamp(
        json!({"pairs": rows, "population": pop, "validity": {"ir": v.ir, "nov": v.nov, "uniq": v.uniq}}),
        cfg,
    );
    let mut csv_path = a.out.clone().into_os_string();
    csv_path.push(".csv");
    let mut json_path = a.out.clone().into_os_string();
    json_path.push(".json");
    let (csv_path, json_path) = (PathBuf::from(csv_path), PathBuf::from(json_path));
    csv.push_str(&format!("# config_hash {}\n", cfg.hash()));
    write_new(&csv_path, csv.as_bytes(), force)?;
    write_new(&json_path, pretty(&doc).as_bytes(), force)?;
    let text = match report.population {
        Some(p) => format!("MMD {:.6} COV {:.3} JSD {:.6} IR {:.3} Nov {:.3} Uniq {:.3}", p.mmd, p.cov, p.jsd, v.ir, v.nov, v.uniq),
        None => format!("IR {:.3}: no generated program compiled", v.ir),
    };
    Ok(Outcome {
        summary: json!({"csv": csv_path, "json": json_path, "population": pop,
            "validity": {"ir": v.ir, "nov": v.nov, "uniq": v.uniq}, "config_hash": cfg.hash()}),
        text,
    })
}

#[derive(Args, Debug)]
pub struct RoundtripArgs {
    /// Directory of program JSON files.
    pub dir: PathBuf,
    #[arg(short = 'n', long)]
    pub points: Option<usize>,
    /// Largest accepted Chamfer distance.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

fn roundtrip_cmd(a: &RoundtripArgs, cfg: &mut RunConfig) -> Res<Outcome> {
    if let Some(n) = a.points {
        cfg.sample.points = n;
    }
    let programs = load_programs(&a.dir)?;
    if programs.is_empty() {
        return Err(usage(format!("no program JSON files in {}", a.dir.display())));
    }
    let n = cfg.sample.points;
    let s = seed(cfg);
    let results = Execution::default().map(&programs, |(_, p)| roundtrip(p, n, s, Execution::Sequential));
    let mut rows = Vec::new();
    let mut text = String::new();
    let mut failed = 0;
    for ((name, _), r) in programs.iter().zip(results) {
        match r {
            Ok(rt) => {
                let ok = rt.chamfer <= a.tolerance && rt.max_residual() <= 1e-9;
                failed += usize::from(!ok);
                text.push_str(&format!(
                    "{} {name}: CD {:.3e}, max residual {:.3e}\n",
                    if ok { "ok  " } else { "FAIL" },
                    rt.chamfer,
                    rt.max_residual()
                ));
                rows.push(json!({"name": name, "ok": ok, "chamfer": rt.chamfer, "max_residual": rt.max_residual()}));
            }
            Err(e) => {
                failed += 1;
                text.push_str(&format!("FAIL {name}: {e}\n"));
                rows.push(json!({"name": name, "ok": false, "error": e.to_string()}));
            }
        }
    }
    text.push_str(&format!("{}/{} round trips within tolerance\n", programs.len() - failed, programs.len()));
    let summary = json!({"results": rows, "passed": programs.len() - failed, "total": programs.len(), "config_hash": cfg.hash()});
    if failed > 0 {
        print!("{text}");
        return Err(CliError::Check(format!("{failed} round trips failed")));
    }
    Ok(Outcome { summary, text })
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    /// Point-cloud embeddings (CSFMAT1, one row per pair).
    pub cloud: PathBuf,
    /// Sequence embeddings (CSFMAT1).
    pub seq: PathBuf,
    #[arg(long)]
    pub tau: Option<f64>,
    /// pooled or cross_modal.
    #[arg(long)]
    pub negatives: Option<String>,
    /// average or sum.
    #[arg(long)]
    pub reduction: Option<String>,
    /// Gradient-descent steps on both embedding sets.
    #[arg(long, default_value_t = 0)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// Directory for d_cloud.bin and d_seq.bin (final gradients).
    #[arg(long)]
    pub grad_out: Option<PathBuf>,
}

fn align(a: &AlignArgs, cfg: &mut RunConfig, force: bool) -> Res<Outcome> {
    let c = &mut cfg.align;
    if let Some(v) = a.tau {
        c.tau = v;
    }
    if let Some(v) = &a.negatives {
        c.negatives = v.clone();
    }
    if let Some(v) = &a.reduction {
        c.reduction = v.clone();
    }
    let c = cfg.align.clone();
    if c.tau <= 0.0 {
        return Err(usage("tau must be positive"));
    }
    let nce = NceConfig {
        tau: c.tau,
        negatives: match c.negatives.as_str() {
            "pooled" => Negatives::Pooled,
            "cross_modal" => Negatives::CrossModal,
            other => return Err(usage(format!("unknown negatives {other:?}"))),
        },
        reduction: match c.reduction.as_str() {
            "average" => Reduction::Average,
            "sum" => Reduction::Sum,
            other => return Err(usage(format!("unknown reduction {other:?}"))),
        },
    };
    let mut batch = EmbeddingBatch::new(load_matrix(&a.cloud)?, load_matrix(&a.seq)?)?;
    let mut history = Vec::with_capacity(a.steps + 1);
    let mut g = info_nce_grad(&batch, &nce)?;
    history.push(g.loss);
    for _ in 0..a.steps {
        let step = |rows: &mut Vec<Vec<f64>>, grad: &[Vec<f64>]| {
            for (r, d) in rows.iter_mut().zip(grad) {
                for (x, dx) in r.iter_mut().zip(d) {
                    *x -= a.lr * dx;
                }
            }
        };
        step(&mut batch.z_cloud, &g.d_cloud);
        step(&mut batch.z_seq, &g.d_seq);
        batch = EmbeddingBatch::new(batch.z_cloud, batch.z_seq)?;
        g = info_nce_grad(&batch, &nce)?;
        history.push(g.loss);
    }
    if let Some(dir) = &a.grad_out {
        let (dc, ds) = (dir.join("d_cloud.bin"), dir.join("d_seq.bin"));
        ensure_new(&dc, force)?;
        ensure_new(&ds, force)?;
        save_matrix(&g.d_cloud, &dc)?;
        save_matrix(&g.d_seq, &ds)?;
    }
    let mut text = format!("loss {:.9} (d/dtau {:.6e})", history[0], g.d_tau);
    if a.steps > 0 {
        text.push_str(&format!(" -> {:.9} after {} steps", g.loss, a.steps));
    }
    Ok(Outcome {
        summary: json!({"loss": history[0], "final_loss": g.loss, "history": history, "d_tau": g.d_tau, "config_hash": cfg.hash()}),
        text,
    })
}
