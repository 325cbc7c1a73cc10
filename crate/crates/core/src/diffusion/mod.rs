//! Absorbing-state discrete diffusion over token lattices.

mod denoiser;

pub use denoiser::{Denoiser, FrequencyTable, Oracle, Uniform};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::Execution;

pub const DEFAULT_STEPS: usize = 100;
pub const DEFAULT_LAMBDA_AUX: f64 = 0.1;
/// Floor of the terminal survival probability.
pub const ALPHA_BAR_FLOOR: f64 = 1e-9;
/// Tolerance on denoiser rows summing to one.
pub const ROW_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct MaskSchedule {
    /// `gamma[t-1]` is the masking rate of step `t`.
    pub gamma: Vec<f64>,
    /// Survival `ᾱ_t` for `t = 0..=T`.
    pub alpha_bar: Vec<f64>,
}

impl MaskSchedule {
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 || alpha_bar[0] != 1.0 {
            return Err(Error::InvalidDistribution("survival must start at 1 with at least one step".into()));
        }
        if alpha_bar.windows(2).any(|w| !(w[1] < w[0])) || *alpha_bar.last().expect("non-empty") <= 0.0 {
            return Err(Error::InvalidDistribution("survival must be strictly decreasing and positive".into()));
        }
        if *alpha_bar.last().expect("non-empty") > 1e-6 {
            return Err(Error::InvalidDistribution("terminal survival must be at most 1e-6".into()));
        }
        let gamma = alpha_bar.windows(2).map(|w| 1.0 - w[1] / w[0]).collect();
        Ok(MaskSchedule { gamma, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.gamma.len()
    }

    /// Probability that a position masked at `t` is revealed at `t−1`.
    pub fn reveal_prob(&self, t: usize) -> f64 {
        let (a0, a1) = (self.alpha_bar[t - 1], self.alpha_bar[t]);
        (a0 - a1) / (1.0 - a1)
    }

    /// Probability that a position masked at `t` is still masked at `t−1`.
    pub fn stay_prob(&self, t: usize) -> f64 {
        let (a0, a1) = (self.alpha_bar[t - 1], self.alpha_bar[t]);
        (1.0 - a0) / (1.0 - a1)
    }

    pub fn to_json(&self) -> Value {
        json!(self.alpha_bar)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let a: Vec<f64> = serde_json::from_value(v.clone()).map_err(|e| Error::Format(e.to_string()))?;
        MaskSchedule::from_alpha_bar(a)
    }
}

/// `ᾱ_t = 1 − t/T`, with `ᾱ_T` raised to [`ALPHA_BAR_FLOOR`].
pub fn linear_schedule(steps: usize) -> Result<MaskSchedule> {
    if steps == 0 {
        return Err(Error::InvalidDistribution("schedule needs at least one step".into()));
    }
    let mut a: Vec<f64> = (0..=steps).map(|t| 1.0 - t as f64 / steps as f64).collect();
    a[steps] = ALPHA_BAR_FLOOR;
    MaskSchedule::from_alpha_bar(a)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenLattice {
    /// Entries in `0..k`, or `k` for MASK.
    pub tokens: Vec<usize>,
    pub t: usize,
    pub k: usize,
}

impl TokenLattice {
    pub fn new(tokens: Vec<usize>, t: usize, k: usize) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InconsistentState("empty lattice".into()));
        }
        if let Some(bad) = tokens.iter().find(|&&x| x > k) {
            return Err(Error::InconsistentState(format!("token {bad} outside vocabulary {k}")));
        }
        if t == 0 && tokens.contains(&k) {
            return Err(Error::InconsistentState("MASK present at t = 0".into()));
        }
        Ok(TokenLattice { tokens, t, k })
    }

    pub fn mask(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn masked(&self) -> usize {
        self.tokens.iter().filter(|&&x| x == self.k).count()
    }

    pub fn to_json(&self, steps: usize) -> Value {
        json!({"L": self.len(), "K": self.k, "T": steps, "t": self.t, "tokens": self.tokens})
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let get = |key: &str| {
            v.get(key)
                .and_then(Value::as_u64)
                .map(|x| x as usize)
                .ok_or_else(|| Error::schema(key, "expected a non-negative integer"))
        };
        let tokens: Vec<usize> = v
            .get("tokens")
            .and_then(|t| serde_json::from_value(t.clone()).ok())
            .ok_or_else(|| Error::schema("tokens", "expected an integer array"))?;
        let lat = TokenLattice::new(tokens, get("t")?, get("K")?)?;
        if get("L")? != lat.len() {
            return Err(Error::schema("L", "does not match the token count"));
        }
        Ok(lat)
    }
}

/// Seed of the per-position streams used at step `t`.
fn step_seed(seed: u64, t: usize) -> u64 {
    let mut z = seed ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn position_uniform(seed: u64, pos: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pos as u64);
    rng.random::<f64>()
}

fn check_t(t: usize, schedule: &MaskSchedule) -> Result<()> {
    if t > schedule.steps() {
        return Err(Error::InconsistentState(format!("t = {t} beyond T = {}", schedule.steps())));
    }
    Ok(())
}

/// Masks each position independently with probability `1 − ᾱ_t`.
pub fn forward_corrupt(x0: &TokenLattice, t: usize, schedule: &MaskSchedule, seed: u64) -> Result<TokenLattice> {
    check_t(t, schedule)?;
    if x0.t != 0 {
        return Err(Error::InconsistentState("corruption starts from a clean lattice".into()));
    }
    let keep = schedule.alpha_bar[t];
    let s = step_seed(seed, t);
    let tokens = (0..x0.len())
        .map(|i| if position_uniform(s, i) < 1.0 - keep { x0.k } else { x0.tokens[i] })
        .collect();
    Ok(TokenLattice { tokens, t, k: x0.k })
}

/// `q(x_{t−1} | x_t, x0)` at one position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Posterior {
    pub token: usize,
    pub p_token: f64,
    pub p_mask: f64,
}

pub fn posterior(x_t: usize, x0: usize, t: usize, schedule: &MaskSchedule, mask: usize) -> Result<Posterior> {
    if t == 0 {
        return Err(Error::InconsistentState("posterior needs t >= 1".into()));
    }
    check_t(t, schedule)?;
    if x0 == mask {
        return Err(Error::InconsistentState("clean token is MASK".into()));
    }
    if x_t != mask {
        if x_t != x0 {
            return Err(Error::InconsistentState(format!("x_t = {x_t} is neither x0 = {x0} nor MASK")));
        }
        return Ok(Posterior { token: x0, p_token: 1.0, p_mask: 0.0 });
    }
    Ok(Posterior {
        token: x0,
        p_token: schedule.reveal_prob(t),
        p_mask: schedule.stay_prob(t),
    })
}

fn check_rows(probs: &[Vec<f64>], l: usize, k: usize) -> Result<()> {
    if probs.len() != l {
        return Err(Error::InvalidDistribution(format!("{} rows for {l} positions", probs.len())));
    }
    for (i, row) in probs.iter().enumerate() {
        if row.len() != k {
            return Err(Error::InvalidDistribution(format!("row {i} has {} entries, expected {k}", row.len())));
        }
        let s: f64 = row.iter().sum();
        if row.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > ROW_TOL {
            return Err(Error::InvalidDistribution(format!("row {i} is not a probability vector")));
        }
    }
    Ok(())
}

/// How positions that are already revealed behave in the reverse step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UnmaskedPolicy {
    /// Absorbing chain: revealed tokens never change.
    #[default]
    Frozen,
    /// Revealed tokens are redrawn from the denoiser row.
    Repredict,
}

/// `p(x_{t−1} | x_t)` at one position over `0..=K` (index K is MASK).
pub fn step_distribution(x_t: usize, row: &[f64], t: usize, schedule: &MaskSchedule, policy: UnmaskedPolicy) -> Vec<f64> {
    let k = row.len();
    let mut out = vec![0.0; k + 1];
    if x_t != k {
        match policy {
            UnmaskedPolicy::Frozen => out[x_t] = 1.0,
            UnmaskedPolicy::Repredict => out[..k].copy_from_slice(row),
        }
        return out;
    }
    let r = schedule.reveal_prob(t);
    for (o, p) in out.iter_mut().zip(row) {
        *o = r * p;
    }
    out[k] = schedule.stay_prob(t);
    out
}

fn draw(dist: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReverseOptions {
    pub policy: UnmaskedPolicy,
    pub exec: Execution,
}

pub fn reverse_step(
    x_t: &TokenLattice,
    denoiser: &dyn Denoiser,
    c: &[f64],
    schedule: &MaskSchedule,
    seed: u64,
) -> Result<TokenLattice> {
    reverse_step_with(x_t, denoiser, c, schedule, seed, ReverseOptions::default())
}

pub fn reverse_step_with(
    x_t: &TokenLattice,
    denoiser: &dyn Denoiser,
    c: &[f64],
    schedule: &MaskSchedule,
    seed: u64,
    opts: ReverseOptions,
) -> Result<TokenLattice> {
    let t = x_t.t;
    if t == 0 {
        return Err(Error::InconsistentState("reverse step needs t >= 1".into()));
    }
    check_t(t, schedule)?;
    let probs = denoiser.predict(x_t, c)?;
    check_rows(&probs, x_t.len(), x_t.k)?;
    let s = step_seed(seed, t);
    let tokens = opts.exec.map_range(x_t.len(), |i| {
        let dist = step_distribution(x_t.tokens[i], &probs[i], t, schedule, opts.policy);
        draw(&dist, position_uniform(s, i))
    });
    Ok(TokenLattice { tokens, t: t - 1, k: x_t.k })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VlbTerms {
    pub kl: f64,
    pub aux_ce: f64,
    pub combined: f64,
    pub lambda_aux: f64,
    /// Positions masked in `x_t`; `aux_ce` sums over these.
    pub masked: usize,
}

fn kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| if *b > 0.0 { a * (a / b).ln() } else { f64::INFINITY })
        .sum()
}

pub fn vlb_terms(
    x0: &TokenLattice,
    x_t: &TokenLattice,
    denoiser: &dyn Denoiser,
    c: &[f64],
    schedule: &MaskSchedule,
    lambda_aux: f64,
) -> Result<VlbTerms> {
    if x0.len() != x_t.len() || x0.k != x_t.k {
        return Err(Error::InconsistentState("lattice shapes differ".into()));
    }
    let t = x_t.t;
    let k = x0.k;
    let probs = denoiser.predict(x_t, c)?;
    check_rows(&probs, x_t.len(), k)?;
    let mut total_kl = 0.0;
    let mut aux = 0.0;
    let mut masked = 0;
    for i in 0..x0.len() {
        let post = posterior(x_t.tokens[i], x0.tokens[i], t, schedule, k)?;
        if x_t.tokens[i] != k {
            continue;
        }
        masked += 1;
        let mut q = vec![0.0; k + 1];
        q[post.token] = post.p_token;
        q[k] = post.p_mask;
        let p = step_distribution(k, &probs[i], t, schedule, UnmaskedPolicy::Frozen);
        total_kl += kl(&q, &p).max(0.0);
        aux += -probs[i][x0.tokens[i]].ln();
    }
    Ok(VlbTerms {
        kl: total_kl,
        aux_ce: aux,
        combined: total_kl + lambda_aux * aux,
        lambda_aux,
        masked,
    })
}

/// Ancestral sampling from the all-MASK lattice at `T` down to `t = 0`.
pub fn sample(
    denoiser: &dyn Denoiser,
    c: &[f64],
    len: usize,
    k: usize,
    schedule: &MaskSchedule,
    seed: u64,
) -> Result<TokenLattice> {
    sample_with(denoiser, c, len, k, schedule, seed, ReverseOptions::default())
}

pub fn sample_with(
    denoiser: &dyn Denoiser,
    c: &[f64],
    len: usize,
    k: usize,
    schedule: &MaskSchedule,
    seed: u64,
    opts: ReverseOptions,
) -> Result<TokenLattice> {
    if len == 0 {
        return Err(Error::InconsistentState("empty lattice".into()));
    }
    let mut x = TokenLattice {
        tokens: vec![k; len],
        t: schedule.steps(),
        k,
    };
    while x.t > 0 {
        x = reverse_step_with(&x, denoiser, c, schedule, seed, opts)?;
    }
    match x.masked() {
        0 => Ok(x),
        n => Err(Error::ResidualMask(n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_values() {
        let s = linear_schedule(100).unwrap();
        assert_eq!(s.alpha_bar[50], 0.5);
        for t in 1..=100 {
            assert!((s.alpha_bar[t] - s.alpha_bar[t - 1] * (1.0 - s.gamma[t - 1])).abs() < 1e-12);
        }
        assert!((posterior(100, 3, 50, &s, 100).unwrap().p_token - 0.02).abs() < 1e-12);
        let one = linear_schedule(1).unwrap();
        assert!((one.gamma[0] - 1.0).abs() < 1e-8);
        assert!(linear_schedule(0).is_err());
    }

    #[test]
    fn last_step_reveals() {
        let s = linear_schedule(7).unwrap();
        assert_eq!(posterior(4, 1, 1, &s, 4).unwrap().p_token, 1.0);
        assert_eq!(posterior(1, 1, 5, &s, 4).unwrap(), Posterior { token: 1, p_token: 1.0, p_mask: 0.0 });
        assert!(matches!(posterior(2, 1, 5, &s, 4), Err(Error::InconsistentState(_))));
    }

    #[test]
    fn corruption_fraction() {
        let s = linear_schedule(100).unwrap();
        let x0 = TokenLattice::new(vec![1; 10_000], 0, 3).unwrap();
        assert_eq!(forward_corrupt(&x0, 0, &s, 1).unwrap().tokens, x0.tokens);
        let frac = forward_corrupt(&x0, 50, &s, 1).unwrap().masked() as f64 / 1e4;
        assert!((frac - 0.5).abs() < 0.02);
        assert_eq!(forward_corrupt(&x0, 100, &s, 1).unwrap().masked(), 10_000);
    }

    #[test]
    fn lattice_json() {
        let l = TokenLattice::new(vec![0, 3, 2], 4, 3).unwrap();
        assert_eq!(TokenLattice::from_json(&l.to_json(10)).unwrap(), l);
        assert!(TokenLattice::new(vec![3], 0, 3).is_err());
        let s = linear_schedule(5).unwrap();
        assert_eq!(MaskSchedule::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn invalid_rows_rejected() {
        struct Bad;
        impl Denoiser for Bad {
            fn predict(&self, x: &TokenLattice, _: &[f64]) -> Result<Vec<Vec<f64>>> {
                Ok(vec![vec![0.7, 0.7]; x.len()])
            }
        }
        let s = linear_schedule(3).unwrap();
        let x = TokenLattice::new(vec![2, 2], 3, 2).unwrap();
        assert!(matches!(reverse_step(&x, &Bad, &[], &s, 0), Err(Error::InvalidDistribution(_))));
    }
}
