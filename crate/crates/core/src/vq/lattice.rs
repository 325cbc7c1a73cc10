//! Flattening quantized token streams into one integer sequence over a
//! shared vocabulary, and back.
//!
//! Layout: per block one EB symbol, then per loop one SP symbol followed by
//! its CC symbols (EOS included), then PAD to the lattice length. The
//! vocabulary is `[EB codes | SP codes | CC codes | PAD]`.

use std::collections::BTreeSet;
use std::path::Path;

use crate::cadprog::BboxScale;
use crate::canonize::{CcKind, CcToken, EbToken, HierTokens, SpAnchor};
use crate::error::{Error, Result};

use super::{
    load_codebook, quantize, save_codebook, train_codebook, Codebook, CodebookMeta, Level, Projection, TrainMode,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub tokens: Vec<usize>,
    /// Vocabulary size, PAD included.
    pub k: usize,
}

/// Projection and codebook of one level.
#[derive(Clone, Debug)]
pub struct LevelBook {
    pub projection: Projection,
    pub codebook: Codebook,
}

impl LevelBook {
    pub fn encode(&self, raw: &[f64]) -> Result<usize> {
        Ok(quantize(&self.projection.apply(raw)?, &self.codebook)?.index)
    }

    /// Loads a codebook whose sidecar names the projection seed.
    pub fn load(path: &Path) -> Result<Self> {
        let (codebook, meta) = load_codebook(path)?;
        let meta = meta.ok_or_else(|| Error::Format(format!("{} has no metadata sidecar", path.display())))?;
        let projection = Projection::seeded(codebook.level, meta.d_latent, meta.projection_seed);
        if projection.d_latent() != codebook.dim() {
            return Err(Error::Dimension {
                expected: codebook.dim(),
                actual: projection.d_latent(),
            });
        }
        Ok(LevelBook { projection, codebook })
    }

    pub fn save(&self, path: &Path, meta: &CodebookMeta) -> Result<()> {
        save_codebook(&self.codebook, meta, path)
    }

    pub fn decode(&self, index: usize) -> Result<Vec<f64>> {
        let z = self
            .codebook
            .entries
            .get(index)
            .ok_or_else(|| Error::MalformedToken(format!("code {index} outside a codebook of {}", self.codebook.len())))?;
        self.projection.invert(z)
    }
}

#[derive(Clone, Debug)]
pub struct LatticeCodec {
    pub eb: LevelBook,
    pub sp: LevelBook,
    pub cc: LevelBook,
}

enum Sym {
    Eb(usize),
    Sp(usize),
    Cc(usize),
    Pad,
}

fn distinct(rows: &[Vec<f64>]) -> usize {
    rows.iter()
        .map(|r| r.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
        .collect::<BTreeSet<_>>()
        .len()
}

impl LatticeCodec {
    /// Fits one projection and codebook per level on a corpus. `k` is an
    /// upper bound; each level uses at most as many entries as it has distinct
    /// features.
    pub fn fit(corpus: &[HierTokens], k: usize, d_latent: usize, iters: usize, seed: u64) -> Result<Self> {
        let mut feats: [Vec<Vec<f64>>; 3] = Default::default();
        for t in corpus {
            feats[0].extend(t.eb.iter().map(|e| e.features().to_vec()));
            feats[1].extend(t.sp.iter().map(|s| s.features().to_vec()));
            feats[2].extend(t.cc.iter().map(|c| c.features().to_vec()));
        }
        let mut books = Vec::with_capacity(3);
        for (level, raw) in Level::ALL.into_iter().zip(&feats) {
            let projection = Projection::seeded(level, d_latent, seed);
            let z: Vec<Vec<f64>> = raw.iter().map(|r| projection.apply(r)).collect::<Result<_>>()?;
            let kk = k.min(distinct(raw)).max(2);
            let codebook = train_codebook(level, &z, kk, TrainMode::KMeans, iters, 0.99, seed ^ level.tag() as u64)?;
            books.push(LevelBook { projection, codebook });
        }
        let cc = books.pop().expect("three levels");
        let sp = books.pop().expect("three levels");
        let eb = books.pop().expect("three levels");
        Ok(LatticeCodec { eb, sp, cc })
    }

    /// Writes `eb.bin`, `sp.bin` and `cc.bin` with sidecars into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for book in [&self.eb, &self.sp, &self.cc] {
            let level = book.codebook.level;
            let meta = CodebookMeta {
                level: level.as_str().into(),
                k: book.codebook.len(),
                d_latent: book.projection.d_latent(),
                seed: book.projection.seed,
                mode: TrainMode::KMeans.as_str().into(),
                decay: 0.0,
                projection_seed: book.projection.seed,
                config: None,
            };
            book.save(&dir.join(format!("{}.bin", level.as_str())), &meta)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let book = |level: Level| -> Result<LevelBook> {
            let b = LevelBook::load(&dir.join(format!("{}.bin", level.as_str())))?;
            if b.codebook.level != level {
                return Err(Error::Format(format!("{}.bin holds another level", level.as_str())));
            }
            Ok(b)
        };
        Ok(LatticeCodec {
            eb: book(Level::Eb)?,
            sp: book(Level::Sp)?,
            cc: book(Level::Cc)?,
        })
    }

    pub fn vocab(&self) -> usize {
        self.eb.codebook.len() + self.sp.codebook.len() + self.cc.codebook.len() + 1
    }

    pub fn pad(&self) -> usize {
        self.vocab() - 1
    }

    fn offsets(&self) -> (usize, usize) {
        let sp0 = self.eb.codebook.len();
        (sp0, sp0 + self.sp.codebook.len())
    }

    fn classify(&self, tok: usize) -> Result<Sym> {
        let (sp0, cc0) = self.offsets();
        let pad = self.pad();
        Ok(match tok {
            t if t < sp0 => Sym::Eb(t),
            t if t < cc0 => Sym::Sp(t - sp0),
            t if t < pad => Sym::Cc(t - cc0),
            t if t == pad => Sym::Pad,
            t => return Err(Error::MalformedToken(format!("token {t} outside vocabulary of {}", self.vocab()))),
        })
    }

    /// Symbol class per position: 0 EB, 1 SP, 2 curve, 3 EOS, 4 PAD.
    pub fn skeleton(&self, tokens: &[usize]) -> Result<Vec<u8>> {
        tokens
            .iter()
            .map(|&t| {
                Ok(match self.classify(t)? {
                    Sym::Eb(_) => 0,
                    Sym::Sp(_) => 1,
                    Sym::Cc(k) => {
                        if CcToken::from_features(&self.cc.decode(k)?)?.kind == CcKind::Eos {
                            3
                        } else {
                            2
                        }
                    }
                    Sym::Pad => 4,
                })
            })
            .collect()
    }

    /// Number of lattice positions `t` occupies before padding.
    pub fn length(t: &HierTokens) -> usize {
        t.eb.len() + t.sp.len() + t.cc.len()
    }

    /// Quantizes every token. `len` pads the lattice; `None` means no padding.
    pub fn encode(&self, t: &HierTokens, len: Option<usize>) -> Result<Lattice> {
        let runs = t.cc_runs()?;
        let (sp0, cc0) = self.offsets();
        let mut out = Vec::with_capacity(Self::length(t));
        for (b, e) in t.eb.iter().enumerate() {
            out.push(self.eb.encode(&e.features())?);
            for (j, s) in t.sp.iter().enumerate().filter(|(j, _)| t.sp_block[*j] == b) {
                out.push(sp0 + self.sp.encode(&s.features())?);
                for (r, run) in runs.iter().enumerate() {
                    if t.cc_run_sp[r] == j {
                        for c in run.iter() {
                            out.push(cc0 + self.cc.encode(&c.features())?);
                        }
                    }
                }
            }
        }
        if let Some(len) = len {
            if len < out.len() {
                return Err(Error::Shape(format!("{} tokens do not fit a lattice of {len}", out.len())));
            }
            out.resize(len, self.pad());
        }
        Ok(Lattice {
            tokens: out,
            k: self.vocab(),
        })
    }

    /// Dequantizes a lattice back into token streams. Fails with
    /// `MalformedToken` when the symbol order does not follow the layout.
    pub fn decode(&self, lattice: &Lattice) -> Result<HierTokens> {
        if lattice.k != self.vocab() {
            return Err(Error::Shape(format!("lattice vocabulary {} vs codec {}", lattice.k, self.vocab())));
        }
        let mut h = HierTokens {
            eb: Vec::new(),
            sp: Vec::new(),
            cc: Vec::new(),
            sp_block: Vec::new(),
            cc_run_sp: Vec::new(),
            bbox_scale: BboxScale::default(),
        };
        // Expected next symbol: 0 EB, 1 SP, 2 CC, 3 SP/EB/PAD after a closed loop.
        let mut state = 0u8;
        let mut padded = false;
        for (i, &tok) in lattice.tokens.iter().enumerate() {
            let bad = |what: &str| Err(Error::MalformedToken(format!("{what} at position {i}")));
            match self.classify(tok)? {
                Sym::Pad => {
                    if state != 3 {
                        return bad("padding inside an open block");
                    }
                    padded = true;
                }
                _ if padded => return bad("token after padding"),
                Sym::Eb(k) => {
                    if state != 0 && state != 3 {
                        return bad("extrusion token inside a block");
                    }
                    h.eb.push(EbToken::from_features(&self.eb.decode(k)?)?);
                    state = 1;
                }
                Sym::Sp(k) => {
                    if state != 1 && state != 3 {
                        return bad("profile token outside a block");
                    }
                    h.sp.push(SpAnchor::from_features(&self.sp.decode(k)?)?);
                    h.sp_block.push(h.eb.len() - 1);
                    h.cc_run_sp.push(h.sp.len() - 1);
                    state = 2;
                }
                Sym::Cc(k) => {
                    if state != 2 {
                        return bad("curve token outside a profile");
                    }
                    let c = CcToken::from_features(&self.cc.decode(k)?)?;
                    if c.kind == CcKind::Eos {
                        state = 3;
                    }
                    h.cc.push(c);
                }
            }
        }
        if state != 3 {
            return Err(Error::MalformedToken("lattice ends inside a block".into()));
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cadprog::parse_program;
    use crate::canonize::{encode_program, DEFAULT_ALPHA, DEFAULT_BETA};

    fn corpus() -> Vec<HierTokens> {
        ["cube", "washer", "l_bracket"]
            .iter()
            .map(|n| {
                let s = std::fs::read_to_string(format!("{}/../../fixtures/{n}.json", env!("CARGO_MANIFEST_DIR"))).unwrap();
                encode_program(&parse_program(&s).unwrap(), DEFAULT_ALPHA, DEFAULT_BETA).unwrap()
            })
            .collect()
    }

    #[test]
    fn lossless_when_codebooks_cover_the_corpus() {
        let c = corpus();
        let codec = LatticeCodec::fit(&c, 256, 32, 50, 3).unwrap();
        for t in &c {
            let lat = codec.encode(t, Some(LatticeCodec::length(t) + 4)).unwrap();
            assert_eq!(*lat.tokens.last().unwrap(), codec.pad());
            let back = codec.decode(&lat).unwrap();
            assert_eq!(back.sp_block, t.sp_block);
            assert_eq!(back.cc_run_sp, t.cc_run_sp);
            for (a, b) in back.cc.iter().zip(&t.cc) {
                assert_eq!(a.kind, b.kind);
                assert!((a.l - b.l).abs() < 1e-9 && (a.dtheta - b.dtheta).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn save_and_load() {
        let c = corpus();
        let codec = LatticeCodec::fit(&c, 256, 16, 50, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        codec.save(dir.path()).unwrap();
        let back = LatticeCodec::load(dir.path()).unwrap();
        let lat = codec.encode(&c[1], Some(30)).unwrap();
        assert_eq!(back.encode(&c[1], Some(30)).unwrap(), lat);
        assert_eq!(back.decode(&lat).unwrap(), codec.decode(&lat).unwrap());
    }

    #[test]
    fn layout_violations() {
        let c = corpus();
        let codec = LatticeCodec::fit(&c, 256, 16, 50, 3).unwrap();
        let lat = codec.encode(&c[0], None).unwrap();
        let mut bad = lat.clone();
        bad.tokens.swap(0, 1);
        assert!(matches!(codec.decode(&bad), Err(Error::MalformedToken(_))));
        let mut cut = lat.clone();
        cut.tokens.pop();
        assert!(matches!(codec.decode(&cut), Err(Error::MalformedToken(_))));
        let mut after = lat.clone();
        after.tokens.push(codec.pad());
        after.tokens.push(lat.tokens[0]);
        assert!(codec.decode(&after).is_err());
        let all_pad = Lattice { tokens: vec![codec.pad(); 3], k: codec.vocab() };
        assert!(codec.decode(&all_pad).is_err());
        assert!(codec.encode(&c[0], Some(1)).is_err());
    }
}
