//! Binary persistence: `CSFVQ1` codebooks (with a JSON sidecar) and
//! `CSFMAT1` row-major matrices.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Codebook, Level};

const VQ_MAGIC: &[u8; 6] = b"CSFVQ1";
const MAT_MAGIC: &[u8; 7] = b"CSFMAT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookMeta {
    pub level: String,
    pub k: usize,
    pub d_latent: usize,
    pub seed: u64,
    pub mode: String,
    pub decay: f64,
    /// Seed of the projection that maps raw features into this codebook's
    /// latent space.
    pub projection_seed: u64,
    /// Free-form provenance, such as the configuration that produced it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_rows(w: &mut impl Write, rows: &[Vec<f64>]) -> Result<()> {
    for r in rows {
        for x in r {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_rows(r: &mut impl Read, n: usize, d: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        let mut row = Vec::with_capacity(d);
        for _ in 0..d {
            r.read_exact(&mut b)?;
            row.push(f64::from_le_bytes(b));
        }
        out.push(row);
    }
    Ok(out)
}

pub fn save_codebook(cb: &Codebook, meta: &CodebookMeta, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(VQ_MAGIC)?;
    f.write_all(&cb.level.tag().to_le_bytes())?;
    f.write_all(&(cb.len() as u32).to_le_bytes())?;
    f.write_all(&(cb.dim() as u32).to_le_bytes())?;
    write_rows(&mut f, &cb.entries)?;
    f.flush()?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(sidecar(path), json)?;
    Ok(())
}

/// Loads a codebook; the sidecar is optional.
pub fn load_codebook(path: &Path) -> Result<(Codebook, Option<CodebookMeta>)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 6];
    f.read_exact(&mut magic)?;
    if &magic != VQ_MAGIC {
        return Err(Error::Format("not a codebook file".into()));
    }
    let level = Level::from_tag(read_u32(&mut f)?).ok_or_else(|| Error::Format("unknown level tag".into()))?;
    let k = read_u32(&mut f)? as usize;
    let d = read_u32(&mut f)? as usize;
    let entries = read_rows(&mut f, k, d)?;
    let cb = Codebook::from_entries(level, entries)?;
    let meta = match std::fs::read_to_string(sidecar(path)) {
        Ok(s) => Some(serde_json::from_str(&s).map_err(|e| Error::Format(e.to_string()))?),
        Err(_) => None,
    };
    Ok((cb, meta))
}

pub fn save_matrix(rows: &[Vec<f64>], path: &Path) -> Result<()> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("ragged matrix".into()));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(MAT_MAGIC)?;
    f.write_all(&(rows.len() as u32).to_le_bytes())?;
    f.write_all(&(d as u32).to_le_bytes())?;
    write_rows(&mut f, rows)?;
    f.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 7];
    f.read_exact(&mut magic)?;
    if &magic != MAT_MAGIC {
        return Err(Error::Format("not a matrix file".into()));
    }
    let n = read_u32(&mut f)? as usize;
    let d = read_u32(&mut f)? as usize;
    read_rows(&mut f, n, d)
}
