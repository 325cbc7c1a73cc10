//! PLY (binary little-endian or ASCII on read, binary on write) and XYZ text
//! point clouds. Per-point scores travel as the `quality` property.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::V3;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CloudFile {
    pub points: Vec<V3>,
    pub normals: Option<Vec<V3>>,
    pub quality: Option<Vec<f64>>,
    /// PLY `comment` lines, without the keyword.
    pub comments: Vec<String>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_ply(cloud: &CloudFile, w: &mut impl Write) -> Result<()> {
    let n = cloud.points.len();
    if cloud.normals.as_ref().is_some_and(|v| v.len() != n) || cloud.quality.as_ref().is_some_and(|v| v.len() != n) {
        return Err(Error::Shape("per-point attribute length differs from point count".into()));
    }
    let mut h = String::from("ply\nformat binary_little_endian 1.0\n");
    for c in &cloud.comments {
        h.push_str(&format!("comment {}\n", c.replace('\n', " ")));
    }
    h.push_str(&format!("element vertex {n}\n"));
    h.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals.is_some() {
        h.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if cloud.quality.is_some() {
        h.push_str("property double quality\n");
    }
    h.push_str("end_header\n");
    w.write_all(h.as_bytes())?;
    let mut buf = Vec::with_capacity(n * 56);
    for i in 0..n {
        let mut row: Vec<f64> = cloud.points[i].iter().copied().collect();
        if let Some(nv) = &cloud.normals {
            row.extend(nv[i].iter());
        }
        if let Some(q) = &cloud.quality {
            row.push(q[i]);
        }
        for x in row {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

#[derive(Clone, Copy)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(bad(format!("unsupported PLY type {other}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

/// Reads the vertex element of a PLY file. The vertex element must come
/// first when the file is binary.
pub fn read_ply(r: &mut impl Read) -> Result<CloudFile> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    let next = |r: &mut BufReader<_>, line: &mut String| -> Result<()> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(bad("truncated PLY header"));
        }
        Ok(())
    };
    next(&mut r, &mut line)?;
    if line.trim() != "ply" {
        return Err(bad("missing ply magic"));
    }
    let mut binary = None;
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    let mut comments = Vec::new();
    loop {
        next(&mut r, &mut line)?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", "ascii", _] => binary = Some(false),
            ["format", f, _] => return Err(bad(format!("unsupported PLY format {f}"))),
            ["comment", ..] => comments.push(line.trim()["comment".len()..].trim().to_string()),
            ["obj_info", ..] => {}
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse::<usize>().map_err(|_| bad("bad vertex count"))?);
                } else if count.is_none() && binary == Some(true) {
                    return Err(bad("vertex element must come first"));
                }
            }
            ["property", "list", ..] if in_vertex => return Err(bad("list properties on vertices")),
            ["property", ty, name] if in_vertex => props.push((name.to_string(), Scalar::parse(ty)?)),
            ["property", ..] => {}
            _ => return Err(bad(format!("unexpected header line {:?}", line.trim()))),
        }
    }
    let binary = binary.ok_or_else(|| bad("missing format line"))?;
    let n = count.ok_or_else(|| bad("no vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p.0 == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(bad("vertex element lacks x/y/z")),
    };
    let normals = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let quality = col("quality");
    let mut rows = Vec::with_capacity(n);
    if binary {
        let stride: usize = props.iter().map(|p| p.1.size()).sum();
        let mut buf = vec![0u8; stride];
        for _ in 0..n {
            r.read_exact(&mut buf).map_err(|_| bad("truncated PLY body"))?;
            let mut off = 0;
            let mut row = Vec::with_capacity(props.len());
            for (_, t) in &props {
                row.push(t.read(&buf[off..]));
                off += t.size();
            }
            rows.push(row);
        }
    } else {
        for _ in 0..n {
            next(&mut r, &mut line)?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number {t}"))))
                .collect::<Result<_>>()?;
            if row.len() < props.len() {
                return Err(bad("short PLY row"));
            }
            rows.push(row);
        }
    }
    Ok(CloudFile {
        points: rows.iter().map(|r| V3::new(r[x], r[y], r[z])).collect(),
        normals: normals.map(|(a, b, c)| rows.iter().map(|r| V3::new(r[a], r[b], r[c])).collect()),
        quality: quality.map(|q| rows.iter().map(|r| r[q]).collect()),
        comments,
    })
}

/// `x y z [quality]` per line.
pub fn write_xyz(cloud: &CloudFile, w: &mut impl Write) -> Result<()> {
    for (i, p) in cloud.points.iter().enumerate() {
        match &cloud.quality {
            Some(q) => writeln!(w, "{} {} {} {}", p.x, p.y, p.z, q[i])?,
            None => writeln!(w, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    Ok(())
}

pub fn read_xyz(r: &mut impl Read) -> Result<CloudFile> {
    let mut points = Vec::new();
    let mut quality = Vec::new();
    for (ln, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad(format!("line {}: bad number {t}", ln + 1))))
            .collect::<Result<_>>()?;
        if v.len() < 3 {
            return Err(bad(format!("line {}: expected at least 3 columns", ln + 1)));
        }
        points.push(V3::new(v[0], v[1], v[2]));
        if v.len() >= 4 {
            quality.push(v[3]);
        }
    }
    let quality = if !quality.is_empty() && quality.len() == points.len() { Some(quality) } else { None };
    Ok(CloudFile {
        points,
        normals: None,
        quality,
        comments: Vec::new(),
    })
}

fn is_xyz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xyz"))
}

/// Reads by extension: `.xyz` as text, anything else as PLY.
pub fn read_cloud(path: &Path) -> Result<CloudFile> {
    let mut f = std::fs::File::open(path)?;
    if is_xyz(path) {
        read_xyz(&mut f)
    } else {
        read_ply(&mut f)
    }
}

pub fn write_cloud(cloud: &CloudFile, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    if is_xyz(path) {
        write_xyz(cloud, &mut f)?;
    } else {
        write_ply(cloud, &mut f)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> CloudFile {
        CloudFile {
            points: vec![V3::new(0.1, -2.0, 3.5), V3::new(1e-17, 4.0, -0.0)],
            normals: Some(vec![V3::z(), V3::x()]),
            quality: Some(vec![0.25, 1.0]),
            comments: vec!["config_hash abc".into()],
        }
    }

    #[test]
    fn binary_round_trip() {
        let mut buf = Vec::new();
        write_ply(&cloud(), &mut buf).unwrap();
        assert_eq!(read_ply(&mut buf.as_slice()).unwrap(), cloud());
    }

    #[test]
    fn ascii_and_float_input() {
        let txt = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n1 2 3 255\n4 5 6 0\n";
        let c = read_ply(&mut txt.as_bytes()).unwrap();
        assert_eq!(c.points[1], V3::new(4.0, 5.0, 6.0));
        assert!(c.quality.is_none());
        assert_eq!(c.comments, vec!["hi".to_string()]);
        let mut bin = b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty float quality\nend_header\n".to_vec();
        for v in [1.5f32, 2.0, -3.0, 0.5] {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        let c = read_ply(&mut bin.as_slice()).unwrap();
        assert_eq!(c.points[0], V3::new(1.5, 2.0, -3.0));
        assert_eq!(c.quality.unwrap(), vec![0.5]);
        assert!(read_ply(&mut b"ply\nformat binary_big_endian 1.0\nend_header\n".as_slice()).is_err());
    }

    #[test]
    fn xyz_round_trip() {
        let mut c = cloud();
        c.normals = None;
        c.comments.clear();
        let mut buf = Vec::new();
        write_xyz(&c, &mut buf).unwrap();
        assert_eq!(read_xyz(&mut buf.as_slice()).unwrap(), c);
        assert!(read_xyz(&mut "1 2\n".as_bytes()).is_err());
    }
}
