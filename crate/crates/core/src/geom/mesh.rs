use std::collections::HashMap;

use crate::V3;

/// Surface primitive a triangle was generated from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrimitiveLabel {
    PlanarCap,
    CylindricalSide,
    PlanarSide,
}

impl PrimitiveLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PrimitiveLabel::PlanarCap => "planar_cap",
            PrimitiveLabel::CylindricalSide => "cylindrical_side",
            PrimitiveLabel::PlanarSide => "planar_side",
        }
    }

    pub fn index(self) -> u8 {
        match self {
            PrimitiveLabel::PlanarCap => 0,
            PrimitiveLabel::CylindricalSide => 1,
            PrimitiveLabel::PlanarSide => 2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<V3>,
    pub triangles: Vec<[usize; 3]>,
    pub face_primitive: Vec<PrimitiveLabel>,
    /// Index of the analytic face (cap, wall) each triangle belongs to,
    /// unique within a block.
    pub face_id: Vec<usize>,
}

impl TriMesh {
    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [V3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Non-normalized normal, twice the area in length.
    pub fn area_vector(&self, t: usize) -> V3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.area_vector(t).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Signed volume by the divergence theorem; positive for outward
    /// orientation.
    pub fn volume(&self) -> f64 {
        (0..self.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.dot(&b.cross(&c))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn bounds(&self) -> Option<(V3, V3)> {
        let mut it = self.triangles.iter().flatten().map(|&i| self.vertices[i]);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| (lo.inf(&p), hi.sup(&p))))
    }

    /// Number of triangles using each undirected edge.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut m = HashMap::with_capacity(self.triangles.len() * 3 / 2);
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        m
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        !self.is_empty() && self.edge_counts().values().all(|&c| c == 2)
    }

    pub fn push(&mut self, tri: [V3; 3], label: PrimitiveLabel, face: usize) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&tri);
        self.triangles.push([base, base + 1, base + 2]);
        self.face_primitive.push(label);
        self.face_id.push(face);
    }

    pub fn append(&mut self, other: &TriMesh) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        self.face_primitive.extend_from_slice(&other.face_primitive);
        self.face_id.extend_from_slice(&other.face_id);
    }

    /// Merges vertices closer than `tol` and drops unused ones.
    pub fn welded(&self, tol: f64) -> TriMesh {
        let cell = |p: &V3| {
            (
                (p.x / tol).floor() as i64,
                (p.y / tol).floor() as i64,
                (p.z / tol).floor() as i64,
            )
        };
        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        let mut out_vertices: Vec<V3> = Vec::new();
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &i in t {
                used[i] = true;
            }
        }
        for (i, p) in self.vertices.iter().enumerate() {
            if !used[i] {
                continue;
            }
            let c = cell(p);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = grid.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                            for &j in list {
                                if (out_vertices[j] - p).norm() <= tol {
                                    found = Some(j);
                                    break 'search;
                                }
                            }
                        }
                    }
                }
            }
            remap[i] = found.unwrap_or_else(|| {
                out_vertices.push(*p);
                let j = out_vertices.len() - 1;
                grid.entry(c).or_default().push(j);
                j
            });
        }
        let mut out = TriMesh {
            vertices: out_vertices,
            ..TriMesh::default()
        };
        for (k, t) in self.triangles.iter().enumerate() {
            let r = [remap[t[0]], remap[t[1]], remap[t[2]]];
            if r[0] == r[1] || r[1] == r[2] || r[0] == r[2] {
                continue;
            }
            out.triangles.push(r);
            out.face_primitive.push(self.face_primitive[k]);
            out.face_id.push(self.face_id[k]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> TriMesh {
        TriMesh {
            vertices: vec![V3::zeros(), V3::x(), V3::y(), V3::z()],
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
            face_primitive: vec![PrimitiveLabel::PlanarSide; 4],
            face_id: vec![0, 1, 2, 3],
        }
    }

    #[test]
    fn tetra_volume_and_closure() {
        let m = tetra();
        assert!((m.volume() - 1.0 / 6.0).abs() < 1e-15);
        assert!(m.is_closed());
        let (lo, hi) = m.bounds().unwrap();
        assert_eq!((lo, hi), (V3::zeros(), V3::new(1.0, 1.0, 1.0)));
    }

    #[test]
    fn weld_reconnects_soup() {
        let m = tetra();
        let mut soup = TriMesh::default();
        for t in 0..m.len() {
            soup.push(m.corners(t), m.face_primitive[t], t);
        }
        assert!(!soup.is_closed());
        let w = soup.welded(1e-9);
        assert_eq!(w.vertices.len(), 4);
        assert!(w.is_closed());
    }
}
