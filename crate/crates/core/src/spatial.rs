//! Static kd-tree over 3-D points for nearest-neighbour queries.

use crate::V3;

#[derive(Clone, Debug)]
pub struct KdTree {
    /// Points in tree order; the node of a subrange is its midpoint.
    points: Vec<V3>,
    /// Original index of each point in `points`.
    order: Vec<usize>,
    /// Inverse of `order`.
    slot: Vec<usize>,
    axes: Vec<u8>,
}

const LEAF: usize = 8;

impl KdTree {
    pub fn new(points: &[V3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0; points.len()];
        build(points, &mut order, &mut axes, 0, points.len());
        let mut slot = vec![0; order.len()];
        for (j, &i) in order.iter().enumerate() {
            slot[i] = j;
        }
        KdTree {
            points: order.iter().map(|&i| points[i]).collect(),
            order,
            slot,
            axes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and squared distance of the closest point; ties resolve to the
    /// smallest index.
    pub fn nearest(&self, q: &V3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        self.nearest_from(q, (usize::MAX, f64::INFINITY))
    }

    /// As [`KdTree::nearest`], seeded with point `hint` (for instance the
    /// answer to a nearby query) to tighten pruning. Same result.
    pub fn nearest_hinted(&self, q: &V3, hint: usize) -> Option<(usize, f64)> {
        let j = *self.slot.get(hint)?;
        self.nearest_from(q, (hint, (self.points[j] - q).norm_squared()))
    }

    fn nearest_from(&self, q: &V3, mut best: (usize, f64)) -> Option<(usize, f64)> {
        self.search(q, 0, self.points.len(), [0.0; 3], 0.0, &mut |i, d| {
            if d < best.1 || (d == best.1 && i < best.0) {
                best = (i, d);
            }
            best.1
        });
        Some(best)
    }

    /// The `k` closest points sorted by (squared distance, index).
    pub fn knn(&self, q: &V3, k: usize) -> Vec<(usize, f64)> {
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k == 0 {
            return Vec::new();
        }
        self.search(q, 0, self.points.len(), [0.0; 3], 0.0, &mut |i, d| {
            if heap.len() < k || (d, i) < *heap.last().expect("non-empty") {
                let at = heap.partition_point(|e| *e < (d, i));
                heap.insert(at, (d, i));
                heap.truncate(k);
            }
            if heap.len() < k {
                f64::INFINITY
            } else {
                heap[k - 1].0
            }
        });
        heap.into_iter().map(|(d, i)| (i, d)).collect()
    }

    /// Visits candidate points; `visit` returns the current pruning radius².
    /// `off` holds the per-axis distance from `q` to the subrange's cell and
    /// `rd` its squared norm.
    fn search(
        &self,
        q: &V3,
        lo: usize,
        hi: usize,
        mut off: [f64; 3],
        rd: f64,
        visit: &mut impl FnMut(usize, f64) -> f64,
    ) -> f64 {
        if hi - lo <= LEAF {
            let mut r = f64::INFINITY;
            for j in lo..hi {
                r = visit(self.order[j], (self.points[j] - q).norm_squared());
            }
            return r;
        }
        let mid = (lo + hi) / 2;
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - self.points[mid][axis];
        let mut r = visit(self.order[mid], (self.points[mid] - q).norm_squared());
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        if near.0 < near.1 {
            r = self.search(q, near.0, near.1, off, rd, visit);
        }
        let far_rd = rd - off[axis] * off[axis] + diff * diff;
        if far.0 < far.1 && far_rd <= r {
            off[axis] = diff;
            r = self.search(q, far.0, far.1, off, far_rd, visit);
        }
        r
    }
}

fn build(pts: &[V3], order: &mut [usize], axes: &mut [u8], lo: usize, hi: usize) {
    if hi - lo <= LEAF {
        return;
    }
    let mut mn = V3::repeat(f64::INFINITY);
    let mut mx = V3::repeat(f64::NEG_INFINITY);
    for &i in &order[lo..hi] {
        mn = mn.inf(&pts[i]);
        mx = mx.sup(&pts[i]);
    }
    let axis = (mx - mn).imax();
    let mid = (lo + hi) / 2;
    order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
    axes[mid] = axis as u8;
    build(pts, order, axes, lo, mid);
    build(pts, order, axes, mid + 1, hi);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<V3> = (0..700).map(|_| V3::new(rng.random(), rng.random(), rng.random())).collect();
        let tree = KdTree::new(&pts);
        for _ in 0..200 {
            let q = V3::new(rng.random(), rng.random(), rng.random());
            let mut brute: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| ((p - q).norm_squared(), i)).collect();
            brute.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (i, d) = tree.nearest(&q).unwrap();
            assert_eq!((d, i), brute[0]);
            assert_eq!(tree.nearest_hinted(&q, rng.random_range(0..pts.len())), Some((i, d)));
            let knn = tree.knn(&q, 16);
            let expect: Vec<(usize, f64)> = brute[..16].iter().map(|&(d, i)| (i, d)).collect();
            assert_eq!(knn, expect);
        }
    }

    #[test]
    fn duplicates_resolve_to_lowest_index() {
        let pts = vec![V3::new(1.0, 0.0, 0.0); 40];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&V3::zeros()).unwrap().0, 0);
        assert_eq!(tree.knn(&V3::zeros(), 3).iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(KdTree::new(&[]).nearest(&V3::zeros()).is_none());
    }
}
