use crate::geom::Point3;

/// Points per leaf.
pub const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Median-split k-d tree over mesh vertices.
///
/// Neighbors are ordered by `(squared distance, vertex id)`, so ties resolve
/// to the lower id and results match an exhaustive scan exactly.
#[derive(Debug, Clone)]
pub struct VertexIndex {
    points: Vec<Point3>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

/// A neighbor: vertex id and squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub distance_squared: f64,
}

impl Neighbor {
    fn key_lt(&self, other: &Neighbor) -> bool {
        (self.distance_squared, self.id) < (other.distance_squared, other.id)
    }
}

impl VertexIndex {
    pub fn build(vertices: &[Point3]) -> VertexIndex {
        let mut order: Vec<u32> = (0..vertices.len() as u32).collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            build_node(vertices, &mut order, 0, &mut nodes);
        }
        VertexIndex { points: order.iter().map(|&i| vertices[i as usize]).collect(), ids: order, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest vertices, closest first (fewer if the index is smaller).
    pub fn nearest_k(&self, query: Point3, k: usize) -> Vec<Neighbor> {
        let mut best = Vec::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, query, k, &mut best);
        }
        best
    }

    /// The three nearest vertex ids, or `None` when the mesh has fewer than three.
    pub fn nearest3(&self, query: Point3) -> Option<[Neighbor; 3]> {
        let n = self.nearest_k(query, 3);
        (n.len() == 3).then(|| [n[0], n[1], n[2]])
    }

    fn search(&self, node: usize, q: Point3, k: usize, best: &mut Vec<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start as usize..end as usize {
                    let cand = Neighbor { id: self.ids[i], distance_squared: self.points[i].distance_squared(q) };
                    if best.len() == k && !cand.key_lt(&best[k - 1]) {
                        continue;
                    }
                    let pos = best.iter().position(|b| cand.key_lt(b)).unwrap_or(best.len());
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near as usize, q, k, best);
                // `<=` keeps equal-distance candidates reachable for id tie-breaks.
                if best.len() < k || diff * diff <= best[k - 1].distance_squared {
                    self.search(far as usize, q, k, best);
                }
            }
        }
    }
}

fn build_node(vertices: &[Point3], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let me = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf { start: offset as u32, end: (offset + order.len()) as u32 });
        return me;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = vertices[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
    if hi[axis] - lo[axis] == 0.0 {
        // All points coincide; nothing to split on.
        nodes.push(Node::Leaf { start: offset as u32, end: (offset + order.len()) as u32 });
        return me;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| vertices[a as usize][axis].total_cmp(&vertices[b as usize][axis]));
    let value = vertices[order[mid] as usize][axis];
    nodes.push(Node::Split { axis: axis as u8, value, left: 0, right: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build_node(vertices, l, offset, nodes);
    let right = build_node(vertices, r, offset + mid, nodes);
    nodes[me as usize] = Node::Split { axis: axis as u8, value, left, right };
    me
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Point3], q: Point3, k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = points
            .iter()
            .enumerate()
            .map(|(i, p)| Neighbor { id: i as u32, distance_squared: p.distance_squared(q) })
            .collect();
        all.sort_by(|a, b| (a.distance_squared, a.id).partial_cmp(&(b.distance_squared, b.id)).unwrap());
        all.truncate(k);
        all
    }

    #[test]
    fn matches_brute_force_including_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // A regular grid produces many exact distance ties.
        let mut pts: Vec<Point3> = (0..400).map(|i| Point3::new((i % 20) as f64, (i / 20) as f64, 0.0)).collect();
        pts.extend((0..300).map(|_| {
            Point3::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0), rng.random_range(-1.0..1.0))
        }));
        let index = VertexIndex::build(&pts);
        for _ in 0..2000 {
            let q = Point3::new(rng.random_range(-2.0..22.0), rng.random_range(-2.0..22.0), 0.0);
            assert_eq!(index.nearest_k(q, 3), brute(&pts, q, 3));
        }
        for i in 0..50 {
            let q = Point3::new((i % 7) as f64 + 0.5, (i % 5) as f64, 0.0);
            assert_eq!(index.nearest_k(q, 5), brute(&pts, q, 5));
        }
    }

    #[test]
    fn small_and_degenerate_inputs() {
        assert!(VertexIndex::build(&[]).nearest3(Point3::ZERO).is_none());
        let two = [Point3::ZERO, Point3::new(1.0, 0.0, 0.0)];
        assert!(VertexIndex::build(&two).nearest3(Point3::ZERO).is_none());
        let same = vec![Point3::new(1.0, 1.0, 1.0); 40];
        let idx = VertexIndex::build(&same);
        let n = idx.nearest3(Point3::ZERO).unwrap();
        assert_eq!(n.map(|x| x.id), [0, 1, 2]);
    }
}
