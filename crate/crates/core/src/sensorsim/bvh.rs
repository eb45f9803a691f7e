use crate::geom::Point3;
use crate::meshio::TriangleMesh;

const LEAF_TRIANGLES: usize = 4;
/// Determinant magnitude below which a ray counts as parallel to a triangle.
const PARALLEL_EPS: f64 = 1e-15;
/// Barycentric slack so rays through shared edges and vertices hit at least
/// one of the adjacent faces despite rounding.
const EDGE_EPS: f64 = 1e-12;
/// Bounding boxes are padded by this much (m) for the same reason.
const BOX_PAD: f64 = 1e-9;

/// A ray–triangle hit: distance along the (not necessarily unit) direction,
/// face index and barycentric coordinates of vertices 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: u32,
    pub u: f64,
    pub v: f64,
}

impl RayHit {
    /// Weights of the face's three vertices.
    pub fn barycentric(&self) -> [f64; 3] {
        [1.0 - self.u - self.v, self.u, self.v]
    }
}

/// Möller–Trumbore intersection, two-sided. Returns `(t, u, v)` for `t > t_min`.
pub fn intersect_triangle(origin: Point3, dir: Point3, tri: &[Point3; 3], t_min: f64) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < PARALLEL_EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(p) * inv;
    if !(-EDGE_EPS..=1.0 + EDGE_EPS).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < -EDGE_EPS || u + v > 1.0 + EDGE_EPS {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > t_min).then_some((t, u, v))
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Point3,
    hi: Point3,
}

impl Aabb {
    const EMPTY: Aabb = Aabb {
        lo: Point3 { x: f64::INFINITY, y: f64::INFINITY, z: f64::INFINITY },
        hi: Point3 { x: f64::NEG_INFINITY, y: f64::NEG_INFINITY, z: f64::NEG_INFINITY },
    };

    fn grow(&mut self, p: Point3) {
        self.lo = Point3::new(self.lo.x.min(p.x), self.lo.y.min(p.y), self.lo.z.min(p.z));
        self.hi = Point3::new(self.hi.x.max(p.x), self.hi.y.max(p.y), self.hi.z.max(p.z));
    }

    /// Slab test; entry distance if the ray meets the box before `t_max`.
    fn hit(&self, origin: Point3, inv_dir: Point3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let near = (self.lo[a] - origin[a]) * inv_dir[a];
            let far = (self.hi[a] - origin[a]) * inv_dir[a];
            let (near, far) = if near <= far { (near, far) } else { (far, near) };
            // NaN (0 · ∞ on a slab face) leaves the bound untouched.
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: u32, end: u32 },
    Inner { bounds: Aabb, left: u32, right: u32 },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Bounding-volume hierarchy over mesh faces (median split on centroids).
#[derive(Debug, Clone)]
pub struct Bvh {
    triangles: Vec<[Point3; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let triangles: Vec<[Point3; 3]> = mesh.faces().iter().map(|f| mesh.triangle_points(f)).collect();
        let centroids: Vec<Point3> = triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            build_node(&triangles, &centroids, &mut order, 0, &mut nodes);
        }
        Bvh { triangles, order, nodes }
    }

    /// Nearest hit with `t > t_min` along `origin + t·dir`.
    pub fn intersect(&self, origin: Point3, dir: Point3, t_min: f64) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = Point3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RayHit> = None;
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            let t_max = best.map_or(f64::INFINITY, |b| b.t);
            if node.bounds().hit(origin, inv_dir, t_max).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &f in &self.order[start as usize..end as usize] {
                        if let Some((t, u, v)) = intersect_triangle(origin, dir, &self.triangles[f as usize], t_min) {
                            // Ties go to the lower face index so results do not depend on traversal order.
                            if best.is_none_or(|b| t < b.t || (t == b.t && f < b.face)) {
                                best = Some(RayHit { t, face: f, u, v });
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        best
    }
}

fn build_node(
    triangles: &[[Point3; 3]],
    centroids: &[Point3],
    order: &mut [u32],
    offset: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let mut bounds = Aabb::EMPTY;
    let mut cbounds = Aabb::EMPTY;
    for &f in order.iter() {
        for p in triangles[f as usize] {
            bounds.grow(p);
        }
        cbounds.grow(centroids[f as usize]);
    }
    let pad = Point3::new(BOX_PAD, BOX_PAD, BOX_PAD);
    bounds = Aabb { lo: bounds.lo - pad, hi: bounds.hi + pad };
    let me = nodes.len() as u32;
    let leaf = Node::Leaf { bounds, start: offset as u32, end: (offset + order.len()) as u32 };
    if order.len() <= LEAF_TRIANGLES {
        nodes.push(leaf);
        return me;
    }
    let extent = cbounds.hi - cbounds.lo;
    let axis = (0..3).max_by(|&a, &b| extent[a].total_cmp(&extent[b])).unwrap();
    if extent[axis] == 0.0 {
        nodes.push(leaf);
        return me;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis]));
    nodes.push(Node::Inner { bounds, left: 0, right: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build_node(triangles, centroids, l, offset, nodes);
    let right = build_node(triangles, centroids, r, offset + mid, nodes);
    nodes[me as usize] = Node::Inner { bounds, left, right };
    me
}
