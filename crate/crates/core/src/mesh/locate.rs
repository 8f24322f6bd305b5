//! Closest-point queries against a triangle soup.

use nalgebra::Vector3;

/// Meshes with at least this many triangles get a bounding-volume tree.
pub const BVH_THRESHOLD: usize = 10_000;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
pub(crate) enum Locator {
    Exhaustive,
    Tree(Bvh),
}

impl Locator {
    pub(crate) fn build(vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> Self {
        if triangles.len() < BVH_THRESHOLD {
            Locator::Exhaustive
        } else {
            Locator::Tree(Bvh::build(vertices, triangles))
        }
    }

    pub(crate) fn closest(
        &self,
        vertices: &[Vector3<f64>],
        triangles: &[[usize; 3]],
        p: &Vector3<f64>,
        tie: f64,
    ) -> (usize, [f64; 3]) {
        match self {
            Locator::Exhaustive => exhaustive(vertices, triangles, p, tie),
            Locator::Tree(bvh) => bvh.closest(vertices, triangles, p, tie),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Best {
    dist2: f64,
    triangle: usize,
    bary: [f64; 3],
}

impl Best {
    fn empty() -> Self {
        Self {
            dist2: f64::INFINITY,
            triangle: usize::MAX,
            bary: [0.0; 3],
        }
    }

    // strictly closer, or tied within `tie` with a lower index
    fn offer(&mut self, dist2: f64, triangle: usize, bary: [f64; 3], tie: f64) {
        let better = dist2 < self.dist2 - tie
            || ((dist2 - self.dist2).abs() <= tie && triangle < self.triangle);
        if better {
            *self = Best {
                dist2,
                triangle,
                bary,
            };
        }
    }
}

pub(crate) fn exhaustive(
    vertices: &[Vector3<f64>],
    triangles: &[[usize; 3]],
    p: &Vector3<f64>,
    tie: f64,
) -> (usize, [f64; 3]) {
    let mut best = Best::empty();
    for (t, tri) in triangles.iter().enumerate() {
        let (q, bary) = closest_on_triangle(p, tri.map(|i| vertices[i]));
        best.offer((q - p).norm_squared(), t, bary, tie);
    }
    (best.triangle, best.bary)
}

/// Closest point on triangle `abc` to `p` with its barycentric weights.
pub(crate) fn closest_on_triangle(
    p: &Vector3<f64>,
    [a, b, c]: [Vector3<f64>; 3],
) -> (Vector3<f64>, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    // leaf: range into `order`; inner: child node indices
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    fn build(vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> Self {
        let centroids: Vec<Vector3<f64>> = triangles
            .iter()
            .map(|t| (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0)
            .collect();
        let mut bvh = Bvh {
            nodes: Vec::new(),
            order: (0..triangles.len()).collect(),
        };
        bvh.split(vertices, triangles, &centroids, 0, triangles.len());
        bvh
    }

    fn split(
        &mut self,
        vertices: &[Vector3<f64>],
        triangles: &[[usize; 3]],
        centroids: &[Vector3<f64>],
        start: usize,
        end: usize,
    ) -> usize {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &t in &self.order[start..end] {
            for &v in &triangles[t] {
                lo = lo.inf(&vertices[v]);
                hi = hi.sup(&vertices[v]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Leaf { start, end },
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = (hi - lo).imax();
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        let left = self.split(vertices, triangles, centroids, start, mid);
        let right = self.split(vertices, triangles, centroids, mid, end);
        self.nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    fn closest(
        &self,
        vertices: &[Vector3<f64>],
        triangles: &[[usize; 3]],
        p: &Vector3<f64>,
        tie: f64,
    ) -> (usize, [f64; 3]) {
        let mut best = Best::empty();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if box_distance2(&node.lo, &node.hi, p) > best.dist2 + tie {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &t in &self.order[start..end] {
                        let (q, bary) = closest_on_triangle(p, triangles[t].map(|i| vertices[i]));
                        best.offer((q - p).norm_squared(), t, bary, tie);
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = box_distance2(&self.nodes[left].lo, &self.nodes[left].hi, p);
                    let dr = box_distance2(&self.nodes[right].lo, &self.nodes[right].hi, p);
                    // nearer child on top
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        (best.triangle, best.bary)
    }
}

fn box_distance2(lo: &Vector3<f64>, hi: &Vector3<f64>, p: &Vector3<f64>) -> f64 {
    (0..3)
        .map(|i| {
            let d = (lo[i] - p[i]).max(0.0).max(p[i] - hi[i]);
            d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_sphere_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense sampling of the triangle as an independent closest-point check.
    fn sampled_distance2(p: &Vector3<f64>, tri: [Vector3<f64>; 3]) -> f64 {
        let steps = 200;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let (u, v) = (i as f64 / steps as f64, j as f64 / steps as f64);
                let q = tri[0] * (1.0 - u - v) + tri[1] * u + tri[2] * v;
                best = best.min((q - p).norm_squared());
            }
        }
        best
    }

    #[test]
    fn closest_point_matches_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tri = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(2.0, 0.1, 0.0),
            Vector3::new(0.3, 1.5, 0.4),
        ];
        for _ in 0..200 {
            let p = Vector3::new(
                rng.random_range(-2.0..4.0),
                rng.random_range(-2.0..4.0),
                rng.random_range(-2.0..2.0),
            );
            let (q, bary) = closest_on_triangle(&p, tri);
            let d = (q - p).norm_squared();
            assert!(d <= sampled_distance2(&p, tri) + 1e-12);
            let recon = tri[0] * bary[0] + tri[1] * bary[1] + tri[2] * bary[2];
            assert!((recon - q).norm() < 1e-12);
            assert!(bary.iter().all(|w| *w >= -1e-12));
        }
    }

    #[test]
    fn bvh_agrees_with_exhaustive() {
        let mesh = unit_sphere_mesh(3).unwrap();
        let bvh = Bvh::build(mesh.vertices(), mesh.triangles());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let p = Vector3::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
            );
            let a = exhaustive(mesh.vertices(), mesh.triangles(), &p, 1e-20);
            let b = bvh.closest(mesh.vertices(), mesh.triangles(), &p, 1e-20);
            assert_eq!(a.0, b.0);
            for i in 0..3 {
                assert!((a.1[i] - b.1[i]).abs() < 1e-14);
            }
        }
    }
}
