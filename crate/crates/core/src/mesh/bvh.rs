//! Bounding volume hierarchy over mesh triangles.
//!
//! Built once per mesh (median split on the longest centroid axis) and then
//! read-only, so queries can run from many threads.

use crate::so3::Vec3;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.min + self.max)
    }

    /// Slab test; returns the entry distance if the ray hits within `t_max`.
    #[inline]
    fn hit(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for k in 0..3 {
            let a = (self.min[k] - origin[k]) * inv_dir[k];
            let b = (self.max[k] - origin[k]) * inv_dir[k];
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            // NaN from 0 * inf means the ray lies in the slab plane; keep going.
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
    Leaf {
        bounds: Aabb,
        start: usize,
        count: usize,
    },
    Inner {
        bounds: Aabb,
        left: usize,
        right: usize,
    },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Ray–triangle intersection record.
#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub face: usize,
    /// The hit lies within numerical tolerance of a triangle edge or the
    /// ray is nearly parallel to the triangle plane.
    pub ambiguous: bool,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(vertices: &[Vec3], faces: &[[u32; 3]]) -> Bvh {
        let boxes: Vec<Aabb> = faces
            .iter()
            .map(|f| {
                let mut b = Aabb::empty();
                for &i in f {
                    b.grow(&vertices[i as usize]);
                }
                b
            })
            .collect();
        let centers: Vec<Vec3> = boxes.iter().map(|b| b.center()).collect();
        let mut order: Vec<usize> = (0..faces.len()).collect();
        let mut nodes = Vec::with_capacity(2 * faces.len() / LEAF_SIZE + 1);
        if !faces.is_empty() {
            build_recursive(&mut nodes, &mut order, 0, faces.len(), &boxes, &centers);
        }
        Bvh { nodes, order }
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes
            .first()
            .map(|n| *n.bounds())
            .unwrap_or_else(Aabb::empty)
    }

    /// Nearest hit with `t` in `(t_min, t_max)`.
    pub fn closest_hit(
        &self,
        vertices: &[Vec3],
        faces: &[[u32; 3]],
        origin: &Vec3,
        dir: &Vec3,
        t_min: f64,
        t_max: f64,
    ) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds().hit(origin, &inv, limit).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, count, .. } => {
                    for &fi in &self.order[start..start + count] {
                        if let Some(h) = intersect(vertices, faces, fi, origin, dir) {
                            if h.t > t_min && h.t < limit {
                                limit = h.t;
                                best = Some(h);
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

    /// Every hit with `t > t_min`, unsorted.
    pub fn all_hits(
        &self,
        vertices: &[Vec3],
        faces: &[[u32; 3]],
        origin: &Vec3,
        dir: &Vec3,
        t_min: f64,
        out: &mut Vec<Hit>,
    ) {
        out.clear();
        if self.nodes.is_empty() {
            return;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds().hit(origin, &inv, f64::INFINITY).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, count, .. } => {
                    for &fi in &self.order[start..start + count] {
                        if let Some(h) = intersect(vertices, faces, fi, origin, dir) {
                            if h.t > t_min {
                                out.push(h);
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
    }
}

fn build_recursive(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    start: usize,
    end: usize,
    boxes: &[Aabb],
    centers: &[Vec3],
) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &i in &order[start..end] {
        bounds = bounds.union(&boxes[i]);
        cbounds.grow(&centers[i]);
    }
    let index = nodes.len();
    let count = end - start;
    let ext = cbounds.extent();
    if count <= LEAF_SIZE || ext.max() <= 0.0 {
        nodes.push(Node::Leaf {
            bounds,
            start,
            count,
        });
        return index;
    }
    let axis = ext.imax();
    let mid = start + count / 2;
    order[start..end].select_nth_unstable_by(count / 2, |&a, &b| {
        centers[a][axis].total_cmp(&centers[b][axis])
    });
    nodes.push(Node::Leaf {
        bounds,
        start,
        count,
    });
    let left = build_recursive(nodes, order, start, mid, boxes, centers);
    let right = build_recursive(nodes, order, mid, end, boxes, centers);
    nodes[index] = Node::Inner {
        bounds,
        left,
        right,
    };
    index
}

const EDGE_EPS: f64 = 1e-9;

/// Möller–Trumbore intersection. Back faces count as hits.
#[inline]
pub fn intersect(
    vertices: &[Vec3],
    faces: &[[u32; 3]],
    face: usize,
    origin: &Vec3,
    dir: &Vec3,
) -> Option<Hit> {
    let [a, b, c] = faces[face];
    let v0 = vertices[a as usize];
    let e1 = vertices[b as usize] - v0;
    let e2 = vertices[c as usize] - v0;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    let scale = e1.norm() * e2.norm() * dir.norm();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(&p) * inv_det;
    if !(-EDGE_EPS..=1.0 + EDGE_EPS).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv_det;
    if v < -EDGE_EPS || u + v > 1.0 + EDGE_EPS {
        return None;
    }
    let t = e2.dot(&q) * inv_det;
    let ambiguous =
        u < EDGE_EPS || v < EDGE_EPS || u + v > 1.0 - EDGE_EPS || det.abs() <= 1e-9 * scale;
    Some(Hit { t, face, ambiguous })
}
