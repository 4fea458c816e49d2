//! Static 3-d tree for nearest-neighbour queries.
//!
//! All queries order candidates by `(squared distance, point index)`, so
//! equidistant neighbours resolve to the lowest index regardless of how the
//! tree happened to split.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::se3::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Copy, Debug)]
struct Node {
    lo: u32,
    hi: u32,
    // 3 marks a leaf
    axis: u8,
    split: f64,
    left: u32,
    right: u32,
}

#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Neighbor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.index.cmp(&other.index))
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, lo: usize, hi: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            lo: lo as u32,
            hi: hi as u32,
            axis: 3,
            split: 0.0,
            left: 0,
            right: 0,
        });
        if hi - lo <= LEAF_SIZE {
            return id;
        }
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[lo..hi] {
            let p = &self.points[i as usize];
            min = min.inf(p);
            max = max.sup(p);
        }
        let axis = (max - min).imax();
        if max[axis] <= min[axis] {
            // all points coincide
            return id;
        }
        let mid = lo + (hi - lo) / 2;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a as usize][axis]
                .total_cmp(&points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let split = self.points[self.order[mid] as usize][axis];
        let left = self.build(lo, mid);
        let right = self.build(mid, hi);
        let node = &mut self.nodes[id as usize];
        node.axis = axis as u8;
        node.split = split;
        node.left = left;
        node.right = right;
        id
    }

    /// Nearest point to `q`, or `None` for an empty tree.
    pub fn nearest(&self, q: &Vec3) -> Option<Neighbor> {
        self.nearest_within(q, f64::INFINITY)
    }

    /// Nearest point with distance `<= radius`.
    pub fn nearest_within(&self, q: &Vec3, radius: f64) -> Option<Neighbor> {
        if self.is_empty() {
            return None;
        }
        let mut best = Neighbor {
            index: usize::MAX,
            dist_sq: radius * radius,
        };
        self.nearest_rec(0, q, &mut best);
        (best.index != usize::MAX).then_some(best)
    }

    fn nearest_rec(&self, node: u32, q: &Vec3, best: &mut Neighbor) {
        let n = self.nodes[node as usize];
        if n.axis == 3 {
            for &i in &self.order[n.lo as usize..n.hi as usize] {
                let cand = Neighbor {
                    index: i as usize,
                    dist_sq: (self.points[i as usize] - q).norm_squared(),
                };
                if cand.dist_sq <= best.dist_sq && (best.index == usize::MAX || cand < *best) {
                    *best = cand;
                }
            }
            return;
        }
        let diff = q[n.axis as usize] - n.split;
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.nearest_rec(near, q, best);
        if diff * diff <= best.dist_sq {
            self.nearest_rec(far, q, best);
        }
    }

    /// The `k` nearest points sorted by `(distance, index)`. Returns fewer
    /// when the tree holds fewer than `k` points.
    pub fn knn(&self, q: &Vec3, k: usize) -> Vec<Neighbor> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, q, k, &mut heap);
        heap.into_sorted_vec()
    }

    fn knn_rec(&self, node: u32, q: &Vec3, k: usize, heap: &mut BinaryHeap<Neighbor>) {
        let n = self.nodes[node as usize];
        if n.axis == 3 {
            for &i in &self.order[n.lo as usize..n.hi as usize] {
                let cand = Neighbor {
                    index: i as usize,
                    dist_sq: (self.points[i as usize] - q).norm_squared(),
                };
                if heap.len() < k {
                    heap.push(cand);
                } else if cand < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(cand);
                }
            }
            return;
        }
        let diff = q[n.axis as usize] - n.split;
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.knn_rec(near, q, k, heap);
        if heap.len() < k || diff * diff <= heap.peek().unwrap().dist_sq {
            self.knn_rec(far, q, k, heap);
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn brute_knn(points: &[Vec3], q: &Vec3, k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = points
            .iter()
            .enumerate()
            .map(|(index, p)| Neighbor {
                index,
                dist_sq: (p - q).norm_squared(),
            })
            .collect();
        all.sort();
        all.truncate(k);
        all
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let mut pts = vec![Vec3::new(1.0, 0.0, 0.0); 20];
        pts.extend(vec![Vec3::new(-1.0, 0.0, 0.0); 20]);
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest(&Vec3::zeros()).unwrap().index, 0);
        let knn = tree.knn(&Vec3::zeros(), 5);
        assert_eq!(
            knn.iter().map(|n| n.index).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn radius_limits_search() {
        let tree = KdTree::new(&[Vec3::new(1.0, 0.0, 0.0)]);
        assert!(tree.nearest_within(&Vec3::zeros(), 0.5).is_none());
        assert!(tree.nearest_within(&Vec3::zeros(), 1.0).is_some());
        assert!(KdTree::new(&[]).nearest(&Vec3::zeros()).is_none());
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            raw in prop::collection::vec((-5i32..5, -5i32..5, -5i32..5), 1..120),
            q in (-6i32..6, -6i32..6, -6i32..6),
            k in 1usize..12,
        ) {
            // integer grid forces plenty of exact ties
            let pts: Vec<Vec3> = raw.iter().map(|&(x, y, z)| Vec3::new(x as f64, y as f64, z as f64) * 0.1).collect();
            let q = Vec3::new(q.0 as f64, q.1 as f64, q.2 as f64) * 0.1;
            let tree = KdTree::new(&pts);
            prop_assert_eq!(tree.knn(&q, k), brute_knn(&pts, &q, k));
            prop_assert_eq!(tree.nearest(&q).unwrap(), brute_knn(&pts, &q, 1)[0]);
        }
    }
}
