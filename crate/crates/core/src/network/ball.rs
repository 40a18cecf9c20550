use std::collections::HashMap;
use std::ops::Range;

use sha2::{Digest, Sha256};

use super::{Network, VertexId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The finite piece `B(o, R) = {d(o, w) < R}` of a rooted network together
/// with its sphere `{d(o, w) = R}`.
///
/// Vertices are indexed densely in breadth-first order from the root, so
/// index 0 is the root and every distance layer is a contiguous range. The
/// stored edges are those with at least one interior endpoint; interior
/// vertices see their full neighborhood, sphere vertices see only their
/// interior neighbors.
#[derive(Clone, Debug)]
pub struct Ball<T> {
    radius: usize,
    vertices: Vec<VertexId>,
    index: HashMap<VertexId, usize>,
    layer_start: Vec<usize>,
    offsets: Vec<usize>,
    adjacency: Vec<usize>,
    conductance: Vec<T>,
    degree: Vec<T>,
    bfs_parent: Vec<usize>,
    min_ratio: Vec<f64>,
    network_hash: String,
    hash: String,
}

impl<T: Scalar> Ball<T> {
    /// Extracts `B(o, radius)` and its sphere by breadth-first search.
    pub fn extract(net: &Network, radius: usize) -> Result<Self> {
        Self::extract_bounded(net, radius, usize::MAX)
    }

    /// As [`Ball::extract`], failing with `VertexBudget` once more than
    /// `limit` vertices have been discovered.
    pub fn extract_bounded(net: &Network, radius: usize, limit: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::InvalidRadius);
        }
        let root = net.root();
        let mut vertices = vec![root];
        let mut dist = vec![0usize];
        let mut bfs_parent = vec![0usize];
        let mut index = HashMap::from([(root, 0usize)]);
        let mut lists: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut scratch = Vec::new();
        let mut head = 0;
        while head < vertices.len() && dist[head] < radius {
            let v = vertices[head];
            net.neighbors_into(v, &mut scratch);
            let mut list = Vec::with_capacity(scratch.len());
            for &(u, c) in &scratch {
                let j = *index.entry(u).or_insert_with(|| {
                    vertices.push(u);
                    dist.push(dist[head] + 1);
                    bfs_parent.push(head);
                    vertices.len() - 1
                });
                list.push((j, c));
            }
            lists.push(list);
            head += 1;
            if vertices.len() > limit {
                return Err(Error::VertexBudget { radius, limit });
            }
        }
        let n_interior = lists.len();
        let n = vertices.len();

        // Sphere vertices receive the reverse of their interior edges.
        let mut sphere_lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n - n_interior];
        for (i, list) in lists.iter().enumerate() {
            for &(j, c) in list {
                if j >= n_interior {
                    sphere_lists[j - n_interior].push((i, c));
                }
            }
        }

        let mut offsets = Vec::with_capacity(n + 1);
        let mut adjacency = Vec::new();
        let mut conductance = Vec::new();
        let mut degree = Vec::with_capacity(n);
        let mut min_ratio = Vec::with_capacity(n_interior);
        offsets.push(0);
        for list in lists.iter().chain(sphere_lists.iter()) {
            let mut total = 0.0;
            for &(j, c) in list {
                adjacency.push(j);
                conductance.push(T::of(c));
                total += c;
            }
            degree.push(T::of(total));
            offsets.push(adjacency.len());
        }
        for list in &lists {
            let max = list.iter().fold(0.0f64, |m, &(_, c)| m.max(c));
            let min = list.iter().fold(f64::INFINITY, |m, &(_, c)| m.min(c));
            min_ratio.push(if max > 0.0 { min / max } else { 1.0 });
        }

        let mut layer_start = vec![0usize; radius + 2];
        for k in 0..=radius + 1 {
            layer_start[k] = dist.partition_point(|&d| d < k);
        }

        let mut hasher = Sha256::new();
        hasher.update(net.hash().as_bytes());
        hasher.update(radius.to_le_bytes());
        let hash = hex::encode(hasher.finalize());

        Ok(Ball {
            radius,
            vertices,
            index,
            layer_start,
            offsets,
            adjacency,
            conductance,
            degree,
            bfs_parent,
            min_ratio,
            network_hash: net.hash().to_string(),
            hash,
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn interior_len(&self) -> usize {
        self.layer_start[self.radius]
    }

    pub fn interior(&self) -> Range<usize> {
        0..self.interior_len()
    }

    pub fn sphere(&self) -> Range<usize> {
        self.layer(self.radius)
    }

    /// Indices at graph distance exactly `k` (empty beyond the radius).
    pub fn layer(&self, k: usize) -> Range<usize> {
        if k > self.radius {
            return self.len()..self.len();
        }
        self.layer_start[k]..self.layer_start[k + 1]
    }

    /// True when the sphere is empty: the ball is the whole finite network.
    pub fn exhausted(&self) -> bool {
        self.sphere().is_empty()
    }

    pub fn is_interior(&self, i: usize) -> bool {
        i < self.interior_len()
    }

    pub fn distance(&self, i: usize) -> usize {
        self.layer_start.partition_point(|&s| s <= i) - 1
    }

    pub fn vertex(&self, i: usize) -> VertexId {
        self.vertices[i]
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn index_of(&self, v: &VertexId) -> Option<usize> {
        self.index.get(v).copied()
    }

    /// Index of `v`, or `VertexOutsideBall`.
    pub fn locate(&self, v: &VertexId) -> Result<usize> {
        self.index_of(v).ok_or_else(|| Error::VertexOutsideBall(v.to_string()))
    }

    /// Neighbor indices and conductances of vertex `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.adjacency[range.clone()].iter().copied().zip(self.conductance[range].iter().copied())
    }

    pub fn degree_of(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Total conductance `c_x`: the full-network value for interior
    /// vertices, the sum over interior neighbors for sphere vertices.
    pub fn total_conductance(&self, i: usize) -> T {
        self.degree[i]
    }

    /// Conductance of edge `{i, j}` or zero.
    pub fn conductance(&self, i: usize, j: usize) -> T {
        self.neighbors(i).find(|&(k, _)| k == j).map_or(T::zero(), |(_, c)| c)
    }

    /// Transition probability `p(i, j) = c_ij / c_i`.
    pub fn transition(&self, i: usize, j: usize) -> T {
        self.conductance(i, j) / self.degree[i]
    }

    /// Breadth-first path from the root to `i` (root first).
    pub fn bfs_path(&self, mut i: usize) -> Vec<usize> {
        let mut path = vec![i];
        while i != 0 {
            i = self.bfs_parent[i];
            path.push(i);
        }
        path.reverse();
        path
    }

    /// Series resistance `sum 1/c` along the breadth-first path to `i`.
    ///
    /// Every Green density `g(i, y)` is bounded by the effective resistance
    /// between the root and `i`, which this path resistance dominates.
    pub fn path_resistance(&self, i: usize) -> T {
        self.bfs_path(i).windows(2).map(|w| self.conductance(w[0], w[1]).recip()).sum()
    }

    /// Network Laplacian `sum_x c_vx (f(x) - f(v))` at an interior vertex.
    pub fn laplacian_apply(&self, f: &[T], v: usize) -> Result<T> {
        if !self.is_interior(v) {
            return Err(Error::VertexNotInterior(self.vertices[v].to_string()));
        }
        Ok(self.laplacian_at(f, v))
    }

    /// Laplacian at any ball vertex, using the ball's edges.
    pub(crate) fn laplacian_at(&self, f: &[T], v: usize) -> T {
        let fv = f[v];
        self.neighbors(v).map(|(x, c)| c * (f[x] - fv)).sum()
    }

    /// Laplacian at every interior vertex.
    pub fn laplacian(&self, f: &[T]) -> Vec<T> {
        self.interior().map(|v| self.laplacian_at(f, v)).collect()
    }

    /// Tabulates a function of the vertex label on the ball.
    pub fn tabulate(&self, mut f: impl FnMut(VertexId) -> T) -> Vec<T> {
        self.vertices.iter().map(|&v| f(v)).collect()
    }

    /// Interior vertices where some incident conductance is below
    /// `ratio` times the largest incident conductance.
    pub fn conditioning_warnings(&self, ratio: f64) -> Vec<VertexId> {
        self.min_ratio.iter().enumerate().filter(|(_, &r)| r < ratio).map(|(i, _)| self.vertices[i]).collect()
    }

    pub fn network_hash(&self) -> &str {
        &self.network_hash
    }

    /// Content hash of (network, radius).
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_network, generate, GeneratorSpec};

    fn labels(ball: &Ball<f64>, r: Range<usize>) -> Vec<String> {
        let mut v: Vec<_> = r.map(|i| ball.vertex(i).to_string()).collect();
        v.sort();
        v
    }

    #[test]
    fn line_ball_layers() {
        let net = generate(GeneratorSpec::line(), None).unwrap();
        let ball = Ball::<f64>::extract(&net, 4).unwrap();
        assert_eq!(ball.interior_len(), 7);
        assert_eq!(labels(&ball, ball.sphere()), vec!["-4", "4"]);
        assert_eq!(ball.distance(ball.index_of(&VertexId::Int(-3)).unwrap()), 3);
        assert!(!ball.exhausted());
    }

    #[test]
    fn grid_sphere_size() {
        let net = generate(GeneratorSpec::Grid2d, None).unwrap();
        for r in 1..6 {
            let ball = Ball::<f64>::extract(&net, r).unwrap();
            assert_eq!(ball.sphere().len(), 4 * r);
        }
    }

    #[test]
    fn finite_path_is_exhausted() {
        let e = |a, b| (VertexId::Int(a), VertexId::Int(b), 1.0);
        let net = build_network(&[e(0, 1), e(1, 2)], VertexId::Int(0)).unwrap();
        let ball = Ball::<f64>::extract(&net, 10).unwrap();
        assert!(ball.exhausted());
        assert_eq!(ball.len(), 3);
        assert_eq!(ball.interior_len(), 3);
        assert!(Ball::<f64>::extract(&net, 0).is_err());
    }

    #[test]
    fn laplacian_of_half_line_potential() {
        let net = generate(GeneratorSpec::line(), None).unwrap();
        let ball = Ball::<f64>::extract(&net, 8).unwrap();
        let f = ball.tabulate(|v| match v {
            VertexId::Int(n) => n.max(0) as f64,
            _ => unreachable!(),
        });
        assert_eq!(ball.laplacian_apply(&f, 0).unwrap(), 1.0);
        assert_eq!(ball.laplacian_apply(&f, ball.index_of(&VertexId::Int(5)).unwrap()).unwrap(), 0.0);
        let sphere_vertex = ball.sphere().start;
        assert!(matches!(ball.laplacian_apply(&f, sphere_vertex), Err(Error::VertexNotInterior(_))));
        let constant = vec![3.5; ball.len()];
        assert!(ball.laplacian(&constant).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn interior_neighborhoods_match_the_oracle() {
        let nets = [
            generate(GeneratorSpec::Grid2d, None).unwrap(),
            generate(GeneratorSpec::Tree { branching: 3, lambda: 0.4 }, None).unwrap(),
            generate(GeneratorSpec::RandomConductanceGrid { seed: 7, low: 0.1, high: 3.0 }, None).unwrap(),
        ];
        for net in &nets {
            let ball = Ball::<f64>::extract(net, 5).unwrap();
            for i in ball.interior() {
                let mut from_ball: Vec<_> = ball.neighbors(i).map(|(j, c)| (ball.vertex(j), c)).collect();
                let mut from_oracle = net.neighbors(ball.vertex(i));
                from_ball.sort_by_key(|a| a.0);
                from_oracle.sort_by_key(|a| a.0);
                assert_eq!(from_ball, from_oracle);
                let sum: f64 = from_oracle.iter().map(|x| x.1).sum();
                assert!((ball.total_conductance(i) - sum).abs() <= 1e-15 * sum);
            }
        }
    }

    #[test]
    fn exhaustion_is_monotone_and_deterministic() {
        let net = generate(GeneratorSpec::Ladder, None).unwrap();
        let small = Ball::<f64>::extract(&net, 3).unwrap();
        let big = Ball::<f64>::extract(&net, 4).unwrap();
        for i in small.interior() {
            assert!(big.is_interior(big.index_of(&small.vertex(i)).unwrap()));
        }
        let again = Ball::<f64>::extract(&net, 4).unwrap();
        assert_eq!(big.vertices(), again.vertices());
        assert_eq!(big.hash(), again.hash());
    }

    #[test]
    fn path_resistance_on_tree() {
        let net = generate(GeneratorSpec::Tree { branching: 2, lambda: 0.5 }, None).unwrap();
        let ball = Ball::<f64>::extract(&net, 4).unwrap();
        let leaf = ball.sphere().start;
        // 1/(1/2) + 1/(1/4) + 1/(1/8) + 1/(1/16)
        assert_eq!(ball.path_resistance(leaf), 30.0);
    }
}
