//! Undirected simple graphs in compressed adjacency form, and vertex partitions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph over the dense vertex set `0..N`.
///
/// Neighbor lists are stored contiguously (CSR layout) and sorted, so
/// `neighbors(i)` is the support of row `i` of the adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    adjacency: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from arbitrary vertex pairs.
    ///
    /// Pairs are symmetrized: `(u, v)` and `(v, u)` denote the same edge,
    /// duplicates are merged and self-loops dropped. Any endpoint `>= n` is an
    /// error naming the offending pair.
    pub fn new<I>(num_vertices: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut canonical = Vec::new();
        for (u, v) in edges {
            if u >= num_vertices || v >= num_vertices {
                return Err(Error::EdgeOutOfRange(u, v, num_vertices));
            }
            if u != v {
                canonical.push((u.min(v), u.max(v)));
            }
        }
        canonical.sort_unstable();
        canonical.dedup();
        Ok(Self::from_canonical(num_vertices, canonical))
    }

    /// `edges` must be sorted, deduplicated, with `u < v < n` in every pair.
    fn from_canonical(num_vertices: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut degree = vec![0usize; num_vertices];
        for &(u, v) in &edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(num_vertices + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..num_vertices].to_vec();
        let mut adjacency = vec![0usize; offsets[num_vertices]];
        for &(u, v) in &edges {
            adjacency[fill[u]] = v;
            fill[u] += 1;
            adjacency[fill[v]] = u;
            fill[v] += 1;
        }
        for i in 0..num_vertices {
            adjacency[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Self {
            offsets,
            adjacency,
            edges,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(u, v)` pairs with `u < v`, in lexicographic order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbors of `i`. Panics if `i >= N`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Panics if `i >= N`.
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_vertices() && v < self.num_vertices() && self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.num_vertices() == 0 {
            return 0.0;
        }
        2.0 * self.num_edges() as f64 / self.num_vertices() as f64
    }
}

/// Assignment of every vertex to one of `m` non-empty clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ClusterPartition {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl ClusterPartition {
    /// Labels must already be dense: every id in `0..=max` must be used.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let m = labels.iter().max().map_or(0, |&l| l + 1);
        let mut members = vec![Vec::new(); m];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        if let Some(j) = members.iter().position(Vec::is_empty) {
            return Err(Error::InvalidPartition(format!("cluster {j} has no members")));
        }
        Ok(Self { labels, members })
    }

    /// Relabels arbitrary cluster ids to `0..m` in order of first appearance.
    pub fn from_raw_labels<T: Eq + std::hash::Hash + Clone>(raw: &[T]) -> Self {
        let mut ids = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = ids.len();
                *ids.entry(l.clone()).or_insert(next)
            })
            .collect();
        Self::new(labels).expect("dense labels by construction")
    }

    pub fn num_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn members(&self, j: usize) -> &[usize] {
        &self.members[j]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    fn check_graph(&self, g: &Graph) -> Result<()> {
        if g.num_vertices() != self.num_vertices() {
            return Err(Error::InvalidPartition(format!(
                "partition covers {} vertices, graph has {}",
                self.num_vertices(),
                g.num_vertices()
            )));
        }
        Ok(())
    }

    /// Per-cluster `(internal, cut)` edge counts in one pass over the edges.
    pub fn edge_counts(&self, g: &Graph) -> Result<Vec<EdgeCounts>> {
        self.check_graph(g)?;
        let mut counts = vec![EdgeCounts::default(); self.num_clusters()];
        for &(u, v) in g.edges() {
            let (a, b) = (self.labels[u], self.labels[v]);
            if a == b {
                counts[a].internal += 1;
            } else {
                counts[a].cut += 1;
                counts[b].cut += 1;
            }
        }
        Ok(counts)
    }

    /// Number of edges from each vertex into a different cluster.
    pub fn cross_degrees(&self, g: &Graph) -> Vec<usize> {
        (0..g.num_vertices())
            .map(|i| {
                g.neighbors(i)
                    .iter()
                    .filter(|&&k| self.labels[k] != self.labels[i])
                    .count()
            })
            .collect()
    }

    /// Average over vertices of the number of neighbors in other clusters.
    pub fn mean_cross_degree(&self, g: &Graph) -> f64 {
        if g.num_vertices() == 0 {
            return 0.0;
        }
        let inter = g
            .edges()
            .iter()
            .filter(|&&(u, v)| self.labels[u] != self.labels[v])
            .count();
        2.0 * inter as f64 / g.num_vertices() as f64
    }
}

impl TryFrom<Vec<usize>> for ClusterPartition {
    type Error = Error;

    fn try_from(labels: Vec<usize>) -> Result<Self> {
        Self::new(labels)
    }
}

impl From<ClusterPartition> for Vec<usize> {
    fn from(p: ClusterPartition) -> Self {
        p.labels
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeCounts {
    pub internal: usize,
    pub cut: usize,
}

/// Number of edges with exactly one endpoint in cluster `j`.
pub fn cut_edge_count(g: &Graph, part: &ClusterPartition, j: usize) -> Result<usize> {
    part.check_graph(g)?;
    if j >= part.num_clusters() {
        return Err(Error::param(format!(
            "cluster {j} out of range 0..{}",
            part.num_clusters()
        )));
    }
    Ok(part
        .members(j)
        .iter()
        .map(|&i| g.neighbors(i).iter().filter(|&&k| part.label(k) != j).count())
        .sum())
}
