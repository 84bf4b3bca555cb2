//! Synthetic clustered networks: independent Watts-Strogatz clusters with
//! random-size support, joined by uniformly drawn reconnection edges.

use std::collections::{BTreeSet, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ClusterPartition, Graph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Number of clusters `m`.
    pub clusters: usize,
    pub size_min: usize,
    pub size_max: usize,
    /// Peak of the cluster-size law.
    pub size_mode: usize,
    /// Ring-lattice half-degree `K`.
    pub ws_neighbors: usize,
    /// Watts-Strogatz rewiring probability.
    pub ws_rewire_prob: f64,
    /// Reconnection rate `r`: `round(r * N)` random edges are added.
    pub reconnect_rate: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            clusters: 500,
            size_min: 10,
            size_max: 30,
            size_mode: 20,
            ws_neighbors: 2,
            ws_rewire_prob: 0.1,
            reconnect_rate: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::param("cluster count must be positive"));
        }
        if !(self.size_min <= self.size_mode && self.size_mode <= self.size_max) {
            return Err(Error::param(format!(
                "cluster sizes need size_min <= size_mode <= size_max, got {} / {} / {}",
                self.size_min, self.size_mode, self.size_max
            )));
        }
        if self.ws_neighbors == 0 {
            return Err(Error::param("ws_neighbors must be at least 1"));
        }
        if self.size_min <= 2 * self.ws_neighbors {
            return Err(Error::param(format!(
                "size_min {} must exceed 2 * ws_neighbors = {}",
                self.size_min,
                2 * self.ws_neighbors
            )));
        }
        if !(0.0..=1.0).contains(&self.ws_rewire_prob) {
            return Err(Error::param("ws_rewire_prob must lie in [0, 1]"));
        }
        if !(self.reconnect_rate >= 0.0 && self.reconnect_rate.is_finite()) {
            return Err(Error::param("reconnect_rate must be a finite non-negative number"));
        }
        Ok(())
    }

    /// Normalized probabilities of each cluster size, `P(n = s) ∝ 1 / (|s - mode| + 0.5)`.
    pub fn size_pmf(&self) -> Vec<(usize, f64)> {
        let weights: Vec<f64> = (self.size_min..=self.size_max)
            .map(|s| 1.0 / (s.abs_diff(self.size_mode) as f64 + 0.5))
            .collect();
        let total: f64 = weights.iter().sum();
        (self.size_min..=self.size_max)
            .zip(weights)
            .map(|(s, w)| (s, w / total))
            .collect()
    }

    /// Number of reconnection edges for `n` vertices (round half up).
    pub fn reconnect_count(&self, n: usize) -> usize {
        (self.reconnect_rate * n as f64 + 0.5).floor() as usize
    }
}

/// Cluster-size sampler for a fixed config.
#[derive(Debug, Clone)]
pub struct ClusterSizeLaw {
    sizes: Vec<usize>,
    index: WeightedIndex<f64>,
}

impl ClusterSizeLaw {
    pub fn new(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let pmf = cfg.size_pmf();
        let index = WeightedIndex::new(pmf.iter().map(|&(_, p)| p))
            .map_err(|e| Error::param(format!("cluster-size law: {e}")))?;
        Ok(Self {
            sizes: pmf.into_iter().map(|(s, _)| s).collect(),
            index,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sizes[self.index.sample(rng)]
    }
}

pub fn sample_cluster_size<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<usize> {
    Ok(ClusterSizeLaw::new(cfg)?.sample(rng))
}

/// Watts-Strogatz small world on `n` vertices.
///
/// Starts from the ring lattice joining each vertex to its `k` nearest
/// neighbors on either side, then visits lattice edges `(u, u + j)` for
/// `j = 1..=k` and rewires the far endpoint with probability `beta` to a
/// uniform vertex that is neither `u` nor already adjacent to it. The edge
/// count `n * k` is preserved.
pub fn generate_ws_cluster<R: Rng + ?Sized>(n: usize, k: usize, beta: f64, rng: &mut R) -> Result<Graph> {
    if n <= 2 * k {
        return Err(Error::param(format!(
            "Watts-Strogatz needs n > 2k, got n = {n}, k = {k}"
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::param("rewiring probability must lie in [0, 1]"));
    }
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for j in 1..=k {
        for u in 0..n {
            let v = (u + j) % n;
            adj[u].insert(v);
            adj[v].insert(u);
        }
    }
    for j in 1..=k {
        for u in 0..n {
            if rng.random::<f64>() >= beta {
                continue;
            }
            let v = (u + j) % n;
            if adj[u].len() >= n - 1 || !adj[u].contains(&v) {
                continue;
            }
            let w = loop {
                let w = rng.random_range(0..n);
                if w != u && !adj[u].contains(&w) {
                    break w;
                }
            };
            adj[u].remove(&v);
            adj[v].remove(&u);
            adj[u].insert(w);
            adj[w].insert(u);
        }
    }
    let edges = adj
        .iter()
        .enumerate()
        .flat_map(|(u, nb)| nb.iter().filter(move |&&v| u < v).map(move |&v| (u, v)));
    Graph::new(n, edges)
}

/// Output of [`assemble_network`].
#[derive(Debug, Clone)]
pub struct SynthNetwork {
    pub graph: Graph,
    pub partition: ClusterPartition,
    /// Reconnection edges in draw order, as `(u, v)` with `u < v`.
    pub added_edges: Vec<(usize, usize)>,
}

/// Disjoint union of `m` WS clusters plus `round(r * N)` uniform extra edges.
///
/// Extra edges are drawn uniformly over distinct, currently non-adjacent
/// vertex pairs by rejection; they may land inside a cluster.
pub fn assemble_network<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<SynthNetwork> {
    let law = ClusterSizeLaw::new(cfg)?;
    let mut labels = Vec::new();
    let mut edges = Vec::new();
    for j in 0..cfg.clusters {
        let size = law.sample(rng);
        let cluster = generate_ws_cluster(size, cfg.ws_neighbors, cfg.ws_rewire_prob, rng)?;
        let offset = labels.len();
        edges.extend(cluster.edges().iter().map(|&(u, v)| (u + offset, v + offset)));
        labels.extend(std::iter::repeat_n(j, size));
    }
    let n = labels.len();
    let wanted = cfg.reconnect_count(n);
    let free_pairs = n * (n - 1) / 2 - edges.len();
    if wanted > free_pairs {
        return Err(Error::param(format!(
            "cannot add {wanted} reconnection edges: only {free_pairs} vertex pairs are unconnected"
        )));
    }
    let mut present: HashSet<(usize, usize)> = edges.iter().copied().collect();
    let mut added_edges = Vec::with_capacity(wanted);
    while added_edges.len() < wanted {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let pair = (u.min(v), u.max(v));
        if present.insert(pair) {
            added_edges.push(pair);
        }
    }
    edges.extend_from_slice(&added_edges);
    Ok(SynthNetwork {
        graph: Graph::new(n, edges)?,
        partition: ClusterPartition::new(labels)?,
        added_edges,
    })
}
