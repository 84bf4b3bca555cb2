//! Deterministic stand-in for a hub-dominated phone-call network.
//!
//! Call-record graphs collected from a small panel of instrumented phones
//! look like a set of hubs (panel members) surrounded by many contacts that
//! appear only once. The stand-in reproduces that shape with exactly
//! [`VERTICES`] vertices and [`EDGES`] edges: every contact hangs off one hub,
//! some contacts also call other hubs, and some hubs call each other. Only
//! panel phones are logged, so every edge has a hub endpoint.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::Graph;
use crate::rng::seeded;

pub const VERTICES: usize = 6819;
pub const EDGES: usize = 7768;
pub const HUBS: usize = 82;

const SEED: u64 = 0x5eed_ca11;
const HUB_LINKS: usize = 250;
const MIN_CONTACTS: usize = 4;

/// Edge list with external ids `1..=VERTICES`, as `(u, v)` pairs.
pub fn phone_call_edges() -> Vec<(usize, usize)> {
    let mut rng = seeded(SEED);
    let contacts = VERTICES - HUBS;

    // Heavy-tailed hub popularity.
    let weights: Vec<f64> = (0..HUBS).map(|h| 1.0 / ((h + 4) as f64).powf(0.9)).collect();
    let total: f64 = weights.iter().sum();
    let mut owner = Vec::with_capacity(contacts);
    for c in 0..contacts {
        if c < HUBS * MIN_CONTACTS {
            owner.push(c % HUBS);
            continue;
        }
        let mut u = rng.random::<f64>() * total;
        let mut h = 0;
        while h + 1 < HUBS && u >= weights[h] {
            u -= weights[h];
            h += 1;
        }
        owner.push(h);
    }
    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(EDGES);
    let mut push = |u: usize, v: usize, edges: &mut Vec<(usize, usize)>| {
        if u != v && seen.insert((u.min(v), u.max(v))) {
            edges.push((u, v));
            true
        } else {
            false
        }
    };
    for (c, &h) in owner.iter().enumerate() {
        push(h, HUBS + c, &mut edges);
    }
    let mut links = 0;
    while links < HUB_LINKS {
        let (a, b) = (rng.random_range(0..HUBS), rng.random_range(0..HUBS));
        links += usize::from(push(a, b, &mut edges));
    }
    // Remaining edges: contacts that also call another hub.
    while edges.len() < EDGES {
        let c = rng.random_range(0..contacts);
        let h = rng.random_range(0..HUBS);
        if h != owner[c] {
            push(h, HUBS + c, &mut edges);
        }
    }

    // Hide the hub-first layout behind random external ids.
    let mut ids: Vec<usize> = (1..=VERTICES).collect();
    ids.shuffle(&mut rng);
    edges.into_iter().map(|(u, v)| (ids[u], ids[v])).collect()
}

/// The stand-in as a dense graph (external id `k` becomes vertex `k - 1`).
pub fn phone_call_graph() -> Graph {
    Graph::new(VERTICES, phone_call_edges().into_iter().map(|(u, v)| (u - 1, v - 1)))
        .expect("stand-in ids are in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_match() {
        let g = phone_call_graph();
        assert_eq!(g.num_vertices(), VERTICES);
        assert_eq!(g.num_edges(), EDGES);
        assert!((0..VERTICES).all(|i| g.degree(i) > 0));
        assert_eq!(phone_call_edges(), phone_call_edges());
    }

    #[test]
    fn label_propagation_recovers_hubs() {
        let g = phone_call_graph();
        for seed in 0..5 {
            let lp = crate::ingest::label_propagation(&g, &mut seeded(seed), 100).unwrap();
            let k = lp.partition.num_clusters();
            assert!((60..=110).contains(&k), "seed {seed}: {k} clusters");
        }
    }
}
