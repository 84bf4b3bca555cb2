//! Treatment-effect estimators.
//!
//! * CE: difference of arm means over all users.
//! * CAE: difference of arm averages of per-cluster means, where each
//!   cluster mean only uses *uncontaminated* users (every neighbor shares the
//!   user's own assignment). Clusters without uncontaminated users are left
//!   out of both the sum and the arm's cluster count.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ClusterPartition, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "CE")]
    Ce,
    #[serde(rename = "CAE")]
    Cae,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Ce => "CE",
            Estimator::Cae => "CAE",
        })
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CE" => Ok(Estimator::Ce),
            "CAE" => Ok(Estimator::Cae),
            other => Err(Error::param(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Users none of whose neighbors are in the other arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UncontaminatedSet {
    mask: Vec<bool>,
}

impl UncontaminatedSet {
    pub fn contains(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn members(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `n_j(U)` for every cluster.
    pub fn per_cluster_counts(&self, part: &ClusterPartition) -> Vec<usize> {
        let mut counts = vec![0; part.num_clusters()];
        for (i, &keep) in self.mask.iter().enumerate() {
            if keep {
                counts[part.label(i)] += 1;
            }
        }
        counts
    }
}

pub fn uncontaminated_set(g: &Graph, z: &[bool]) -> Result<UncontaminatedSet> {
    if z.len() != g.num_vertices() {
        return Err(Error::param(format!(
            "assignment has {} users, graph {}",
            z.len(),
            g.num_vertices()
        )));
    }
    Ok(UncontaminatedSet {
        mask: (0..z.len())
            .map(|i| g.neighbors(i).iter().all(|&k| z[k] == z[i]))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub tau_hat: f64,
    pub estimator: Estimator,
    /// CAE only: clusters with at least one uncontaminated user.
    pub used_clusters: Option<usize>,
    /// CAE only: clusters with no uncontaminated user.
    pub dropped_clusters: Option<usize>,
    /// Users per arm for CE, contributing clusters per arm for CAE.
    pub arm_sizes: (usize, usize),
}

/// Difference in mean response between treated and control users.
pub fn ce(y: &[f64], z: &[bool]) -> Result<EstimateReport> {
    if y.len() != z.len() {
        return Err(Error::param(format!("{} responses for {} users", y.len(), z.len())));
    }
    let (mut sum_a, mut sum_b, mut n_a, mut n_b) = (0.0, 0.0, 0usize, 0usize);
    for (&yi, &zi) in y.iter().zip(z) {
        if zi {
            sum_a += yi;
            n_a += 1;
        } else {
            sum_b += yi;
            n_b += 1;
        }
    }
    if n_a == 0 || n_b == 0 {
        return Err(Error::estimation(format!(
            "CE needs both arms non-empty (N_A = {n_a}, N_B = {n_b})"
        )));
    }
    Ok(EstimateReport {
        tau_hat: sum_a / n_a as f64 - sum_b / n_b as f64,
        estimator: Estimator::Ce,
        used_clusters: None,
        dropped_clusters: None,
        arm_sizes: (n_a, n_b),
    })
}

/// Cluster-adjusted estimator for a cluster-level assignment `t`.
pub fn cae(y: &[f64], part: &ClusterPartition, t: &[bool], u: &UncontaminatedSet) -> Result<EstimateReport> {
    let (n, m) = (part.num_vertices(), part.num_clusters());
    if y.len() != n || u.mask.len() != n {
        return Err(Error::param(format!(
            "{} responses and {} uncontaminated flags for {n} users",
            y.len(),
            u.mask.len()
        )));
    }
    if t.len() != m {
        return Err(Error::param(format!("{} cluster labels for {m} clusters", t.len())));
    }
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (i, (&yi, &clean)) in y.iter().zip(&u.mask).enumerate() {
        if clean {
            let j = part.label(i);
            sums[j] += yi;
            counts[j] += 1;
        }
    }
    let (mut total_a, mut total_b, mut m_a, mut m_b) = (0.0, 0.0, 0usize, 0usize);
    for j in 0..m {
        if counts[j] == 0 {
            continue;
        }
        let mean = sums[j] / counts[j] as f64;
        if t[j] {
            total_a += mean;
            m_a += 1;
        } else {
            total_b += mean;
            m_b += 1;
        }
    }
    if m_a == 0 || m_b == 0 {
        return Err(Error::estimation(format!(
            "CAE needs a contributing cluster in each arm (m_A = {m_a}, m_B = {m_b})"
        )));
    }
    Ok(EstimateReport {
        tau_hat: total_a / m_a as f64 - total_b / m_b as f64,
        estimator: Estimator::Cae,
        used_clusters: Some(m_a + m_b),
        dropped_clusters: Some(m - m_a - m_b),
        arm_sizes: (m_a, m_b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::CovariateMatrix;
    use crate::outcome::{simulate_responses, ResponseParams};
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn no_cross_edges_all_uncontaminated() {
        let g = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        let u = uncontaminated_set(&g, &[true, true, false, false]).unwrap();
        assert_eq!(u.members(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn single_edge_mutual_contamination() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        assert!(uncontaminated_set(&g, &[true, false]).unwrap().is_empty());
    }

    #[test]
    fn path_contamination() {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let u = uncontaminated_set(&g, &[true, true, false]).unwrap();
        assert_eq!(u.members(), vec![0]);
        let part = ClusterPartition::new(vec![0, 0, 1]).unwrap();
        assert_eq!(u.per_cluster_counts(&part), vec![1, 0]);
    }

    #[test]
    fn ce_basics() {
        let r = ce(&[1.0, 1.0, 0.0, 0.0], &[true, true, false, false]).unwrap();
        assert_eq!(r.tau_hat, 1.0);
        assert_eq!(r.arm_sizes, (2, 2));
        assert_eq!(ce(&[3.0; 5], &[true, false, true, false, false]).unwrap().tau_hat, 0.0);
        assert!(matches!(ce(&[1.0, 2.0], &[true, true]), Err(Error::Estimation(_))));
    }

    #[test]
    fn ce_interference_bias_on_two_users() {
        // Y = (0, 1) from the adjacent-pair model with μ1 = 1, α1 = -α0 = 1.
        let r = ce(&[0.0, 1.0], &[true, false]).unwrap();
        assert_eq!(r.tau_hat, -1.0);
        assert_eq!(r.tau_hat - 1.0, -2.0);
    }

    #[test]
    fn cae_isolated_clusters() {
        let g = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        let part = ClusterPartition::new(vec![0, 0, 1, 1]).unwrap();
        let t = [true, false];
        let z = [true, true, false, false];
        let u = uncontaminated_set(&g, &z).unwrap();
        let r = cae(&[2.0, 4.0, 1.0, 1.0], &part, &t, &u).unwrap();
        assert_eq!(r.tau_hat, 2.0);
        assert_eq!((r.used_clusters, r.dropped_clusters), (Some(2), Some(0)));
    }

    #[test]
    fn cae_equals_ce_without_interference() {
        // Unequal sizes, no interference, no cluster effect, no noise.
        let g = Graph::new(6, [(0, 1), (1, 2), (3, 4), (4, 5)]).unwrap();
        let part = ClusterPartition::new(vec![0, 0, 0, 1, 1, 2]).unwrap();
        let x = CovariateMatrix::new(vec![0.0; 3], vec!["x".into()]).unwrap();
        let params = ResponseParams {
            mu0: 0.25,
            mu1: 1.75,
            beta: vec![0.0],
            sigma_eps: 0.0,
            ..Default::default()
        };
        let t = vec![true, false, true];
        let z: Vec<bool> = part.labels().iter().map(|&j| t[j]).collect();
        let y = simulate_responses(&g, &part, &x, &z, &params, &mut seeded(0)).unwrap();
        let u = uncontaminated_set(&g, &z).unwrap();
        assert_eq!(cae(&y, &part, &t, &u).unwrap().tau_hat, 1.5);
        assert_eq!(ce(&y, &z).unwrap().tau_hat, 1.5);
    }

    #[test]
    fn cae_drops_fully_contaminated_cluster() {
        // Clusters {0,1}, {2}, {3,4}, {5}. Vertex 2 (alone, control) is linked
        // to both treated clusters, so cluster 1 has no uncontaminated user;
        // vertices 1 and 3 are contaminated through it.
        let g = Graph::new(6, [(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let part = ClusterPartition::new(vec![0, 0, 1, 2, 2, 3]).unwrap();
        let t = [true, false, true, false];
        let z: Vec<bool> = part.labels().iter().map(|&j| t[j]).collect();
        let u = uncontaminated_set(&g, &z).unwrap();
        assert_eq!(u.members(), vec![0, 4, 5]);
        let y = [5.0, 100.0, -100.0, 100.0, 2.0, 1.0];
        let r = cae(&y, &part, &t, &u).unwrap();
        assert_eq!(r.tau_hat, 2.5);
        assert_eq!((r.used_clusters, r.dropped_clusters), (Some(3), Some(1)));
        assert_eq!(r.arm_sizes, (2, 1));
    }

    #[test]
    fn cae_fails_when_an_arm_has_no_contributor() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let part = ClusterPartition::new(vec![0, 1]).unwrap();
        let u = uncontaminated_set(&g, &[true, false]).unwrap();
        assert!(matches!(
            cae(&[1.0, 2.0], &part, &[true, false], &u),
            Err(Error::Estimation(_))
        ));
    }

    /// Brute force of the cluster-adjusted formula with explicit loops over
    /// clusters and users.
    fn brute_force(y: &[f64], labels: &[usize], m: usize, t: &[bool], g: &Graph) -> Option<f64> {
        let z: Vec<bool> = labels.iter().map(|&j| t[j]).collect();
        let mut arm = [(0.0, 0usize); 2];
        for j in 0..m {
            let members: Vec<usize> = (0..y.len())
                .filter(|&i| labels[i] == j)
                .filter(|&i| (0..y.len()).all(|k| !g.has_edge(i, k) || z[k] == z[i]))
                .collect();
            if members.is_empty() {
                continue;
            }
            let mean = members.iter().map(|&i| y[i]).sum::<f64>() / members.len() as f64;
            let slot = &mut arm[usize::from(t[j])];
            slot.0 += mean;
            slot.1 += 1;
        }
        (arm[0].1 > 0 && arm[1].1 > 0).then(|| arm[1].0 / arm[1].1 as f64 - arm[0].0 / arm[0].1 as f64)
    }

    #[test]
    fn cae_matches_brute_force_on_random_graphs() {
        let mut rng = seeded(17);
        for _ in 0..300 {
            let n = rng.random_range(2..=20);
            let m = rng.random_range(2..=n.min(6));
            let mut raw: Vec<usize> = (0..n).map(|i| if i < m { i } else { rng.random_range(0..m) }).collect();
            raw.rotate_left(rng.random_range(0..n));
            let part = ClusterPartition::from_raw_labels(&raw);
            let edges: Vec<(usize, usize)> = (0..rng.random_range(0..2 * n))
                .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
                .collect();
            let g = Graph::new(n, edges).unwrap();
            let t: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
            let z: Vec<bool> = part.labels().iter().map(|&j| t[j]).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let u = uncontaminated_set(&g, &z).unwrap();
            match (cae(&y, &part, &t, &u), brute_force(&y, part.labels(), m, &t, &g)) {
                (Ok(r), Some(b)) => assert!((r.tau_hat - b).abs() < 1e-12),
                (Err(_), None) => {}
                (a, b) => panic!("mismatch: {a:?} vs {b:?}"),
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            /// With no cluster effect and no noise, CAE recovers μ1 - μ0
            /// exactly for any graph and spill-over coefficients.
            #[test]
            fn cae_eliminates_network_effect(
                n in 4usize..40,
                edge_seed in any::<u64>(),
                alpha0 in -3.0f64..3.0,
                alpha1 in -3.0f64..3.0,
                mu0 in -2.0f64..2.0,
                mu1 in -2.0f64..2.0,
            ) {
                let mut rng = seeded(edge_seed);
                let m = rng.random_range(2..=n / 2);
                let raw: Vec<usize> = (0..n).map(|i| if i < m { i } else { rng.random_range(0..m) }).collect();
                let part = ClusterPartition::from_raw_labels(&raw);
                let edges: Vec<(usize, usize)> = (0..rng.random_range(0..3 * n))
                    .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
                    .collect();
                let g = Graph::new(n, edges).unwrap();
                let t: Vec<bool> = (0..m).map(|j| j % 2 == 0 || rng.random_bool(0.5)).collect();
                let z: Vec<bool> = part.labels().iter().map(|&j| t[j]).collect();
                let x = CovariateMatrix::new(vec![0.0; m], vec!["x".into()]).unwrap();
                let params = ResponseParams { mu0, mu1, alpha0, alpha1, beta: vec![0.0], sigma_eps: 0.0 };
                let y = simulate_responses(&g, &part, &x, &z, &params, &mut rng).unwrap();
                let u = uncontaminated_set(&g, &z).unwrap();
                if let Ok(r) = cae(&y, &part, &t, &u) {
                    prop_assert!((r.tau_hat - (mu1 - mu0)).abs() < 1e-12);
                }
            }
        }
    }
}
