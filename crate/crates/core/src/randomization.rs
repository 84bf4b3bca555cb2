//! Treatment assignment: complete randomization of users (CRU), of clusters
//! (CRC), and cluster-adaptive randomization (CAR).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::balance::{covariance_inverse, ArmSums, CovariateMatrix};
use crate::error::{Error, Result};
use crate::graph::ClusterPartition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    Cru,
    Crc,
    Car,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Cru => "CRU",
            Scheme::Crc => "CRC",
            Scheme::Car => "CAR",
        })
    }
}

/// Per-cluster labels `T` (cluster-level schemes only) and per-user labels `Z`.
/// `true` is treatment A.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub scheme: Scheme,
    pub cluster_labels: Option<Vec<bool>>,
    pub user_labels: Vec<bool>,
}

impl Assignment {
    /// Expands cluster labels to users: `Z_i = T_{label(i)}`.
    pub fn from_clusters(part: &ClusterPartition, t: Vec<bool>, scheme: Scheme) -> Result<Self> {
        if scheme == Scheme::Cru {
            return Err(Error::param("CRU assignments have no cluster labels"));
        }
        if t.len() != part.num_clusters() {
            return Err(Error::param(format!(
                "{} cluster labels for {} clusters",
                t.len(),
                part.num_clusters()
            )));
        }
        let user_labels = part.labels().iter().map(|&j| t[j]).collect();
        Ok(Self {
            scheme,
            cluster_labels: Some(t),
            user_labels,
        })
    }

    pub fn arm_sizes(&self) -> (usize, usize) {
        let a = self.user_labels.iter().filter(|&&z| z).count();
        (a, self.user_labels.len() - a)
    }

    /// `user,Z` CSV.
    pub fn write_users_csv<W: Write>(&self, out: W) -> Result<()> {
        write_labels(out, "user", "Z", &self.user_labels)
    }

    /// `cluster,T` CSV; an error for CRU.
    pub fn write_clusters_csv<W: Write>(&self, out: W) -> Result<()> {
        let t = self
            .cluster_labels
            .as_ref()
            .ok_or_else(|| Error::param("CRU assignments have no cluster labels"))?;
        write_labels(out, "cluster", "T", t)
    }
}

fn write_labels<W: Write>(out: W, id: &str, name: &str, labels: &[bool]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([id, name])?;
    for (i, &b) in labels.iter().enumerate() {
        w.write_record([i.to_string(), u8::from(b).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Each user independently in arm A with probability 1/2.
pub fn cru<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Assignment> {
    if n < 2 {
        return Err(Error::param(format!("CRU needs at least 2 users, got {n}")));
    }
    Ok(Assignment {
        scheme: Scheme::Cru,
        cluster_labels: None,
        user_labels: (0..n).map(|_| rng.random_bool(0.5)).collect(),
    })
}

/// Each cluster independently in arm A with probability 1/2.
pub fn crc<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<Vec<bool>> {
    if m < 2 {
        return Err(Error::param(format!("CRC needs at least 2 clusters, got {m}")));
    }
    Ok((0..m).map(|_| rng.random_bool(0.5)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairOrder {
    /// Pair clusters `(0, 1), (2, 3), ...` in input order.
    Given,
    /// Pair clusters after a uniform random permutation.
    #[default]
    Shuffled,
}

impl FromStr for PairOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "given" => Ok(PairOrder::Given),
            "shuffled" => Ok(PairOrder::Shuffled),
            other => Err(Error::param(format!("unknown pair order `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarConfig {
    q: f64,
    pub pair_order: PairOrder,
}

impl Default for CarConfig {
    fn default() -> Self {
        Self {
            q: 0.85,
            pair_order: PairOrder::Shuffled,
        }
    }
}

impl CarConfig {
    /// `q` is the probability of taking the more balanced arrangement and
    /// must lie strictly between 1/2 and 1.
    pub fn new(q: f64, pair_order: PairOrder) -> Result<Self> {
        if !(q > 0.5 && q < 1.0) {
            return Err(Error::param(format!("CAR requires 1/2 < q < 1, got {q}")));
        }
        Ok(Self { q, pair_order })
    }

    /// Skips the `1/2 < q < 1` check; only meant for limit cases in tests.
    #[doc(hidden)]
    pub fn unchecked(q: f64, pair_order: PairOrder) -> Self {
        Self { q, pair_order }
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

/// One CAR pair decision, for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStep {
    pub first: usize,
    pub second: usize,
    /// Imbalance if `first` goes to A and `second` to B.
    pub m_first_treated: f64,
    /// Imbalance if `second` goes to A and `first` to B.
    pub m_second_treated: f64,
    pub first_treated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarOutcome {
    pub labels: Vec<bool>,
    /// Cluster processing order.
    pub order: Vec<usize>,
    pub steps: Vec<PairStep>,
}

/// Cluster-adaptive randomization with the inverse covariance computed from `x`.
pub fn car<R: Rng + ?Sized>(x: &CovariateMatrix, cfg: &CarConfig, rng: &mut R) -> Result<Vec<bool>> {
    let inv = covariance_inverse(x)?;
    Ok(car_with_inverse(x, &inv.matrix, cfg, rng)?.labels)
}

/// Cluster-adaptive randomization.
///
/// Clusters are taken in pairs in the configured order. For each pair both
/// arrangements are scored by the Mahalanobis imbalance over every cluster
/// assigned so far (this pair included) using the fixed `cov_inv`. The pair
/// starts as (B, A) and is switched to (A, B) with probability `q` if that
/// arrangement is strictly better, `1 - q` if strictly worse and 1/2 on a tie.
/// An unpaired last cluster is treated with probability 1/2.
///
/// Arm covariate sums are carried across pairs, so a step costs O(p²).
pub fn car_with_inverse<R: Rng + ?Sized>(
    x: &CovariateMatrix,
    cov_inv: &DMatrix<f64>,
    cfg: &CarConfig,
    rng: &mut R,
) -> Result<CarOutcome> {
    let (m, p) = (x.num_clusters(), x.num_covariates());
    if m < 2 {
        return Err(Error::param(format!("CAR needs at least 2 clusters, got {m}")));
    }
    if cov_inv.nrows() != p || cov_inv.ncols() != p {
        return Err(Error::param(format!(
            "inverse covariance is {}x{}, covariates have p = {p}",
            cov_inv.nrows(),
            cov_inv.ncols()
        )));
    }
    if !(0.0..=1.0).contains(&cfg.q) {
        return Err(Error::param(format!("q = {} is not a probability", cfg.q)));
    }
    let mut order: Vec<usize> = (0..m).collect();
    if cfg.pair_order == PairOrder::Shuffled {
        order.shuffle(rng);
    }

    let mut labels = vec![false; m];
    let mut sums = ArmSums::new(p);
    let mut steps = Vec::with_capacity(m / 2);
    for pair in order.chunks(2) {
        match *pair {
            [first, second] => {
                let mut option_first = sums.clone();
                option_first.add(x.row(first), true);
                option_first.add(x.row(second), false);
                let mut option_second = sums.clone();
                option_second.add(x.row(first), false);
                option_second.add(x.row(second), true);
                let m1 = option_first.mahalanobis(cov_inv);
                let m2 = option_second.mahalanobis(cov_inv);
                let switch_prob = if m1 < m2 {
                    cfg.q
                } else if m1 > m2 {
                    1.0 - cfg.q
                } else {
                    0.5
                };
                let first_treated = rng.random::<f64>() < switch_prob;
                labels[first] = first_treated;
                labels[second] = !first_treated;
                sums = if first_treated { option_first } else { option_second };
                steps.push(PairStep {
                    first,
                    second,
                    m_first_treated: m1,
                    m_second_treated: m2,
                    first_treated,
                });
            }
            [last] => labels[last] = rng.random_bool(0.5),
            _ => unreachable!(),
        }
    }
    Ok(CarOutcome { labels, order, steps })
}
