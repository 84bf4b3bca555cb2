//! Response simulation under the linear spill-over model
//!
//! ```text
//! Y_i = μ0 (1 - Z_i) + μ1 Z_i
//!     + α0 (A_i· Z) (Z_i - 1) + α1 (A_i· (Z - 1)) Z_i
//!     + β' X_{c(i)} + ε_i
//! ```
//!
//! so a treated user loses `α1` per control neighbor and a control user loses
//! `α0` per treated neighbor.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::balance::CovariateMatrix;
use crate::error::{Error, Result};
use crate::graph::{ClusterPartition, Graph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseParams {
    pub mu0: f64,
    pub mu1: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta: Vec<f64>,
    pub sigma_eps: f64,
}

impl Default for ResponseParams {
    fn default() -> Self {
        Self {
            mu0: 0.0,
            mu1: 1.0,
            alpha0: 0.0,
            alpha1: 0.0,
            beta: vec![1.0; 4],
            sigma_eps: 2.0,
        }
    }
}

impl ResponseParams {
    /// Symmetric spill-over `α1 = -α0 = alpha`.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha1 = alpha;
        self.alpha0 = -alpha;
        self
    }

    /// The average treatment effect `μ1 - μ0`.
    pub fn tau(&self) -> f64 {
        self.mu1 - self.mu0
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.sigma_eps >= 0.0 && self.sigma_eps.is_finite()) {
            return Err(Error::param("sigma_eps must be finite and non-negative"));
        }
        if self.beta.len() != p {
            return Err(Error::param(format!(
                "beta has {} entries but there are {p} covariates",
                self.beta.len()
            )));
        }
        let all = [self.mu0, self.mu1, self.alpha0, self.alpha1];
        if all.iter().chain(&self.beta).any(|x| !x.is_finite()) {
            return Err(Error::param("response parameters must be finite"));
        }
        Ok(())
    }

    /// `β' X_j` for every cluster.
    pub fn cluster_effects(&self, x: &CovariateMatrix) -> Result<Vec<f64>> {
        self.validate(x.num_covariates())?;
        Ok((0..x.num_clusters())
            .map(|j| x.row(j).iter().zip(&self.beta).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// `n` standard normal draws.
pub fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Evaluates the response model with a fixed vector of standard normal noise,
/// scaled by `sigma_eps`. Reusing one noise vector across designs gives
/// common random numbers.
pub fn responses_with_noise(
    g: &Graph,
    part: &ClusterPartition,
    x: &CovariateMatrix,
    z: &[bool],
    params: &ResponseParams,
    noise: &[f64],
) -> Result<Vec<f64>> {
    let n = g.num_vertices();
    if z.len() != n || noise.len() != n || part.num_vertices() != n {
        return Err(Error::param(format!(
            "dimension mismatch: graph {n}, partition {}, Z {}, noise {}",
            part.num_vertices(),
            z.len(),
            noise.len()
        )));
    }
    if x.num_clusters() != part.num_clusters() {
        return Err(Error::param(format!(
            "{} covariate rows for {} clusters",
            x.num_clusters(),
            part.num_clusters()
        )));
    }
    let effects = params.cluster_effects(x)?;
    Ok((0..n)
        .map(|i| {
            let treated_nbrs = g.neighbors(i).iter().filter(|&&k| z[k]).count() as f64;
            let control_nbrs = g.degree(i) as f64 - treated_nbrs;
            let base = if z[i] {
                params.mu1 - params.alpha1 * control_nbrs
            } else {
                params.mu0 - params.alpha0 * treated_nbrs
            };
            base + effects[part.label(i)] + params.sigma_eps * noise[i]
        })
        .collect())
}

/// User responses with fresh `N(0, σ²)` noise drawn from `rng` in vertex order.
pub fn simulate_responses<R: Rng + ?Sized>(
    g: &Graph,
    part: &ClusterPartition,
    x: &CovariateMatrix,
    z: &[bool],
    params: &ResponseParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let noise = standard_normals(g.num_vertices(), rng);
    responses_with_noise(g, part, x, z, params, &noise)
}

/// Cluster-level responses without network effect:
/// `Y*_j = μ0 (1 - T_j) + μ1 T_j + β' X_j + ε_j`.
pub fn simulate_pseudo_responses<R: Rng + ?Sized>(
    x: &CovariateMatrix,
    t: &[bool],
    params: &ResponseParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if t.len() != x.num_clusters() {
        return Err(Error::param(format!(
            "{} cluster labels for {} covariate rows",
            t.len(),
            x.num_clusters()
        )));
    }
    let effects = params.cluster_effects(x)?;
    Ok(t.iter()
        .zip(effects)
        .map(|(&treated, e)| {
            let mu = if treated { params.mu1 } else { params.mu0 };
            let eps: f64 = rng.sample(StandardNormal);
            mu + e + params.sigma_eps * eps
        })
        .collect())
}

/// `user,Z,Y` CSV.
pub fn write_responses_csv<W: Write>(out: W, z: &[bool], y: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user", "Z", "Y"])?;
    for (i, (&zi, yi)) in z.iter().zip(y).enumerate() {
        w.write_record([i.to_string(), u8::from(zi).to_string(), yi.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::least_squares_rss;
    use crate::rng::seeded;
    use nalgebra::{DMatrix, DVector};

    fn zero_covariates(m: usize) -> CovariateMatrix {
        CovariateMatrix::new(vec![0.0; m.max(2)], vec!["x".into()]).unwrap()
    }

    fn params(mu0: f64, mu1: f64, alpha0: f64, alpha1: f64) -> ResponseParams {
        ResponseParams {
            mu0,
            mu1,
            alpha0,
            alpha1,
            beta: vec![0.0],
            sigma_eps: 0.0,
        }
    }

    /// Direct evaluation of the model with explicit adjacency rows.
    fn direct(g: &Graph, z: &[bool], p: &ResponseParams) -> Vec<f64> {
        let n = g.num_vertices();
        let zf: Vec<f64> = z.iter().map(|&b| f64::from(u8::from(b))).collect();
        (0..n)
            .map(|i| {
                let row: Vec<f64> = (0..n).map(|k| f64::from(u8::from(g.has_edge(i, k)))).collect();
                let az: f64 = row.iter().zip(&zf).map(|(a, z)| a * z).sum();
                let az1: f64 = row.iter().zip(&zf).map(|(a, z)| a * (z - 1.0)).sum();
                p.mu0 * (1.0 - zf[i]) + p.mu1 * zf[i] + p.alpha0 * az * (zf[i] - 1.0) + p.alpha1 * az1 * zf[i]
            })
            .collect()
    }

    #[test]
    fn no_interference_no_noise() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let part = ClusterPartition::new(vec![0, 0, 1, 1]).unwrap();
        let z = [true, false, true, false];
        let y = simulate_responses(
            &g,
            &part,
            &zero_covariates(2),
            &z,
            &params(0.5, 2.0, 0.0, 0.0),
            &mut seeded(0),
        )
        .unwrap();
        assert_eq!(y, vec![2.0, 0.5, 2.0, 0.5]);
    }

    #[test]
    fn two_adjacent_users() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let part = ClusterPartition::new(vec![0, 1]).unwrap();
        let y = simulate_responses(
            &g,
            &part,
            &zero_covariates(2),
            &[true, false],
            &params(0.0, 1.0, -1.0, 1.0),
            &mut seeded(0),
        )
        .unwrap();
        assert_eq!(y, vec![0.0, 1.0]);
    }

    #[test]
    fn cluster_assignment_without_cross_edges_has_no_spillover() {
        let g = Graph::new(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5)]).unwrap();
        let part = ClusterPartition::new(vec![0, 0, 0, 1, 1, 1]).unwrap();
        let z = [true, true, true, false, false, false];
        let y = simulate_responses(
            &g,
            &part,
            &zero_covariates(2),
            &z,
            &params(0.0, 1.0, -3.0, 5.0),
            &mut seeded(0),
        )
        .unwrap();
        assert_eq!(y, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn spillover_signs_on_three_vertices() {
        // Path 0-1-2 and triangle variants, α1 = -α0 = α.
        let alpha = 0.7;
        let p = params(0.0, 1.0, -alpha, alpha);
        for edges in [vec![(0, 1), (1, 2)], vec![(0, 1), (1, 2), (0, 2)], vec![(0, 2)]] {
            let g = Graph::new(3, edges).unwrap();
            let part = ClusterPartition::new(vec![0, 1, 2]).unwrap();
            let x = CovariateMatrix::new(vec![0.0; 3], vec!["x".into()]).unwrap();
            for bits in 0..8u8 {
                let z: Vec<bool> = (0..3).map(|i| bits >> i & 1 == 1).collect();
                let y = simulate_responses(&g, &part, &x, &z, &p, &mut seeded(0)).unwrap();
                let expected = direct(&g, &z, &p);
                for i in 0..3 {
                    assert!((y[i] - expected[i]).abs() < 1e-15);
                    let treated = g.neighbors(i).iter().filter(|&&k| z[k]).count() as f64;
                    let control = g.degree(i) as f64 - treated;
                    let want = if z[i] { 1.0 - alpha * control } else { alpha * treated };
                    assert!((y[i] - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn noiseless_is_deterministic() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        let part = ClusterPartition::new(vec![0, 0, 1]).unwrap();
        let x = CovariateMatrix::new(vec![1.0, 2.0], vec!["x".into()]).unwrap();
        let p = ResponseParams {
            beta: vec![3.0],
            sigma_eps: 0.0,
            ..ResponseParams::default()
        };
        let a = simulate_responses(&g, &part, &x, &[true, false, true], &p, &mut seeded(1)).unwrap();
        let b = simulate_responses(&g, &part, &x, &[true, false, true], &p, &mut seeded(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, vec![4.0, 3.0, 7.0]);
    }

    #[test]
    fn beta_length_is_checked() {
        let g = Graph::new(2, []).unwrap();
        let part = ClusterPartition::new(vec![0, 1]).unwrap();
        let p = ResponseParams::default();
        assert!(simulate_responses(&g, &part, &zero_covariates(2), &[true, false], &p, &mut seeded(0)).is_err());
    }

    #[test]
    fn pseudo_responses_noiseless() {
        let x = CovariateMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![0.5, 0.0]], &["a", "b"]).unwrap();
        let t = [true, false, true];
        let zero_beta = ResponseParams {
            mu0: -1.0,
            mu1: 2.0,
            beta: vec![0.0, 0.0],
            sigma_eps: 0.0,
            ..Default::default()
        };
        let y = simulate_pseudo_responses(&x, &t, &zero_beta, &mut seeded(0)).unwrap();
        assert_eq!(y, vec![2.0, -1.0, 2.0]);
        let p = ResponseParams {
            beta: vec![1.0, -2.0],
            ..zero_beta
        };
        let y = simulate_pseudo_responses(&x, &t, &p, &mut seeded(0)).unwrap();
        let effects = p.cluster_effects(&x).unwrap();
        for j in 0..3 {
            let mu = if t[j] { p.mu1 } else { p.mu0 };
            assert_eq!(y[j] - effects[j] - mu, 0.0);
        }
    }

    #[test]
    fn pseudo_regression_recovers_coefficients() {
        use rand::Rng;
        let mut rng = seeded(31);
        let (m, p) = (10_000, 4);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..p).map(|_| rng.random_range(0.0..10.0)).collect())
            .collect();
        let x = CovariateMatrix::from_rows(&rows, &["a", "b", "c", "d"]).unwrap();
        let t: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
        let params = ResponseParams {
            mu0: 0.0,
            mu1: 1.0,
            beta: vec![1.0; 4],
            sigma_eps: 2.0,
            ..Default::default()
        };
        let y = simulate_pseudo_responses(&x, &t, &params, &mut rng).unwrap();

        let mut design = DMatrix::zeros(m, p + 2);
        for j in 0..m {
            design[(j, 0)] = 1.0;
            design[(j, 1)] = f64::from(u8::from(t[j]));
            for k in 0..p {
                design[(j, k + 2)] = rows[j][k];
            }
        }
        let yv = DVector::from_vec(y);
        let gram = design.transpose() * &design;
        let gram_inv = gram.clone().try_inverse().unwrap();
        let coef = &gram_inv * design.transpose() * &yv;
        let rss = least_squares_rss(&design, &yv).unwrap();
        let sigma2 = rss / (m - p - 2) as f64;
        let truth = [0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        for k in 0..p + 2 {
            let se = (sigma2 * gram_inv[(k, k)]).sqrt();
            assert!((coef[k] - truth[k]).abs() < 3.0 * se, "coef {k}: {} ± {se}", coef[k]);
        }
    }
}
