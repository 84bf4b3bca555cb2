//! Cluster covariates and covariate-balance diagnostics.
//!
//! Imbalance between arms is measured by the Mahalanobis form
//! `M = (n / 4) (x̄_A - x̄_B)' S⁻¹ (x̄_A - x̄_B)`, where `n` is the number of
//! clusters assigned so far and `S` is the sample covariance of all `m`
//! cluster rows, computed once before any assignment. With `n = 2k` the
//! leading factor is `k / 2`; under complete randomization `M` is
//! approximately chi-square with `p` degrees of freedom.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{ClusterPartition, Graph};
use crate::linalg::{self, RegularizedInverse};

pub const DEFAULT_COVARIATE_NAMES: [&str; 4] = ["size", "internal_edges", "cut_edges", "density"];

/// `m x p` matrix of cluster covariates, row `j` describing cluster `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    values: Vec<f64>,
    rows: usize,
    names: Vec<String>,
}

impl CovariateMatrix {
    /// `values` is row-major with `names.len()` columns.
    pub fn new(values: Vec<f64>, names: Vec<String>) -> Result<Self> {
        let p = names.len();
        if p == 0 {
            return Err(Error::Covariates("at least one covariate is required".into()));
        }
        if !values.len().is_multiple_of(p) {
            return Err(Error::Covariates(format!(
                "{} values do not fill rows of {p} covariates",
                values.len()
            )));
        }
        let rows = values.len() / p;
        if rows < 2 {
            return Err(Error::Covariates(format!("need at least 2 clusters, got {rows}")));
        }
        if let Some(k) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Covariates(format!(
                "non-finite value for cluster {} covariate `{}`",
                k / p,
                names[k % p]
            )));
        }
        Ok(Self { values, rows, names })
    }

    pub fn from_rows(rows: &[Vec<f64>], names: &[&str]) -> Result<Self> {
        if let Some(bad) = rows.iter().position(|r| r.len() != names.len()) {
            return Err(Error::Covariates(format!(
                "row {bad} has {} values, expected {}",
                rows[bad].len(),
                names.len()
            )));
        }
        Self::new(
            rows.iter().flatten().copied().collect(),
            names.iter().map(|s| s.to_string()).collect(),
        )
    }

    pub fn num_clusters(&self) -> usize {
        self.rows
    }

    pub fn num_covariates(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let p = self.names.len();
        &self.values[j * p..(j + 1) * p]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        let p = self.num_covariates();
        if let Some(&bad) = columns.iter().find(|&&c| c >= p) {
            return Err(Error::Covariates(format!("column {bad} out of range 0..{p}")));
        }
        let values = (0..self.rows)
            .flat_map(|j| columns.iter().map(move |&c| self.values[j * p + c]))
            .collect();
        Self::new(values, columns.iter().map(|&c| self.names[c].clone()).collect())
    }

    /// The first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Result<Self> {
        self.select_columns(&(0..k).collect::<Vec<_>>())
    }

    /// Writes `cluster,<names...>` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["cluster".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for j in 0..self.rows {
            let mut rec = vec![j.to_string()];
            rec.extend(self.row(j).iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv). Rows must be
    /// listed in cluster order `0..m`.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.get(0) != Some("cluster") || headers.len() < 2 {
            return Err(Error::Covariates(
                "covariate CSV must start with a `cluster` column followed by covariates".into(),
            ));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut values = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let id: usize = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Covariates(format!("row {}: bad cluster id", row + 2)))?;
            if id != row {
                return Err(Error::Covariates(format!(
                    "row {}: expected cluster {row}, found {id}",
                    row + 2
                )));
            }
            for (k, field) in rec.iter().skip(1).enumerate() {
                let x: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Covariates(format!("row {}: bad value for `{}`", row + 2, names[k])))?;
                values.push(x);
            }
        }
        Self::new(values, names)
    }
}

/// Per-cluster `(size, internal edges, cut edges, density)`.
///
/// Density is `2 * internal / (n (n - 1))`, taken as 0 for clusters of size
/// at most one.
pub fn compute_covariates(g: &Graph, part: &ClusterPartition) -> Result<CovariateMatrix> {
    let counts = part.edge_counts(g)?;
    let values = part
        .sizes()
        .into_iter()
        .zip(&counts)
        .flat_map(|(n, c)| {
            let density = if n <= 1 {
                0.0
            } else {
                2.0 * c.internal as f64 / (n * (n - 1)) as f64
            };
            [n as f64, c.internal as f64, c.cut as f64, density]
        })
        .collect();
    CovariateMatrix::new(values, DEFAULT_COVARIATE_NAMES.iter().map(|s| s.to_string()).collect())
}

/// Inverse sample covariance of the covariate rows.
pub fn covariance_inverse(x: &CovariateMatrix) -> Result<RegularizedInverse> {
    let (m, p) = (x.num_clusters(), x.num_covariates());
    if m <= p {
        return Err(Error::Covariates(format!(
            "covariance of {p} covariates needs more than {p} clusters, got {m}"
        )));
    }
    let cov = linalg::sample_covariance(x.values(), m, p);
    linalg::regularized_inverse(&cov, x.names())
}

/// Running per-arm covariate sums over assigned clusters.
#[derive(Debug, Clone)]
pub(crate) struct ArmSums {
    pub sum_a: Vec<f64>,
    pub sum_b: Vec<f64>,
    pub n_a: usize,
    pub n_b: usize,
}

impl ArmSums {
    pub fn new(p: usize) -> Self {
        Self {
            sum_a: vec![0.0; p],
            sum_b: vec![0.0; p],
            n_a: 0,
            n_b: 0,
        }
    }

    pub fn add(&mut self, row: &[f64], treated: bool) {
        let (sum, n) = if treated {
            (&mut self.sum_a, &mut self.n_a)
        } else {
            (&mut self.sum_b, &mut self.n_b)
        };
        for (s, x) in sum.iter_mut().zip(row) {
            *s += x;
        }
        *n += 1;
    }

    pub fn mean_difference(&self) -> Vec<f64> {
        let (na, nb) = (self.n_a as f64, self.n_b as f64);
        self.sum_a
            .iter()
            .zip(&self.sum_b)
            .map(|(a, b)| a / na - b / nb)
            .collect()
    }

    pub fn mahalanobis(&self, cov_inv: &DMatrix<f64>) -> f64 {
        let n = (self.n_a + self.n_b) as f64;
        n / 4.0 * linalg::quadratic_form(cov_inv, &self.mean_difference())
    }
}

/// Mahalanobis imbalance of the clusters `0..t.len()` under assignment `t`
/// (`true` = treatment A).
pub fn mahalanobis(x: &CovariateMatrix, t: &[bool], cov_inv: &DMatrix<f64>) -> Result<f64> {
    let p = x.num_covariates();
    if t.len() > x.num_clusters() {
        return Err(Error::param(format!(
            "assignment covers {} clusters, covariates only {}",
            t.len(),
            x.num_clusters()
        )));
    }
    if cov_inv.nrows() != p || cov_inv.ncols() != p {
        return Err(Error::param(format!(
            "inverse covariance is {}x{}, expected {p}x{p}",
            cov_inv.nrows(),
            cov_inv.ncols()
        )));
    }
    let mut sums = ArmSums::new(p);
    for (j, &treated) in t.iter().enumerate() {
        sums.add(x.row(j), treated);
    }
    if sums.n_a == 0 || sums.n_b == 0 {
        return Err(Error::param("mahalanobis needs both arms non-empty"));
    }
    Ok(sums.mahalanobis(cov_inv))
}

/// `(x̄_A - x̄_B) / s` per covariate, with `s` the standard deviation of the
/// covariate over all clusters. A constant covariate yields 0 when the arm
/// means agree and an error otherwise.
pub fn std_diff_means(x: &CovariateMatrix, t: &[bool]) -> Result<Vec<f64>> {
    let (m, p) = (x.num_clusters(), x.num_covariates());
    if t.len() != m {
        return Err(Error::param(format!(
            "assignment has {} clusters, expected {m}",
            t.len()
        )));
    }
    let mut sums = ArmSums::new(p);
    for (j, &treated) in t.iter().enumerate() {
        sums.add(x.row(j), treated);
    }
    if sums.n_a == 0 || sums.n_b == 0 {
        return Err(Error::param("standardized differences need both arms non-empty"));
    }
    let cov = linalg::sample_covariance(x.values(), m, p);
    sums.mean_difference()
        .into_iter()
        .enumerate()
        .map(|(k, d)| {
            let sd = cov[(k, k)].sqrt();
            if sd > 0.0 {
                Ok(d / sd)
            } else if d == 0.0 {
                Ok(0.0)
            } else {
                Err(Error::DegenerateCovariance(x.names()[k].clone()))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub mahalanobis: f64,
    pub std_diff: Vec<f64>,
    /// `(m_A, m_B)`.
    pub arm_counts: (usize, usize),
}

pub fn balance_report(x: &CovariateMatrix, t: &[bool], cov_inv: &DMatrix<f64>) -> Result<BalanceReport> {
    let n_a = t.iter().filter(|&&b| b).count();
    Ok(BalanceReport {
        mahalanobis: mahalanobis(x, t, cov_inv)?,
        std_diff: std_diff_means(x, t)?,
        arm_counts: (n_a, t.len() - n_a),
    })
}
