//! Monte-Carlo driver: replications, aggregation, and variance comparisons.
//!
//! A replication draws one assignment per design, simulates responses and
//! evaluates the requested estimators. All randomness comes from streams
//! keyed by `(master_seed, replication, role)` and results are reduced in
//! replication order, so the output does not depend on the thread count.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::{compute_covariates, covariance_inverse, mahalanobis, CovariateMatrix};
use crate::error::{Error, Result};
use crate::estimation::{cae, ce, uncontaminated_set, EstimateReport, Estimator};
use crate::graph::{ClusterPartition, Graph};
use crate::linalg::least_squares_rss;
use crate::outcome::{responses_with_noise, simulate_pseudo_responses, standard_normals, ResponseParams};
use crate::randomization::{car_with_inverse, crc, cru, Assignment, CarConfig, Scheme};
use crate::rng::{self, StreamRole};
use crate::synth::{assemble_network, SynthConfig};

/// A design as configured: CRU, CRC, or CAR balancing the first `k` covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SchemeSpec {
    Cru,
    Crc,
    Car(usize),
}

impl SchemeSpec {
    pub fn scheme(&self) -> Scheme {
        match self {
            SchemeSpec::Cru => Scheme::Cru,
            SchemeSpec::Crc => Scheme::Crc,
            SchemeSpec::Car(_) => Scheme::Car,
        }
    }

    pub fn is_cluster_level(&self) -> bool {
        !matches!(self, SchemeSpec::Cru)
    }

    pub fn supports(&self, est: Estimator) -> bool {
        est == Estimator::Ce || self.is_cluster_level()
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeSpec::Cru => f.write_str("CRU"),
            SchemeSpec::Crc => f.write_str("CRC"),
            SchemeSpec::Car(k) => write!(f, "CAR({k})"),
        }
    }
}

impl FromStr for SchemeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        match upper.as_str() {
            "CRU" => return Ok(SchemeSpec::Cru),
            "CRC" => return Ok(SchemeSpec::Crc),
            _ => {}
        }
        upper
            .strip_prefix("CAR(")
            .and_then(|rest| rest.strip_suffix(')'))
            .and_then(|k| k.trim().parse::<usize>().ok())
            .filter(|&k| k > 0)
            .map(SchemeSpec::Car)
            .ok_or_else(|| Error::param(format!("unknown scheme `{s}` (expected CRU, CRC or CAR(k))")))
    }
}

impl TryFrom<String> for SchemeSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SchemeSpec> for String {
    fn from(s: SchemeSpec) -> Self {
        s.to_string()
    }
}

/// A clustered network with its covariates.
#[derive(Debug, Clone)]
pub struct Network {
    pub graph: Graph,
    pub partition: ClusterPartition,
    pub covariates: CovariateMatrix,
}

impl Network {
    pub fn new(graph: Graph, partition: ClusterPartition) -> Result<Self> {
        let covariates = compute_covariates(&graph, &partition)?;
        Ok(Self {
            graph,
            partition,
            covariates,
        })
    }
}

#[derive(Debug, Clone)]
pub enum NetworkSource {
    /// Generated from the config; see `ExperimentConfig::regenerate_network_per_rep`.
    Synthetic(SynthConfig),
    /// A fixed network, e.g. a clustered real edge list.
    Fixed(Arc<Network>),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub network: NetworkSource,
    /// Draw a fresh synthetic network in every replication. Ignored for
    /// fixed networks; otherwise the network is generated once from the
    /// synthetic config's seed.
    pub regenerate_network_per_rep: bool,
    pub params: ResponseParams,
    pub schemes: Vec<SchemeSpec>,
    pub estimators: Vec<Estimator>,
    pub replications: usize,
    pub master_seed: u64,
    pub car: CarConfig,
    /// Share one noise draw across designs within a replication.
    pub common_noise: bool,
}

impl ExperimentConfig {
    pub fn new(network: NetworkSource, params: ResponseParams) -> Self {
        Self {
            network,
            regenerate_network_per_rep: true,
            params,
            schemes: vec![SchemeSpec::Cru, SchemeSpec::Crc, SchemeSpec::Car(2), SchemeSpec::Car(4)],
            estimators: vec![Estimator::Ce, Estimator::Cae],
            replications: 1000,
            master_seed: 0,
            car: CarConfig::default(),
            common_noise: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::param("at least 2 replications are required"));
        }
        if self.schemes.len() > usize::from(u8::MAX) {
            return Err(Error::param("too many schemes"));
        }
        let cells = self.cells();
        if cells.is_empty() {
            return Err(Error::param("no (scheme, estimator) pair to evaluate"));
        }
        if let NetworkSource::Synthetic(cfg) = &self.network {
            cfg.validate()?;
        }
        for s in &self.schemes {
            if let SchemeSpec::Car(k) = s {
                if *k > self.params.beta.len() {
                    return Err(Error::param(format!(
                        "{s} uses {k} covariates but only {} are available",
                        self.params.beta.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(scheme, estimator)` pairs in configuration order.
    pub fn cells(&self) -> Vec<(SchemeSpec, Estimator)> {
        let mut out = Vec::new();
        for &s in &self.schemes {
            for &e in &self.estimators {
                if s.supports(e) && !out.contains(&(s, e)) {
                    out.push((s, e));
                }
            }
        }
        out
    }
}

/// Per-network quantities shared by every replication on that network.
struct Prepared {
    network: Arc<Network>,
    /// Inverse covariance of all covariates (balance diagnostics).
    full_inverse: Option<DMatrix<f64>>,
    /// Leading-column covariates and their inverse covariance, per CAR(k).
    car: HashMap<usize, std::result::Result<(CovariateMatrix, DMatrix<f64>), String>>,
    mean_degree: f64,
    mean_cross_degree: f64,
}

impl Prepared {
    fn new(network: Arc<Network>, schemes: &[SchemeSpec]) -> Self {
        let x = &network.covariates;
        let full_inverse = covariance_inverse(x).ok().map(|inv| inv.matrix);
        let mut car = HashMap::new();
        for s in schemes {
            if let SchemeSpec::Car(k) = *s {
                car.entry(k).or_insert_with(|| {
                    x.leading_columns(k)
                        .and_then(|xk| covariance_inverse(&xk).map(|inv| (xk, inv.matrix)))
                        .map_err(|e| e.to_string())
                });
            }
        }
        Self {
            mean_degree: network.graph.mean_degree(),
            mean_cross_degree: network.partition.mean_cross_degree(&network.graph),
            network,
            full_inverse,
            car,
        }
    }
}

/// One `(replication, scheme, estimator)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub replication: usize,
    pub scheme: SchemeSpec,
    pub estimator: Estimator,
    pub tau_hat: Option<f64>,
    pub error: Option<String>,
    pub used_clusters: Option<usize>,
    pub dropped_clusters: Option<usize>,
    /// Imbalance over all covariates (cluster-level designs).
    pub mahalanobis: Option<f64>,
    /// Imbalance over the covariates the design balances (all for CRC).
    pub mahalanobis_used: Option<f64>,
    /// `R²_C` of the pseudo responses on the design's covariates.
    pub r_squared_c: Option<f64>,
    pub mean_degree: f64,
    pub mean_cross_degree: f64,
}

fn generate_network(cfg: &SynthConfig, rng: &mut rng::SimRng) -> Result<Arc<Network>> {
    let net = assemble_network(cfg, rng)?;
    Ok(Arc::new(Network::new(net.graph, net.partition)?))
}

fn fixed_network(cfg: &ExperimentConfig) -> Result<Option<Prepared>> {
    Ok(match &cfg.network {
        NetworkSource::Fixed(net) => Some(Prepared::new(net.clone(), &cfg.schemes)),
        NetworkSource::Synthetic(s) if !cfg.regenerate_network_per_rep => {
            let net = generate_network(s, &mut rng::seeded(s.seed))?;
            Some(Prepared::new(net, &cfg.schemes))
        }
        NetworkSource::Synthetic(_) => None,
    })
}

/// Runs one replication on its own network (fixed or freshly generated).
pub fn run_replication(cfg: &ExperimentConfig, replication: usize) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let fixed = fixed_network(cfg)?;
    replicate(cfg, fixed.as_ref(), replication)
}

fn replicate(cfg: &ExperimentConfig, fixed: Option<&Prepared>, replication: usize) -> Result<Vec<RunRecord>> {
    let rep = replication as u64;
    let generated;
    let prep = match (fixed, &cfg.network) {
        (Some(p), _) => p,
        (None, NetworkSource::Synthetic(s)) => {
            let net = generate_network(s, &mut rng::stream(cfg.master_seed, rep, StreamRole::Network))?;
            generated = Prepared::new(net, &cfg.schemes);
            &generated
        }
        (None, NetworkSource::Fixed(_)) => unreachable!("fixed networks are always prepared"),
    };
    let net = &prep.network;
    let (g, part, x) = (&net.graph, &net.partition, &net.covariates);
    cfg.params.validate(x.num_covariates())?;
    let n = g.num_vertices();
    let common = standard_normals(n, &mut rng::stream(cfg.master_seed, rep, StreamRole::Noise));

    let mut records = Vec::new();
    for (si, &scheme) in cfg.schemes.iter().enumerate() {
        let estimators: Vec<Estimator> = cfg.estimators.iter().copied().filter(|&e| scheme.supports(e)).collect();
        if estimators.is_empty() {
            continue;
        }
        let template = RunRecord {
            replication,
            scheme,
            estimator: Estimator::Ce,
            tau_hat: None,
            error: None,
            used_clusters: None,
            dropped_clusters: None,
            mahalanobis: None,
            mahalanobis_used: None,
            r_squared_c: None,
            mean_degree: prep.mean_degree,
            mean_cross_degree: prep.mean_cross_degree,
        };
        let fail = |msg: String| -> Vec<RunRecord> {
            estimators
                .iter()
                .map(|&e| RunRecord {
                    estimator: e,
                    error: Some(msg.clone()),
                    ..template.clone()
                })
                .collect()
        };

        let mut arng = rng::stream(cfg.master_seed, rep, StreamRole::Assignment(si as u8));
        let assignment = match scheme {
            SchemeSpec::Cru => cru(n, &mut arng),
            SchemeSpec::Crc => {
                crc(part.num_clusters(), &mut arng).and_then(|t| Assignment::from_clusters(part, t, Scheme::Crc))
            }
            SchemeSpec::Car(k) => match &prep.car[&k] {
                Ok((xk, inv)) => car_with_inverse(xk, inv, &cfg.car, &mut arng)
                    .and_then(|out| Assignment::from_clusters(part, out.labels, Scheme::Car)),
                Err(e) => Err(Error::param(e.clone())),
            },
        };
        let assignment = match assignment {
            Ok(a) => a,
            Err(e) => {
                records.extend(fail(e.to_string()));
                continue;
            }
        };

        let own_noise;
        let noise = if cfg.common_noise {
            &common
        } else {
            own_noise = standard_normals(
                n,
                &mut rng::stream(cfg.master_seed, rep, StreamRole::SchemeNoise(si as u8)),
            );
            &own_noise
        };
        let y = responses_with_noise(g, part, x, &assignment.user_labels, &cfg.params, noise)?;

        let mut base = template.clone();
        if let Some(t) = &assignment.cluster_labels {
            base.mahalanobis = prep.full_inverse.as_ref().and_then(|inv| mahalanobis(x, t, inv).ok());
            let used = match scheme {
                SchemeSpec::Car(k) => prep.car[&k].as_ref().ok().map(|(xk, inv)| (xk.clone(), inv)),
                _ => prep.full_inverse.as_ref().map(|inv| (x.clone(), inv)),
            };
            if let Some((xk, inv)) = used {
                base.mahalanobis_used = mahalanobis(&xk, t, inv).ok();
                let mut prng = rng::stream(cfg.master_seed, rep, StreamRole::PseudoNoise);
                base.r_squared_c = simulate_pseudo_responses(x, t, &cfg.params, &mut prng)
                    .and_then(|ystar| r_squared_pseudo(&xk, t, &ystar))
                    .ok();
            }
        }

        let contamination = match assignment.cluster_labels {
            Some(_) => Some(uncontaminated_set(g, &assignment.user_labels)?),
            None => None,
        };
        for &est in &estimators {
            let result = match est {
                Estimator::Ce => ce(&y, &assignment.user_labels),
                Estimator::Cae => cae(
                    &y,
                    part,
                    assignment.cluster_labels.as_ref().expect("cluster-level design"),
                    contamination.as_ref().expect("cluster-level design"),
                ),
            };
            records.push(match result {
                Ok(EstimateReport {
                    tau_hat,
                    used_clusters,
                    dropped_clusters,
                    ..
                }) => RunRecord {
                    estimator: est,
                    tau_hat: Some(tau_hat),
                    used_clusters,
                    dropped_clusters,
                    ..base.clone()
                },
                Err(e) => RunRecord {
                    estimator: est,
                    error: Some(e.to_string()),
                    ..base.clone()
                },
            });
        }
    }
    Ok(records)
}

/// Runs all replications. `jobs` caps the worker threads (default: all cores);
/// the result is identical for every value.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let fixed = fixed_network(cfg)?;
    let run = || -> Result<Vec<RunRecord>> {
        let per_rep: Vec<Vec<RunRecord>> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| replicate(cfg, fixed.as_ref(), rep))
            .collect::<Result<_>>()?;
        Ok(per_rep.into_iter().flatten().collect())
    };
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::param(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Summary statistics of one `(scheme, estimator)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub scheme: SchemeSpec,
    pub estimator: Estimator,
    pub rep_count: usize,
    pub failed_reps: usize,
    pub bias: Option<f64>,
    pub se_bias: Option<f64>,
    pub sd: Option<f64>,
    #[serde(rename = "mean_Mm")]
    pub mean_mm: Option<f64>,
    #[serde(rename = "median_Mm")]
    pub median_mm: Option<f64>,
    /// Mean imbalance over the covariates the design balances.
    #[serde(rename = "mean_Mm_used")]
    pub mean_mm_used: Option<f64>,
    pub priv_vs_crc: Option<f64>,
    pub priv_lower_bound: Option<f64>,
    pub r_squared_c: Option<f64>,
    pub dropped_clusters_mean: Option<f64>,
    pub mean_degree: f64,
    pub mean_cross_degree: f64,
}

impl CellSummary {
    pub fn variance(&self) -> Option<f64> {
        self.sd.map(|s| s * s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub tau: f64,
    pub cells: Vec<CellSummary>,
}

impl McSummary {
    pub fn cell(&self, scheme: SchemeSpec, estimator: Estimator) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.scheme == scheme && c.estimator == estimator)
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    })
}

/// Sample standard deviation (denominator `n - 1`).
pub fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Aggregates records into per-cell bias, s.d., balance and variance
/// reduction statistics. Cells appear in order of first occurrence; a cell
/// with fewer than two successful replications has no statistics.
pub fn aggregate(tau: f64, records: &[RunRecord]) -> McSummary {
    let mut order: Vec<(SchemeSpec, Estimator)> = Vec::new();
    let mut groups: HashMap<(SchemeSpec, Estimator), Vec<&RunRecord>> = HashMap::new();
    for r in records {
        let key = (r.scheme, r.estimator);
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(r);
    }
    let mut cells: Vec<CellSummary> = order
        .iter()
        .map(|key| {
            let rs = &groups[key];
            let estimates: Vec<f64> = rs.iter().filter_map(|r| r.tau_hat).collect();
            let collect = |f: fn(&RunRecord) -> Option<f64>| rs.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            let mm = collect(|r| r.mahalanobis);
            let enough = estimates.len() >= 2;
            let sd = if enough { sample_sd(&estimates) } else { None };
            CellSummary {
                scheme: key.0,
                estimator: key.1,
                rep_count: estimates.len(),
                failed_reps: rs.len() - estimates.len(),
                bias: if enough {
                    mean(&estimates).map(|m| m - tau)
                } else {
                    None
                },
                se_bias: sd.map(|s| s / (estimates.len() as f64).sqrt()),
                sd,
                mean_mm: mean(&mm),
                median_mm: median(&mm),
                mean_mm_used: mean(&collect(|r| r.mahalanobis_used)),
                priv_vs_crc: None,
                priv_lower_bound: None,
                r_squared_c: mean(&collect(|r| r.r_squared_c)),
                dropped_clusters_mean: mean(&collect(|r| r.dropped_clusters.map(|d| d as f64))),
                mean_degree: mean(&rs.iter().map(|r| r.mean_degree).collect::<Vec<_>>()).unwrap_or(0.0),
                mean_cross_degree: mean(&rs.iter().map(|r| r.mean_cross_degree).collect::<Vec<_>>()).unwrap_or(0.0),
            }
        })
        .collect();

    let crc_var: HashMap<Estimator, f64> = cells
        .iter()
        .filter(|c| c.scheme == SchemeSpec::Crc)
        .filter_map(|c| c.variance().map(|v| (c.estimator, v)))
        .collect();
    for c in &mut cells {
        if let SchemeSpec::Car(k) = c.scheme {
            if let (Some(&v_crc), Some(v_car)) = (crc_var.get(&c.estimator), c.variance()) {
                c.priv_vs_crc = priv_reduction(v_crc, v_car).ok();
            }
            if c.estimator == Estimator::Cae {
                if let (Some(mm), Some(r2)) = (c.mean_mm_used, c.r_squared_c) {
                    c.priv_lower_bound = Some(priv_lower_bound(mm, k, r2));
                }
            }
        }
    }
    McSummary { tau, cells }
}

/// Percent reduction in variance `(var_crc - var_car) / var_crc`.
pub fn priv_reduction(var_crc: f64, var_car: f64) -> Result<f64> {
    if var_crc.is_nan() || var_crc <= 0.0 {
        return Err(Error::param(format!(
            "reference variance must be positive, got {var_crc}"
        )));
    }
    Ok((var_crc - var_car) / var_crc)
}

/// Lower bound `(1 - E[M_m | CAR] / p) R²_C` on the variance reduction of the
/// cluster-adjusted estimator.
pub fn priv_lower_bound(mean_mm_car: f64, p: usize, r_squared_c: f64) -> f64 {
    debug_assert!(mean_mm_car >= 0.0 && (0.0..=1.0).contains(&r_squared_c));
    (1.0 - mean_mm_car / p as f64) * r_squared_c
}

/// Share of the residual variance of `y_star` given an intercept and the arm
/// indicator that is explained by the covariates:
/// `1 - RSS(1, T, X) / RSS(1, T)`.
pub fn r_squared_pseudo(x: &CovariateMatrix, t: &[bool], y_star: &[f64]) -> Result<f64> {
    let (m, p) = (x.num_clusters(), x.num_covariates());
    if t.len() != m || y_star.len() != m {
        return Err(Error::param(format!(
            "{} labels and {} responses for {m} clusters",
            t.len(),
            y_star.len()
        )));
    }
    if m <= p + 2 {
        return Err(Error::param(format!(
            "R²_C with {p} covariates needs more than {} clusters",
            p + 2
        )));
    }
    let treated = t.iter().filter(|&&b| b).count();
    if treated == 0 || treated == m {
        return Err(Error::param("R²_C needs both arms non-empty"));
    }
    // Standardized columns keep the ridge fallback scale-free; R² is unchanged.
    let mut design = DMatrix::zeros(m, p + 2);
    for j in 0..m {
        design[(j, 0)] = 1.0;
        design[(j, 1)] = f64::from(u8::from(t[j]));
    }
    for k in 0..p {
        let col: Vec<f64> = (0..m).map(|j| x.row(j)[k]).collect();
        let mu = mean(&col).unwrap_or(0.0);
        let sd = sample_sd(&col).unwrap_or(0.0);
        let scale = if sd > 0.0 { sd } else { 1.0 };
        for j in 0..m {
            design[(j, k + 2)] = (col[j] - mu) / scale;
        }
    }
    let y = DVector::from_column_slice(y_star);
    let reduced = design.columns(0, 2).into_owned();
    let rss_reduced = least_squares_rss(&reduced, &y)?;
    if rss_reduced.is_nan() || rss_reduced <= 0.0 {
        return Err(Error::estimation("pseudo responses are constant within arms"));
    }
    let rss_full = least_squares_rss(&design, &y)?;
    Ok((1.0 - rss_full / rss_reduced).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn record(tau_hat: Option<f64>) -> RunRecord {
        RunRecord {
            replication: 0,
            scheme: SchemeSpec::Crc,
            estimator: Estimator::Cae,
            tau_hat,
            error: tau_hat.is_none().then(|| "failed".to_string()),
            used_clusters: None,
            dropped_clusters: Some(1),
            mahalanobis: Some(2.0),
            mahalanobis_used: Some(2.0),
            r_squared_c: None,
            mean_degree: 1.0,
            mean_cross_degree: 0.5,
        }
    }

    #[test]
    fn scheme_spec_parsing() {
        assert_eq!("car(2)".parse::<SchemeSpec>().unwrap(), SchemeSpec::Car(2));
        assert_eq!("CRU".parse::<SchemeSpec>().unwrap(), SchemeSpec::Cru);
        assert!("CAR(0)".parse::<SchemeSpec>().is_err());
        assert!("CAR".parse::<SchemeSpec>().is_err());
        assert_eq!(SchemeSpec::Car(4).to_string(), "CAR(4)");
    }

    #[test]
    fn aggregate_exact_records() {
        let s = aggregate(1.0, &[record(Some(1.0)), record(Some(1.0)), record(Some(1.0))]);
        let c = &s.cells[0];
        assert_eq!((c.bias, c.sd, c.se_bias), (Some(0.0), Some(0.0), Some(0.0)));
        assert_eq!(c.dropped_clusters_mean, Some(1.0));
    }

    #[test]
    fn aggregate_two_records() {
        let s = aggregate(1.0, &[record(Some(0.0)), record(Some(2.0)), record(None)]);
        let c = &s.cells[0];
        assert_eq!(c.bias, Some(0.0));
        assert!((c.sd.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!((c.rep_count, c.failed_reps), (2, 1));
    }

    #[test]
    fn aggregate_all_failed_is_missing() {
        let s = aggregate(1.0, &[record(None), record(None)]);
        let c = &s.cells[0];
        assert_eq!((c.bias, c.sd, c.rep_count, c.failed_reps), (None, None, 0, 2));
    }

    #[test]
    fn priv_values() {
        assert_eq!(priv_reduction(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(priv_reduction(2.0, 0.0).unwrap(), 1.0);
        assert!(priv_reduction(0.0, 1.0).is_err());
        assert_eq!(priv_lower_bound(0.0, 4, 0.7), 0.7);
        assert_eq!(priv_lower_bound(1.0, 4, 0.0), 0.0);
        assert!((priv_lower_bound(1.0, 4, 0.8) - 0.6).abs() < 1e-15);
    }

    fn gaussian_covariates(m: usize, p: usize, seed: u64) -> CovariateMatrix {
        let mut rng = seeded(seed);
        let values = (0..m * p).map(|_| rng.random_range(0.0..10.0)).collect();
        CovariateMatrix::new(values, (0..p).map(|k| format!("x{k}")).collect()).unwrap()
    }

    #[test]
    fn r_squared_without_signal_is_small() {
        let x = gaussian_covariates(500, 4, 1);
        let mut rng = seeded(2);
        let t: Vec<bool> = (0..500).map(|_| rng.random_bool(0.5)).collect();
        let params = ResponseParams {
            beta: vec![0.0; 4],
            sigma_eps: 2.0,
            ..Default::default()
        };
        let y = simulate_pseudo_responses(&x, &t, &params, &mut rng).unwrap();
        let r2 = r_squared_pseudo(&x, &t, &y).unwrap();
        assert!((0.0..0.05).contains(&r2), "{r2}");
    }

    #[test]
    fn r_squared_noiseless_is_one() {
        let x = gaussian_covariates(100, 3, 5);
        let t: Vec<bool> = (0..100).map(|j| j % 3 == 0).collect();
        let params = ResponseParams {
            beta: vec![1.0, -2.0, 0.5],
            sigma_eps: 0.0,
            ..Default::default()
        };
        let y = simulate_pseudo_responses(&x, &t, &params, &mut seeded(0)).unwrap();
        assert!((r_squared_pseudo(&x, &t, &y).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn r_squared_preconditions() {
        let x = gaussian_covariates(6, 4, 5);
        let t = vec![true, false, true, false, true, false];
        assert!(r_squared_pseudo(&x, &t, &[0.0; 6]).is_err());
        let x = gaussian_covariates(10, 1, 5);
        assert!(r_squared_pseudo(&x, &[true; 10], &[1.0; 10]).is_err());
    }

    fn tiny_network() -> Arc<Network> {
        // Two triangles joined by one edge, plus an isolated pair and a path.
        let g = Graph::new(
            10,
            [
                (0, 1),
                (1, 2),
                (0, 2),
                (3, 4),
                (4, 5),
                (3, 5),
                (2, 3),
                (6, 7),
                (8, 9),
                (7, 8),
            ],
        )
        .unwrap();
        let part = ClusterPartition::new(vec![0, 0, 0, 1, 1, 1, 2, 2, 3, 3]).unwrap();
        Arc::new(Network::new(g, part).unwrap())
    }

    #[test]
    fn noiseless_no_interference_is_exact() {
        let params = ResponseParams {
            mu0: 0.5,
            mu1: 2.0,
            beta: vec![0.0; 4],
            sigma_eps: 0.0,
            ..Default::default()
        };
        let mut cfg = ExperimentConfig::new(NetworkSource::Fixed(tiny_network()), params);
        cfg.schemes = vec![SchemeSpec::Cru, SchemeSpec::Crc];
        cfg.replications = 20;
        let records = run_experiment(&cfg, Some(2)).unwrap();
        for r in records.iter().filter_map(|r| r.tau_hat) {
            assert_eq!(r, 1.5);
        }
    }

    #[test]
    fn replication_is_deterministic() {
        let cfg = ExperimentConfig {
            replications: 3,
            master_seed: 9,
            ..ExperimentConfig::new(
                NetworkSource::Synthetic(SynthConfig {
                    clusters: 30,
                    ..Default::default()
                }),
                ResponseParams::default().with_alpha(1.0),
            )
        };
        let a = run_replication(&cfg, 2).unwrap();
        let b = run_replication(&cfg, 2).unwrap();
        assert_eq!(a, b);
        let all = run_experiment(&cfg, Some(3)).unwrap();
        assert_eq!(&all[all.len() - a.len()..], a.as_slice());
        assert_eq!(cfg.cells().len(), 7);
        assert_eq!(a.len(), 7);
    }

    #[test]
    fn cru_on_two_users_reproduces_hand_estimate() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let part = ClusterPartition::new(vec![0, 1]).unwrap();
        let net = Arc::new(Network {
            graph: g,
            partition: part,
            covariates: CovariateMatrix::new(vec![0.0, 0.0], vec!["x".into()]).unwrap(),
        });
        let params = ResponseParams {
            mu0: 0.0,
            mu1: 1.0,
            alpha0: -1.0,
            alpha1: 1.0,
            beta: vec![0.0],
            sigma_eps: 0.0,
        };
        let mut cfg = ExperimentConfig::new(NetworkSource::Fixed(net), params);
        cfg.schemes = vec![SchemeSpec::Cru];
        cfg.estimators = vec![Estimator::Ce];
        cfg.replications = 64;
        let records = run_experiment(&cfg, None).unwrap();
        let mut split = 0;
        for r in &records {
            match r.tau_hat {
                // Z = (1, 0) or (0, 1): Y = (0, 1) or (1, 0), CE = -1.
                Some(t) => {
                    assert_eq!(t, -1.0);
                    split += 1;
                }
                None => assert!(r.error.as_deref().unwrap().contains("both arms")),
            }
        }
        assert!(split > 0 && split < 64);
        let s = aggregate(1.0, &records);
        assert_eq!(s.cells[0].bias, Some(-2.0));
        assert_eq!(s.cells[0].failed_reps, 64 - split);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::new(
            NetworkSource::Synthetic(SynthConfig::default()),
            ResponseParams::default(),
        );
        cfg.replications = 1;
        assert!(cfg.validate().is_err());
        cfg.replications = 2;
        cfg.schemes = vec![SchemeSpec::Cru];
        cfg.estimators = vec![Estimator::Cae];
        assert!(cfg.validate().is_err());
        cfg.schemes = vec![SchemeSpec::Car(5)];
        assert!(cfg.validate().is_err());
    }
}
