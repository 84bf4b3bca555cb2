//! The TOML configuration file. Every field has a default, so an empty file
//! (or no file) is valid; command-line flags override file values.

use std::path::PathBuf;

use netab::estimation::Estimator;
use netab::harness::SchemeSpec;
use netab::outcome::ResponseParams;
use netab::randomization::PairOrder;
use netab::synth::SynthConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Master seed for every random draw.
    pub seed: u64,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub car: CarSection,
    pub network: NetworkSection,
    pub cluster: ClusterSection,
    pub assign: AssignSection,
    pub bench: BenchSection,
}

/// Response model with symmetric spill-over `alpha1 = -alpha0 = alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mu0: f64,
    pub mu1: f64,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub sigma_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let p = ResponseParams::default();
        Self {
            mu0: p.mu0,
            mu1: p.mu1,
            alpha: 1.0,
            beta: p.beta,
            sigma_eps: p.sigma_eps,
        }
    }
}

impl ModelConfig {
    pub fn params(&self, alpha: f64) -> ResponseParams {
        ResponseParams {
            mu0: self.mu0,
            mu1: self.mu1,
            beta: self.beta.clone(),
            sigma_eps: self.sigma_eps,
            ..ResponseParams::default()
        }
        .with_alpha(alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarSection {
    pub q: f64,
    pub pair_order: PairOrder,
}

impl Default for CarSection {
    fn default() -> Self {
        Self {
            q: 0.85,
            pair_order: PairOrder::Shuffled,
        }
    }
}

/// A real network: edge list plus optional `vertex label` file. Without a
/// label file the network is clustered by label propagation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Skip the first non-comment line of the edge list.
    pub header: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub max_iters: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            max_iters: netab::ingest::DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignSection {
    pub scheme: SchemeSpec,
}

impl Default for AssignSection {
    fn default() -> Self {
        Self {
            scheme: SchemeSpec::Car(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub replications: usize,
    pub alphas: Vec<f64>,
    /// Reconnection rates swept on synthetic networks.
    pub reconnect_rates: Vec<f64>,
    pub schemes: Vec<SchemeSpec>,
    pub estimators: Vec<Estimator>,
    /// Redraw the synthetic network in every replication.
    pub regenerate_network: bool,
    /// Share the per-replication noise draw across schemes.
    pub common_noise: bool,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            replications: 1000,
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            reconnect_rates: vec![0.1, 0.5],
            schemes: vec![SchemeSpec::Cru, SchemeSpec::Crc, SchemeSpec::Car(2), SchemeSpec::Car(4)],
            estimators: vec![Estimator::Ce, Estimator::Cae],
            regenerate_network: true,
            common_noise: true,
        }
    }
}
