//! `netab`: generate clustered networks, cluster edge lists, draw
//! assignments, simulate one experiment, or run Monte-Carlo benchmarks.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use nalgebra::DMatrix;
use serde::Serialize;

use netab::balance::{compute_covariates, covariance_inverse, mahalanobis, std_diff_means, CovariateMatrix};
use netab::estimation::{cae, ce, uncontaminated_set, EstimateReport, Estimator};
use netab::harness::{
    aggregate, run_experiment, ExperimentConfig, McSummary, Network, NetworkSource, RunRecord, SchemeSpec,
};
use netab::ingest::{
    label_propagation, read_cluster_indices, read_edge_list, read_label_file, write_edge_list, write_label_file,
    EdgeListSource,
};
use netab::outcome::{responses_with_noise, standard_normals, write_responses_csv};
use netab::randomization::{car_with_inverse, crc, cru, Assignment, CarConfig, Scheme};
use netab::report::{write_raw_csv, write_summary_csv, write_summary_json, RunLabel};
use netab::rng::{self, seeded, StreamRole};
use netab::synth::assemble_network;

use config::Config;

#[derive(Parser, Debug)]
#[command(
    name = "netab",
    version,
    about = "Cluster-randomized A/B tests on networks with interference"
)]
struct Cli {
    /// TOML configuration file; flags take precedence over its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = "netab-out")]
    out: PathBuf,
    /// Worker threads for replications (default: all cores). Never changes results.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Also write a JSON summary.
    #[arg(long, global = true)]
    json: bool,
    /// Also write per-replication records.
    #[arg(long, global = true)]
    raw: bool,
    /// CAR preference for the more balanced arrangement.
    #[arg(long, global = true)]
    q: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic clustered network.
    Generate(SynthArgs),
    /// Cluster an edge list by label propagation.
    Cluster(NetworkArgs),
    /// Draw a treatment assignment for a clustered population.
    Assign(AssignArgs),
    /// Simulate one experiment and estimate the treatment effect.
    Simulate(SimulateArgs),
    /// Monte-Carlo bias / variance / balance benchmark over an (alpha, r) grid.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Default)]
struct SynthArgs {
    /// Number of clusters.
    #[arg(long)]
    clusters: Option<usize>,
    /// Reconnection rate r.
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct NetworkArgs {
    /// Whitespace-separated edge list.
    #[arg(long, value_name = "PATH")]
    edges: Option<PathBuf>,
    /// `vertex label` file; replaces label propagation.
    #[arg(long, value_name = "PATH")]
    labels: Option<PathBuf>,
    /// Skip the first non-comment line of the edge list.
    #[arg(long)]
    header: bool,
}

#[derive(Args, Debug)]
struct AssignArgs {
    /// `vertex cluster_index` file, e.g. from `generate` or `cluster`.
    #[arg(long, value_name = "PATH")]
    labels: PathBuf,
    /// Covariate CSV with one row per cluster index.
    #[arg(long, value_name = "PATH")]
    covariates: PathBuf,
    /// CRU, CRC or CAR(k).
    #[arg(long)]
    scheme: Option<SchemeSpec>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long)]
    scheme: Option<SchemeSpec>,
    /// Spill-over strength (alpha1 = -alpha0 = alpha).
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long)]
    replications: Option<usize>,
    /// Comma-separated alpha grid.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    alphas: Option<Vec<f64>>,
    /// Comma-separated reconnection-rate grid (synthetic networks).
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    /// Comma-separated schemes, e.g. CRU,CRC,CAR(2),CAR(4).
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SchemeSpec>>,
    /// Comma-separated estimators (CE, CAE).
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<Estimator>>,
    /// Generate one synthetic network and keep it for all replications.
    #[arg(long)]
    fixed_network: bool,
    /// Draw independent noise for every scheme.
    #[arg(long)]
    independent_noise: bool,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(q) = cli.q {
        cfg.car.q = q;
    }
    match &cli.command {
        Command::Generate(s) => apply_synth(&mut cfg, s),
        Command::Cluster(n) => apply_network(&mut cfg, n),
        Command::Assign(a) => {
            if let Some(s) = a.scheme {
                cfg.assign.scheme = s;
            }
        }
        Command::Simulate(a) => {
            apply_network(&mut cfg, &a.network);
            apply_synth(&mut cfg, &a.synth);
            if let Some(s) = a.scheme {
                cfg.assign.scheme = s;
            }
            if let Some(alpha) = a.alpha {
                cfg.model.alpha = alpha;
            }
        }
        Command::Bench(b) => {
            apply_network(&mut cfg, &b.network);
            apply_synth(&mut cfg, &b.synth);
            let bench = &mut cfg.bench;
            if let Some(r) = b.replications {
                bench.replications = r;
            }
            if let Some(a) = &b.alphas {
                bench.alphas = a.clone();
            }
            if let Some(r) = &b.rates {
                bench.reconnect_rates = r.clone();
            }
            if let Some(s) = &b.schemes {
                bench.schemes = s.clone();
            }
            if let Some(e) = &b.estimators {
                bench.estimators = e.clone();
            }
            if b.fixed_network {
                bench.regenerate_network = false;
            }
            if b.independent_noise {
                bench.common_noise = false;
            }
        }
    }
    cfg.synth.seed = cfg.seed;
    Ok(cfg)
}

fn apply_synth(cfg: &mut Config, s: &SynthArgs) {
    if let Some(m) = s.clusters {
        cfg.synth.clusters = m;
    }
    if let Some(r) = s.rate {
        cfg.synth.reconnect_rate = r;
    }
}

fn apply_network(cfg: &mut Config, n: &NetworkArgs) {
    if n.edges.is_some() {
        cfg.network.edges = n.edges.clone();
    }
    if n.labels.is_some() {
        cfg.network.labels = n.labels.clone();
    }
    cfg.network.header |= n.header;
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Writes the effective configuration next to the outputs.
fn echo_config(dir: &Path, cfg: &Config) -> Result<()> {
    let mut out = create(dir, "config.toml")?;
    out.write_all(toml::to_string(cfg)?.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn car_config(cfg: &Config) -> Result<CarConfig> {
    Ok(CarConfig::new(cfg.car.q, cfg.car.pair_order)?)
}

/// A real network with its external vertex ids.
struct Loaded {
    network: Network,
    ids: Vec<String>,
}

fn load_network(cfg: &Config, edges: &Path) -> Result<Loaded> {
    let loaded = read_edge_list(&EdgeListSource {
        path: edges.to_path_buf(),
        has_header: cfg.network.header,
    })?;
    let partition = match &cfg.network.labels {
        Some(path) => read_label_file(path, &loaded)?,
        None => {
            let lp = label_propagation(&loaded.graph, &mut seeded(cfg.seed), cfg.cluster.max_iters)?;
            if !lp.converged {
                warn!(
                    "label propagation stopped after {} sweeps without converging",
                    lp.iterations
                );
            }
            lp.partition
        }
    };
    info!(
        "{}: {} vertices, {} edges, {} clusters",
        edges.display(),
        loaded.graph.num_vertices(),
        loaded.graph.num_edges(),
        partition.num_clusters()
    );
    Ok(Loaded {
        network: Network::new(loaded.graph, partition)?,
        ids: loaded.ids,
    })
}

fn cmd_generate(cfg: &Config, out: &Path) -> Result<()> {
    let net = assemble_network(&cfg.synth, &mut seeded(cfg.seed))?;
    let x = compute_covariates(&net.graph, &net.partition)?;
    write_edge_list(create(out, "edges.txt")?, &net.graph, None)?;
    write_label_file(create(out, "labels.txt")?, &net.partition, None)?;
    x.write_csv(create(out, "covariates.csv")?)?;
    echo_config(out, cfg)?;
    println!(
        "generated {} users in {} clusters with {} edges",
        net.graph.num_vertices(),
        net.partition.num_clusters(),
        net.graph.num_edges()
    );
    Ok(())
}

fn cmd_cluster(cfg: &Config, out: &Path) -> Result<()> {
    let Some(edges) = &cfg.network.edges else {
        bail!("cluster needs an edge list (--edges or [network] edges)");
    };
    let loaded = load_network(cfg, edges)?;
    let net = &loaded.network;
    write_label_file(create(out, "labels.txt")?, &net.partition, Some(&loaded.ids))?;
    net.covariates.write_csv(create(out, "covariates.csv")?)?;
    echo_config(out, cfg)?;
    println!(
        "{} vertices, {} edges, {} clusters",
        net.graph.num_vertices(),
        net.graph.num_edges(),
        net.partition.num_clusters()
    );
    Ok(())
}

/// Inverse covariance for balancing. When every cluster has the same
/// covariates all arrangements are equally balanced, so the zero matrix
/// (M = 0 throughout) stands in for the undefined inverse.
fn balancing_inverse(x: &CovariateMatrix) -> Result<DMatrix<f64>> {
    let first = x.row(0);
    if (1..x.num_clusters()).all(|j| x.row(j) == first) {
        warn!("all clusters have identical covariates; every arrangement is balanced");
        let p = x.num_covariates();
        return Ok(DMatrix::zeros(p, p));
    }
    Ok(covariance_inverse(x)?.matrix)
}

#[derive(Serialize)]
struct BalanceJson {
    scheme: SchemeSpec,
    /// Imbalance over all covariates.
    mahalanobis: Option<f64>,
    /// Imbalance over the covariates the design balances.
    mahalanobis_used: Option<f64>,
    covariates: Vec<String>,
    std_diff: Option<Vec<f64>>,
    arm_counts: (usize, usize),
}

fn draw_assignment(
    scheme: SchemeSpec,
    part: &netab::ClusterPartition,
    x: &CovariateMatrix,
    car: &CarConfig,
    rng: &mut rng::SimRng,
) -> Result<Assignment> {
    Ok(match scheme {
        SchemeSpec::Cru => cru(part.num_vertices(), rng)?,
        SchemeSpec::Crc => Assignment::from_clusters(part, crc(part.num_clusters(), rng)?, Scheme::Crc)?,
        SchemeSpec::Car(k) => {
            if k > x.num_covariates() {
                bail!(
                    "{scheme} needs {k} covariates, the covariate file has {}",
                    x.num_covariates()
                );
            }
            let xk = x.leading_columns(k)?;
            let inv = balancing_inverse(&xk)?;
            let t = car_with_inverse(&xk, &inv, car, rng)?.labels;
            Assignment::from_clusters(part, t, Scheme::Car)?
        }
    })
}

fn balance_json(scheme: SchemeSpec, x: &CovariateMatrix, a: &Assignment) -> Result<Option<BalanceJson>> {
    let Some(t) = &a.cluster_labels else {
        return Ok(None);
    };
    let imbalance = |x: &CovariateMatrix| balancing_inverse(x).ok().and_then(|inv| mahalanobis(x, t, &inv).ok());
    let used = match scheme {
        SchemeSpec::Car(k) => x.leading_columns(k)?,
        _ => x.clone(),
    };
    let treated = t.iter().filter(|&&b| b).count();
    Ok(Some(BalanceJson {
        scheme,
        mahalanobis: imbalance(x),
        mahalanobis_used: imbalance(&used),
        covariates: x.names().to_vec(),
        std_diff: std_diff_means(x, t).ok(),
        arm_counts: (treated, t.len() - treated),
    }))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut out = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn write_bool_csv(dir: &Path, name: &str, header: [&str; 2], rows: impl Iterator<Item = (String, bool)>) -> Result<()> {
    let mut out = create(dir, name)?;
    writeln!(out, "{},{}", header[0], header[1])?;
    for (id, b) in rows {
        writeln!(out, "{id},{}", u8::from(b))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_assign(cfg: &Config, args: &AssignArgs, out: &Path) -> Result<()> {
    let (ids, part) = read_cluster_indices(&args.labels)?;
    let x = CovariateMatrix::read_csv(
        File::open(&args.covariates).with_context(|| format!("opening {}", args.covariates.display()))?,
    )?;
    if x.num_clusters() != part.num_clusters() {
        bail!(
            "{} has {} clusters but {} has {} rows",
            args.labels.display(),
            part.num_clusters(),
            args.covariates.display(),
            x.num_clusters()
        );
    }
    let scheme = cfg.assign.scheme;
    let mut rng = rng::stream(cfg.seed, 0, StreamRole::Assignment(0));
    let a = draw_assignment(scheme, &part, &x, &car_config(cfg)?, &mut rng)?;
    write_bool_csv(
        out,
        "users.csv",
        ["user", "Z"],
        ids.iter().cloned().zip(a.user_labels.iter().copied()),
    )?;
    if let Some(t) = &a.cluster_labels {
        write_bool_csv(
            out,
            "clusters.csv",
            ["cluster", "T"],
            t.iter().enumerate().map(|(j, &b)| (j.to_string(), b)),
        )?;
    }
    if let Some(b) = balance_json(scheme, &x, &a)? {
        match b.mahalanobis_used {
            Some(m) => println!("{scheme}: M = {m:.6} over {} clusters", part.num_clusters()),
            None => println!("{scheme}: imbalance undefined for these covariates"),
        }
        write_json(out, "balance.json", &b)?;
    }
    echo_config(out, cfg)?;
    let (n_a, n_b) = a.arm_sizes();
    println!("{n_a} users in A, {n_b} in B");
    Ok(())
}

#[derive(Serialize)]
struct SimulationJson {
    scheme: SchemeSpec,
    tau: f64,
    estimates: Vec<EstimateReport>,
    errors: Vec<String>,
    balance: Option<BalanceJson>,
}

fn cmd_simulate(cfg: &Config, out: &Path) -> Result<()> {
    let (network, ids) = match &cfg.network.edges {
        Some(edges) => {
            let l = load_network(cfg, edges)?;
            (l.network, Some(l.ids))
        }
        None => {
            let net = assemble_network(&cfg.synth, &mut seeded(cfg.seed))?;
            (Network::new(net.graph, net.partition)?, None)
        }
    };
    let (g, part, x) = (&network.graph, &network.partition, &network.covariates);
    let scheme = cfg.assign.scheme;
    let params = cfg.model.params(cfg.model.alpha);
    params.validate(x.num_covariates())?;
    let a = draw_assignment(
        scheme,
        part,
        x,
        &car_config(cfg)?,
        &mut rng::stream(cfg.seed, 0, StreamRole::Assignment(0)),
    )?;
    let noise = standard_normals(g.num_vertices(), &mut rng::stream(cfg.seed, 0, StreamRole::Noise));
    let y = responses_with_noise(g, part, x, &a.user_labels, &params, &noise)?;

    let mut estimates = Vec::new();
    let mut errors = Vec::new();
    let mut record = |r: netab::Result<EstimateReport>| match r {
        Ok(e) => estimates.push(e),
        Err(e) => errors.push(e.to_string()),
    };
    record(ce(&y, &a.user_labels));
    if let Some(t) = &a.cluster_labels {
        record(cae(&y, part, t, &uncontaminated_set(g, &a.user_labels)?));
    }
    for e in &estimates {
        println!("{scheme} {}: {:.6} (tau = {})", e.estimator, e.tau_hat, params.tau());
    }
    for e in &errors {
        println!("{scheme}: {e}");
    }

    match &ids {
        Some(ids) => {
            let mut w = create(out, "responses.csv")?;
            writeln!(w, "user,Z,Y")?;
            for ((id, &z), yi) in ids.iter().zip(&a.user_labels).zip(&y) {
                writeln!(w, "{id},{},{yi}", u8::from(z))?;
            }
            w.flush()?;
        }
        None => write_responses_csv(create(out, "responses.csv")?, &a.user_labels, &y)?,
    }
    let balance = balance_json(scheme, x, &a)?;
    write_json(
        out,
        "estimates.json",
        &SimulationJson {
            scheme,
            tau: params.tau(),
            estimates,
            errors,
            balance,
        },
    )?;
    echo_config(out, cfg)
}

fn cmd_bench(cfg: &Config, jobs: Option<usize>, out: &Path, json: bool, raw: bool) -> Result<()> {
    let b = &cfg.bench;
    // (network, r label) pairs: one fixed real network, or one synthetic
    // configuration per reconnection rate.
    let networks: Vec<(NetworkSource, Option<f64>)> = match &cfg.network.edges {
        Some(edges) => vec![(NetworkSource::Fixed(Arc::new(load_network(cfg, edges)?.network)), None)],
        None => b
            .reconnect_rates
            .iter()
            .map(|&r| {
                let mut s = cfg.synth.clone();
                s.reconnect_rate = r;
                (NetworkSource::Synthetic(s), Some(r))
            })
            .collect(),
    };
    if b.alphas.is_empty() || networks.is_empty() {
        bail!("empty alpha or reconnection-rate grid");
    }
    let mut summaries: Vec<(RunLabel, McSummary)> = Vec::new();
    let mut records: Vec<(RunLabel, Vec<RunRecord>)> = Vec::new();
    for (network, r) in &networks {
        for &alpha in &b.alphas {
            let exp = ExperimentConfig {
                regenerate_network_per_rep: b.regenerate_network,
                schemes: b.schemes.clone(),
                estimators: b.estimators.clone(),
                replications: b.replications,
                master_seed: cfg.seed,
                car: car_config(cfg)?,
                common_noise: b.common_noise,
                ..ExperimentConfig::new(network.clone(), cfg.model.params(alpha))
            };
            let label = RunLabel { alpha, r: *r };
            let run = run_experiment(&exp, jobs)?;
            let summary = aggregate(exp.params.tau(), &run);
            let failed: usize = summary.cells.iter().map(|c| c.failed_reps).sum();
            if failed > 0 {
                warn!("alpha={alpha} r={r:?}: {failed} failed estimates (see failed_reps)");
            }
            info!("alpha={alpha} r={r:?}: {} cells", summary.cells.len());
            summaries.push((label, summary));
            if raw {
                records.push((label, run));
            }
        }
    }
    write_summary_csv(create(out, "summary.csv")?, &summaries)?;
    if raw {
        write_raw_csv(create(out, "raw.csv")?, &records)?;
    }
    if json {
        let mut w = create(out, "summary.json")?;
        write_summary_json(&mut w, &summaries)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    echo_config(out, cfg)?;
    let rows: usize = summaries.iter().map(|(_, s)| s.cells.len()).sum();
    println!("wrote {rows} summary rows to {}", out.join("summary.csv").display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    if cli.jobs == Some(0) {
        bail!("--jobs must be at least 1");
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Generate(_) => cmd_generate(&cfg, out),
        Command::Cluster(_) => cmd_cluster(&cfg, out),
        Command::Assign(a) => cmd_assign(&cfg, a, out),
        Command::Simulate(_) => cmd_simulate(&cfg, out),
        Command::Bench(_) => cmd_bench(&cfg, cli.jobs, out, cli.json, cli.raw),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
