//! Edge-list ingestion and label-propagation clustering.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{ClusterPartition, Graph};

pub const DEFAULT_MAX_ITERS: usize = 100;

/// Where to read an edge list from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeListSource {
    pub path: PathBuf,
    /// Skip the first non-comment line (e.g. a size line).
    pub has_header: bool,
}

/// A graph with the external vertex ids it was built from.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    /// Dense vertex id -> external id.
    pub ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl LoadedGraph {
    pub fn vertex(&self, external: &str) -> Option<usize> {
        self.index.get(external).copied()
    }
}

/// Reads an edge list from `src.path`.
pub fn read_edge_list(src: &EdgeListSource) -> Result<LoadedGraph> {
    let file = File::open(&src.path)?;
    parse_edge_list(BufReader::new(file), &src.path, src.has_header)
}

/// Parses whitespace-separated edge lines. Lines starting with `#` or `%`
/// and blank lines are skipped; tokens after the first two are ignored.
/// External ids (any token) are mapped to dense ids in order of appearance.
/// `origin` only labels error messages.
pub fn parse_edge_list<R: BufRead>(reader: R, origin: &Path, has_header: bool) -> Result<LoadedGraph> {
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut header_pending = has_header;
    let mut intern = |tok: &str| -> usize {
        if let Some(&id) = index.get(tok) {
            return id;
        }
        let id = ids.len();
        ids.push(tok.to_string());
        index.insert(tok.to_string(), id);
        id
    };
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        match (tokens.next(), tokens.next()) {
            (Some(a), Some(b)) => {
                let (u, v) = (intern(a), intern(b));
                edges.push((u, v));
            }
            _ => {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("expected two vertex ids, found `{trimmed}`"),
                })
            }
        }
    }
    if ids.is_empty() {
        return Err(Error::EmptyInput(format!("{}: no edges found", origin.display())));
    }
    let graph = Graph::new(ids.len(), edges)?;
    let index = ids.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    Ok(LoadedGraph { graph, ids, index })
}

/// Writes `u v` lines with external ids.
pub fn write_edge_list<W: Write>(mut out: W, g: &Graph, ids: Option<&[String]>) -> Result<()> {
    for &(u, v) in g.edges() {
        match ids {
            Some(ids) => writeln!(out, "{} {}", ids[u], ids[v])?,
            None => writeln!(out, "{u} {v}")?,
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads `vertex_id label` lines for the vertices of `loaded`. Every vertex
/// needs exactly one label; labels may be arbitrary tokens.
pub fn parse_label_file<R: BufRead>(reader: R, origin: &Path, loaded: &LoadedGraph) -> Result<ClusterPartition> {
    let n = loaded.graph.num_vertices();
    let mut raw: Vec<Option<String>> = vec![None; n];
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let (Some(vertex), Some(label)) = (tokens.next(), tokens.next()) else {
            return Err(err(lineno + 1, format!("expected `vertex label`, found `{trimmed}`")));
        };
        let Some(i) = loaded.vertex(vertex) else {
            return Err(err(lineno + 1, format!("unknown vertex `{vertex}`")));
        };
        if raw[i].replace(label.to_string()).is_some() {
            return Err(err(lineno + 1, format!("vertex `{vertex}` labelled twice")));
        }
    }
    if let Some(i) = raw.iter().position(Option::is_none) {
        return Err(Error::InvalidPartition(format!(
            "{}: vertex `{}` has no label",
            origin.display(),
            loaded.ids[i]
        )));
    }
    let labels: Vec<String> = raw.into_iter().map(Option::unwrap).collect();
    Ok(ClusterPartition::from_raw_labels(&labels))
}

pub fn read_label_file(path: &Path, loaded: &LoadedGraph) -> Result<ClusterPartition> {
    parse_label_file(BufReader::new(File::open(path)?), path, loaded)
}

/// Reads `vertex_id cluster` lines where clusters are already dense indices
/// `0..m` (as written by [`write_label_file`]), so they line up with the
/// rows of a covariate file. Users are numbered in file order.
pub fn read_cluster_indices(path: &Path) -> Result<(Vec<String>, ClusterPartition)> {
    let reader = BufReader::new(File::open(path)?);
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let parsed = match (tokens.next(), tokens.next()) {
            (Some(v), Some(l)) => l.parse::<usize>().ok().map(|l| (v, l)),
            _ => None,
        };
        let Some((vertex, label)) = parsed else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected `vertex cluster_index`, found `{trimmed}`"),
            });
        };
        ids.push(vertex.to_string());
        labels.push(label);
    }
    if ids.is_empty() {
        return Err(Error::EmptyInput(format!("{}: no labels found", path.display())));
    }
    Ok((ids, ClusterPartition::new(labels)?))
}

/// Writes `vertex_id label` lines.
pub fn write_label_file<W: Write>(mut out: W, part: &ClusterPartition, ids: Option<&[String]>) -> Result<()> {
    for (i, &l) in part.labels().iter().enumerate() {
        match ids {
            Some(ids) => writeln!(out, "{} {l}", ids[i])?,
            None => writeln!(out, "{i} {l}")?,
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LabelPropagation {
    pub partition: ClusterPartition,
    pub converged: bool,
    pub iterations: usize,
}

/// Asynchronous label propagation.
///
/// Every vertex starts with its own label. Each sweep visits the vertices in
/// a fresh random order and gives each the most frequent label among its
/// neighbors; the current label is kept if it is among the most frequent,
/// otherwise ties are broken uniformly. Stops after a sweep without changes
/// or after `max_iters` sweeps. Each label class is split into connected
/// components, and components are numbered by their smallest vertex.
pub fn label_propagation<R: Rng + ?Sized>(g: &Graph, rng: &mut R, max_iters: usize) -> Result<LabelPropagation> {
    let n = g.num_vertices();
    if n == 0 {
        return Err(Error::EmptyInput("label propagation on an empty graph".into()));
    }
    let mut labels: Vec<usize> = (0..n).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut nbr_labels = Vec::new();
    let mut best = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        order.shuffle(rng);
        let mut changed = false;
        for &i in &order {
            let nbrs = g.neighbors(i);
            if nbrs.is_empty() {
                continue;
            }
            nbr_labels.clear();
            nbr_labels.extend(nbrs.iter().map(|&k| labels[k]));
            nbr_labels.sort_unstable();
            best.clear();
            let mut top = 0;
            for run in nbr_labels.chunk_by(|a, b| a == b) {
                match run.len().cmp(&top) {
                    std::cmp::Ordering::Greater => {
                        top = run.len();
                        best.clear();
                        best.push(run[0]);
                    }
                    std::cmp::Ordering::Equal => best.push(run[0]),
                    std::cmp::Ordering::Less => {}
                }
            }
            if best.contains(&labels[i]) {
                continue;
            }
            labels[i] = if best.len() == 1 {
                best[0]
            } else {
                best[rng.random_range(0..best.len())]
            };
            changed = true;
        }
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(LabelPropagation {
        partition: split_components(g, &labels),
        converged,
        iterations,
    })
}

/// Connected components of each label class, numbered by smallest vertex.
fn split_components(g: &Graph, labels: &[usize]) -> ClusterPartition {
    let n = g.num_vertices();
    let mut out = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if out[start] != usize::MAX {
            continue;
        }
        out[start] = next;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for &k in g.neighbors(v) {
                if out[k] == usize::MAX && labels[k] == labels[start] {
                    out[k] = next;
                    stack.push(k);
                }
            }
        }
        next += 1;
    }
    ClusterPartition::new(out).expect("components are dense")
}
